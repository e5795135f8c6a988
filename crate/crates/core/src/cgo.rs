//! Complex frequency pairs and complex geometrical optics solutions
//! `u = e^{iζ·x}(1 + r)` built on a periodic box around the domain.
//!
//! The remainder solves `(-Δ - 2iζ·∇) r = -q(1 + r)` by the fixed point
//! `r ← G_ζ[-q(1 + r)]`, with `G_ζ` the multiplier `1/(|k|² + 2ζ·k)`. The
//! frequency lattice is shifted by half a step along the axis closest to
//! `Im ζ`, which keeps `ζ·k` away from zero.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::geometry::{dot, norm, DomainGrid, Point};
use crate::potential::{sample_profiles, PotentialField, Profile};
use crate::record::{hex, ContentHasher};
use crate::spectral::{k2, SpectralBox};

pub type CVec = [C64; 3];

/// Bilinear product without conjugation.
pub fn cdot(a: &CVec, b: &CVec) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Hermitian length.
pub fn cnorm(a: &CVec) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn cdot_real(a: &CVec, k: &Point) -> C64 {
    a[0] * k[0] + a[1] * k[1] + a[2] * k[2]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZetaPair {
    pub xi: Point,
    pub alpha: Point,
    pub beta: Point,
    pub lambda: f64,
    pub omega: f64,
    pub s_mag: f64,
    pub zeta1: CVec,
    pub zeta2: CVec,
}

/// `ζ₁ = ξ/2 + iλα - sβ`, `ζ₂ = -ξ/2 - iλα - sβ` with `s = (ω²+λ²-|ξ|²/4)^{1/2}`.
pub fn make_zeta_pair(xi: Point, alpha: Point, beta: Point, lambda: f64, omega: f64) -> Result<ZetaPair> {
    if (norm(&alpha, 3) - 1.0).abs() > 1e-10 || (norm(&beta, 3) - 1.0).abs() > 1e-10 {
        return invalid("alpha and beta must be unit vectors");
    }
    let tol = 1e-10 * (1.0 + norm(&xi, 3));
    if dot(&xi, &alpha).abs() > tol || dot(&xi, &beta).abs() > tol || dot(&alpha, &beta).abs() > 1e-10 {
        return invalid("xi, alpha and beta must be pairwise orthogonal");
    }
    if !(lambda >= 1.0) {
        return invalid(format!("lambda must be at least 1, got {lambda}"));
    }
    if !(omega > 1.0) {
        return invalid(format!("omega must exceed 1, got {omega}"));
    }
    let rad = omega * omega + lambda * lambda - 0.25 * dot(&xi, &xi);
    if !(rad > 0.0) {
        return invalid(format!("radicand omega^2 + lambda^2 - |xi|^2/4 = {rad} is not positive"));
    }
    let s = rad.sqrt();
    let z = |sx: f64, sl: f64| -> CVec {
        std::array::from_fn(|d| C64::new(sx * 0.5 * xi[d] - s * beta[d], sl * lambda * alpha[d]))
    };
    Ok(ZetaPair {
        xi,
        alpha,
        beta,
        lambda,
        omega,
        s_mag: s,
        zeta1: z(1.0, 1.0),
        zeta2: z(-1.0, -1.0),
    })
}

impl ZetaPair {
    /// Same pair with `λ` scaled by `1 + rel`.
    pub fn perturbed(&self, rel: f64) -> Result<ZetaPair> {
        make_zeta_pair(self.xi, self.alpha, self.beta, self.lambda * (1.0 + rel), self.omega)
    }

    /// `(ω² + 2λ²)^{1/2}`, the common length of both vectors.
    pub fn magnitude(&self) -> f64 {
        (self.omega * self.omega + 2.0 * self.lambda * self.lambda).sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgoOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Box side is `2R·margin`.
    pub box_margin: f64,
    /// Symbol floor relative to `|ζ|²`.
    pub floor_rel: f64,
    /// Largest tolerated fraction of modes below the floor.
    pub max_floor_fraction: f64,
}

impl Default for CgoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            box_margin: 1.5,
            floor_rel: 1e-8,
            max_floor_fraction: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgoSolution {
    pub zeta: CVec,
    pub sbox: Arc<SpectralBox>,
    pub shift: Point,
    /// Remainder on the box nodes.
    pub r: Vec<C64>,
    pub iterations: usize,
    /// `‖-Δr - 2iζ·∇r + q(1+r)‖ / ‖q(1+r)‖`, by spectral differentiation.
    pub residual: f64,
    /// Hash of the potential and `ζ`.
    pub id: String,
    grid_hash: [u8; 32],
}

fn lattice_shift(sbox: &SpectralBox, zeta: &CVec) -> Point {
    let mut axis = 0;
    for d in 1..3 {
        if zeta[d].im.abs() > zeta[axis].im.abs() {
            axis = d;
        }
    }
    let mut shift = [0.0; 3];
    shift[axis] = PI / sbox.side(axis);
    shift
}

fn symbol(zeta: &CVec, k: &Point) -> C64 {
    k2(k) + 2.0 * cdot_real(zeta, k)
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves for the remainder on a periodic box of side `2R·margin`.
pub fn solve_remainder(grid: &DomainGrid, q: &PotentialField, zeta: CVec, opts: &CgoOptions) -> Result<CgoSolution> {
    if grid.dim() != 3 {
        return invalid("CGO solutions need n = 3");
    }
    q.check_grid(grid)?;
    let sbox = Arc::new(SpectralBox::around(grid, 2.0 * grid.radius() * opts.box_margin)?);
    let shift = lattice_shift(&sbox, &zeta);
    let mag2 = cnorm(&zeta).powi(2);
    let floor = opts.floor_rel * mag2;
    let mut small = 0usize;
    let green: Vec<C64> = (0..sbox.len())
        .map(|i| {
            let s = symbol(&zeta, &sbox.wavevector(i, &shift));
            if s.norm() < floor {
                small += 1;
                C64::new(0.0, 0.0)
            } else {
                1.0 / s
            }
        })
        .collect();
    if small as f64 > opts.max_floor_fraction * sbox.len() as f64 {
        return Err(Error::ResonantSymbol {
            small,
            total: sbox.len(),
            floor,
        });
    }
    if small > 0 {
        log::debug!("{small} modes below the symbol floor were zeroed");
    }
    let qb = sbox.embed(grid, q.values());
    let mut r = vec![C64::new(0.0, 0.0); sbox.len()];
    let mut iterations = 0;
    if qb.iter().any(|v| v.norm() > 0.0) {
        let mut converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            let mut next: Vec<C64> = qb.iter().zip(&r).map(|(qv, rv)| -qv * (1.0 + rv)).collect();
            sbox.forward(&mut next, &shift);
            next.iter_mut().zip(&green).for_each(|(v, g)| *v *= g);
            sbox.inverse(&mut next, &shift);
            let nn = l2(&next);
            let dn = l2(&next.iter().zip(&r).map(|(a, b)| a - b).collect::<Vec<_>>());
            if !nn.is_finite() || nn > 1e150 {
                break;
            }
            r = next;
            if dn <= opts.tol * nn.max(1e-300) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                iterations,
                detail: format!("CGO remainder with |zeta| = {:.4e}", mag2.sqrt()),
            });
        }
    }
    let mut sol = CgoSolution {
        zeta,
        sbox,
        shift,
        r,
        iterations,
        residual: 0.0,
        id: {
            let mut hs = ContentHasher::new();
            hs.tag("cgo").digest(q.hash());
            for z in &zeta {
                hs.f64(z.re).f64(z.im);
            }
            hex(&hs.finish())[..12].to_string()
        },
        grid_hash: *grid.hash(),
    };
    sol.residual = sol.conjugated_residual(&qb);
    Ok(sol)
}

/// Solves for `ζ`, retrying with `λ` perturbed by a relative 1e-6 when the
/// lattice hits the symbol's zero set.
pub fn solve_pair_member(
    grid: &DomainGrid,
    q: &PotentialField,
    pair: &ZetaPair,
    second: bool,
    opts: &CgoOptions,
) -> Result<(CgoSolution, ZetaPair)> {
    let mut p = pair.clone();
    for attempt in 0..4 {
        let zeta = if second { p.zeta2 } else { p.zeta1 };
        match solve_remainder(grid, q, zeta, opts) {
            Err(Error::ResonantSymbol { small, .. }) if attempt < 3 => {
                log::warn!("resonant symbol ({small} modes), perturbing lambda");
                p = p.perturbed(1e-6)?;
            }
            other => return other.map(|s| (s, p)),
        }
    }
    unreachable!()
}

impl CgoSolution {
    pub fn magnitude(&self) -> f64 {
        cnorm(&self.zeta)
    }

    fn check_grid(&self, grid: &DomainGrid) -> Result<()> {
        grid.check_same(&self.grid_hash, "CGO solution")
    }

    fn conjugated_residual(&self, qb: &[C64]) -> f64 {
        let rhs: Vec<C64> = qb.iter().zip(&self.r).map(|(q, r)| q * (1.0 + r)).collect();
        let denom = l2(&rhs);
        if denom == 0.0 {
            return 0.0;
        }
        let lr = self.sbox.apply_multiplier(&self.r, &self.shift, |k| symbol(&self.zeta, k));
        l2(&lr.iter().zip(&rhs).map(|(a, b)| a + b).collect::<Vec<_>>()) / denom
    }

    /// `‖r‖_{H^s}` over the periodic box.
    pub fn remainder_sobolev_norm(&self, s: f64) -> f64 {
        self.sbox.sobolev_norm(&self.r, s, &self.shift)
    }

    fn phase(&self, x: &Point) -> C64 {
        (C64::i() * cdot_real(&self.zeta, x)).exp()
    }

    /// Spectral evaluation of `r` and `∇r` displaced by `delta` from every node.
    fn shifted(&self, delta: &Point) -> (Vec<C64>, [Vec<C64>; 3]) {
        let mut hat = self.r.clone();
        self.sbox.forward(&mut hat, &self.shift);
        let ks = self.sbox.wavevectors(&self.shift);
        let go = |m: &dyn Fn(&Point) -> C64| {
            let mut d: Vec<C64> = hat.iter().zip(&ks).map(|(v, k)| v * m(k)).collect();
            self.sbox.inverse(&mut d, &self.shift);
            d
        };
        let tr = |k: &Point| (C64::i() * dot(k, delta)).exp();
        let val = go(&|k| tr(k));
        let grad = std::array::from_fn(|a| go(&|k| C64::i() * k[a] * tr(k)));
        (val, grad)
    }

    /// `u` at the cell centers of Ω.
    pub fn u_on_grid(&self, grid: &DomainGrid) -> Result<Vec<C64>> {
        self.check_grid(grid)?;
        Ok((0..grid.n_cells())
            .map(|c| self.phase(&grid.cell_center(c)) * (1.0 + self.r[self.sbox.node_of_cell(grid, c)]))
            .collect())
    }

    /// `1 + r` at the cell centers of Ω.
    pub fn amplitude_on_grid(&self, grid: &DomainGrid) -> Result<Vec<C64>> {
        self.check_grid(grid)?;
        Ok((0..grid.n_cells())
            .map(|c| 1.0 + self.r[self.sbox.node_of_cell(grid, c)])
            .collect())
    }

    /// `(u, ∂_ν u, 1 + r)` at the boundary face centers, by spectral interpolation.
    pub fn boundary_traces(&self, grid: &DomainGrid) -> Result<(Vec<C64>, Vec<C64>, Vec<C64>)> {
        self.check_grid(grid)?;
        let nf = grid.n_faces();
        let mut u = vec![C64::new(0.0, 0.0); nf];
        let mut du = vec![C64::new(0.0, 0.0); nf];
        let mut amp = vec![C64::new(0.0, 0.0); nf];
        let h = grid.h();
        for axis in 0..3 {
            for side in [-1i8, 1] {
                let faces: Vec<usize> = (0..nf)
                    .filter(|&f| grid.faces()[f].axis == axis && grid.faces()[f].side == side)
                    .collect();
                if faces.is_empty() {
                    continue;
                }
                let mut delta = [0.0; 3];
                delta[axis] = 0.5 * h * side as f64;
                let (rv, rg) = self.shifted(&delta);
                for f in faces {
                    let face = &grid.faces()[f];
                    let node = self.sbox.node_of_cell(grid, face.cell);
                    let e = self.phase(&face.center);
                    let a = 1.0 + rv[node];
                    let mut d = C64::new(0.0, 0.0);
                    for b in 0..3 {
                        d += face.normal[b] * (C64::i() * self.zeta[b] * a + rg[b][node]);
                    }
                    u[f] = e * a;
                    du[f] = e * d;
                    amp[f] = a;
                }
            }
        }
        Ok((u, du, amp))
    }

    /// Discrete H¹ (`order = 1`) or H² (`order = 2`) norm of `u` on Ω.
    pub fn sobolev_norm_on_domain(&self, grid: &DomainGrid, order: u32) -> Result<f64> {
        self.check_grid(grid)?;
        if !(1..=2).contains(&order) {
            return invalid("order must be 1 or 2");
        }
        let ks = self.sbox.wavevectors(&self.shift);
        let mut hat = self.r.clone();
        self.sbox.forward(&mut hat, &self.shift);
        let deriv = |m: &dyn Fn(&Point) -> C64| {
            let mut d: Vec<C64> = hat.iter().zip(&ks).map(|(v, k)| v * m(k)).collect();
            self.sbox.inverse(&mut d, &self.shift);
            d
        };
        let d1: [Vec<C64>; 3] = std::array::from_fn(|a| deriv(&|k| C64::i() * k[a]));
        let d2: Vec<Vec<C64>> = if order == 2 {
            (0..9).map(|ab| deriv(&|k| C64::from(-k[ab / 3] * k[ab % 3]))).collect()
        } else {
            Vec::new()
        };
        let z = self.zeta;
        let mut acc = 0.0;
        for c in 0..grid.n_cells() {
            let node = self.sbox.node_of_cell(grid, c);
            let e = self.phase(&grid.cell_center(c));
            let a = 1.0 + self.r[node];
            acc += (e * a).norm_sqr();
            for i in 0..3 {
                acc += (e * (C64::i() * z[i] * a + d1[i][node])).norm_sqr();
            }
            if order == 2 {
                for i in 0..3 {
                    for j in 0..3 {
                        let v = -z[i] * z[j] * a
                            + C64::i() * z[i] * d1[j][node]
                            + C64::i() * z[j] * d1[i][node]
                            + d2[3 * i + j][node];
                        acc += (e * v).norm_sqr();
                    }
                }
            }
        }
        Ok((acc * grid.cell_volume()).sqrt())
    }
}

/// `‖r‖_{H^s}·|ζ| / ‖q‖_{H^s}` against `C₁`; a zero potential gives ratio 0.
pub fn verify_remainder_bound(sol: &CgoSolution, q: &PotentialField, grid: &DomainGrid, c1: f64) -> Result<(bool, f64)> {
    let qn = q.sobolev_norm(grid)?;
    if qn == 0.0 {
        return Ok((true, 0.0));
    }
    let ratio = sol.remainder_sobolev_norm(q.s() as f64) * sol.magnitude() / qn;
    Ok((ratio <= c1, ratio))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormBound {
    pub norm: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Discrete H^order norm of `u` against `C(ω²+2λ²)^{order/2} e^{λR}`.
pub fn cgo_norm_bounds(sol: &CgoSolution, grid: &DomainGrid, order: u32, c: f64) -> Result<NormBound> {
    let norm = sol.sobolev_norm_on_domain(grid, order)?;
    let lambda = sol.zeta.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let mag2 = cnorm(&sol.zeta).powi(2);
    let bound = c * mag2.powf(order as f64 / 2.0) * (lambda * grid.radius()).exp();
    Ok(NormBound {
        norm,
        bound,
        holds: norm <= bound,
    })
}

/// Ten smooth potentials supported well inside the unit cube: Gaussian bumps
/// and windowed plane waves of growing strength.
pub fn calibration_suite(grid: &DomainGrid, s: u32) -> Result<Vec<PotentialField>> {
    let mut out = Vec::with_capacity(10);
    for (i, amp) in [25.0, 100.0, 400.0, 1600.0, 6400.0].into_iter().enumerate() {
        let t = i as f64;
        let g = Profile::Gaussian {
            center: [0.08 * (t - 2.0), 0.05 * (2.0 - t), 0.0],
            width: 0.10 + 0.01 * t,
            amplitude: amp,
        };
        let w = Profile::Trig {
            wavevector: [3.0 + t, 2.0, 1.0 + 0.5 * t],
            phase: 0.3 * t,
            center: [0.0, 0.05 * t - 0.1, 0.0],
            width: 0.14,
            amplitude: -amp,
        };
        for p in [g, w] {
            let q = sample_profiles(grid, &[p], s, f64::MAX)?;
            let m = q.sobolev_norm(grid)?;
            out.push(PotentialField::new(grid, q.values().to_vec(), s, m.max(1e-12))?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationEntry {
    pub q_id: String,
    pub q_norm: f64,
    /// Smallest |ζ| on the search grid at which the iteration converged.
    pub zeta_min: f64,
    /// Largest `‖r‖·|ζ|/‖q‖` seen above the threshold.
    pub worst_ratio: f64,
    /// Largest `‖u‖_{H^k}/((ω²+2λ²)^{k/2}e^{λR})` for k = 1, 2.
    pub worst_norm_ratio: f64,
}

/// Calibrates `C₁`, `C₂` and the norm constant on `suite` with `ξ = 0`,
/// `α = e₃`, `β = e₁`, scanning `λ` over `lambdas` in increasing order.
pub fn calibrate(
    grid: &DomainGrid,
    suite: &[PotentialField],
    omega: f64,
    lambdas: &[f64],
    opts: &CgoOptions,
) -> Result<(CgoConstants, Vec<CalibrationEntry>)> {
    let mut entries = Vec::with_capacity(suite.len());
    for q in suite {
        let qn = q.sobolev_norm(grid)?;
        let mut entry = CalibrationEntry {
            q_id: q.id(),
            q_norm: qn,
            zeta_min: f64::INFINITY,
            worst_ratio: 0.0,
            worst_norm_ratio: 0.0,
        };
        for &lambda in lambdas {
            let pair = make_zeta_pair([0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], lambda, omega)?;
            let sol = match solve_pair_member(grid, q, &pair, false, opts) {
                Ok((sol, _)) => sol,
                Err(Error::NonConvergence { .. }) => {
                    entry.zeta_min = f64::INFINITY;
                    entry.worst_ratio = 0.0;
                    entry.worst_norm_ratio = 0.0;
                    continue;
                }
                Err(e) => return Err(e),
            };
            entry.zeta_min = entry.zeta_min.min(sol.magnitude());
            let (_, ratio) = verify_remainder_bound(&sol, q, grid, f64::INFINITY)?;
            entry.worst_ratio = entry.worst_ratio.max(ratio);
            for order in [1, 2] {
                let nb = cgo_norm_bounds(&sol, grid, order, 1.0)?;
                entry.worst_norm_ratio = entry.worst_norm_ratio.max(nb.norm / nb.bound);
            }
        }
        if !entry.zeta_min.is_finite() {
            return Err(Error::NonConvergence {
                iterations: opts.max_iter,
                detail: format!("potential {} did not converge on the calibration range", entry.q_id),
            });
        }
        entries.push(entry);
    }
    // Entries converging already at the first λ only bound their threshold from above.
    let floor = make_zeta_pair([0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], lambdas[0], omega)?.magnitude();
    let genuine: Vec<&CalibrationEntry> = entries.iter().filter(|e| e.zeta_min > floor * (1.0 + 1e-12)).collect();
    let pool = if genuine.is_empty() { entries.iter().collect() } else { genuine };
    let c2 = pool.iter().map(|e| e.zeta_min / e.q_norm).fold(0.0, f64::max);
    let c1 = 1.5 * entries.iter().map(|e| e.worst_ratio).fold(0.0, f64::max);
    let c_norm = 1.5 * entries.iter().map(|e| e.worst_norm_ratio).fold(0.0, f64::max);
    Ok((CgoConstants { c1, c2, c_norm }, entries))
}

/// Calibrated constants, frozen from `calibrate` on the coarse calibration suite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgoConstants {
    pub c1: f64,
    pub c2: f64,
    /// Constant of the H¹/H² growth bounds.
    pub c_norm: f64,
}

/// Frozen from `calibrate(h = 1/16, ω = 2, λ ∈ [1, 100])` on `calibration_suite(s = 2)`.
pub const FROZEN: CgoConstants = CgoConstants {
    c1: 0.8414110006720601,
    c2: 2.2215e-3,
    c_norm: 2.485660467017267,
};
