//! Fourier modes of a potential difference from boundary data, the Green
//! identity behind them, and an empirical analytic-continuation probe.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cgo::{solve_pair_member, CgoOptions, CgoSolution, ZetaPair};
use crate::dn::DnOperator;
use crate::error::{invalid, Error, Result};
use crate::forward::{neumann_trace_with, ForwardSolver, SolverOptions, TraceScheme};
use crate::geometry::{dot, norm, BoundaryPartition, DomainGrid, Point};
use crate::potential::PotentialField;

/// `∫ g e^{-iξ·x} dx` by midpoint quadrature.
pub fn fourier_transform_at(grid: &DomainGrid, values: &[f64], xi: &Point) -> Result<C64> {
    if values.len() != grid.n_cells() {
        return Err(Error::GridMismatch("field length does not match grid".into()));
    }
    let acc: C64 = grid
        .cell_centers()
        .iter()
        .zip(values)
        .map(|(x, v)| C64::from_polar(*v, -dot(xi, x)))
        .sum();
    Ok(acc * grid.cell_volume())
}

/// `∫ dq · u₂ · v̄ dx` over Ω.
pub fn volume_pairing(grid: &DomainGrid, dq: &[f64], u2: &[C64], v: &[C64]) -> Result<C64> {
    if dq.len() != grid.n_cells() || u2.len() != dq.len() || v.len() != dq.len() {
        return Err(Error::GridMismatch("field length does not match grid".into()));
    }
    let acc: C64 = dq.iter().zip(u2).zip(v).map(|((d, a), b)| d * a * b.conj()).sum();
    Ok(acc * grid.cell_volume())
}

/// `∫ g · v̄ dS` over the listed faces.
fn face_pairing(grid: &DomainGrid, faces: &[usize], g: &[C64], v: &[C64]) -> C64 {
    faces.iter().map(|&f| g[f] * v[f].conj() * grid.faces()[f].area).sum()
}

/// `∂_ν w` on every face for `w = u₁ - u₂`, where `u_j` solves the
/// Helmholtz problem with potential `q_j` and Dirichlet data `f`.
pub fn flux_difference(
    grid: &DomainGrid,
    q1: &PotentialField,
    q2: &PotentialField,
    omega: f64,
    f: &[C64],
    opts: SolverOptions,
) -> Result<Vec<C64>> {
    let s1 = ForwardSolver::new(grid, q1, omega, opts)?;
    let s2 = ForwardSolver::new(grid, q2, omega, opts)?;
    let d1 = neumann_trace_with(grid, &s1.solve(f)?, f, TraceScheme::Flux)?;
    let d2 = neumann_trace_with(grid, &s2.solve(f)?, f, TraceScheme::Flux)?;
    Ok(d1.iter().zip(&d2).map(|(a, b)| a - b).collect())
}

#[derive(Clone, Debug)]
pub struct GreenIdentity {
    pub volume: C64,
    pub boundary: C64,
    pub residual: f64,
}

/// Both sides of `∫(q₁-q₂)u₂v̄ = ∫_{∂Ω} ∂_ν(u₁-u₂)v̄` with `v`, `u₂` the
/// CGO solutions for `ζ₁` on `q₁` and `ζ₂` on `q₂`.
pub fn green_identity_residual(
    grid: &DomainGrid,
    q1: &PotentialField,
    q2: &PotentialField,
    omega: f64,
    pair: &ZetaPair,
    cgo: &CgoOptions,
    solver: SolverOptions,
) -> Result<GreenIdentity> {
    if pair.omega != omega {
        return invalid("zeta pair built for a different frequency");
    }
    let (v, _) = solve_pair_member(grid, q1, pair, false, cgo)?;
    let (u2, _) = solve_pair_member(grid, q2, pair, true, cgo)?;
    let (vf, _, _) = v.boundary_traces(grid)?;
    let (f, _, _) = u2.boundary_traces(grid)?;
    let dq = q1.difference(q2)?;
    let volume = volume_pairing(grid, &dq, &u2.u_on_grid(grid)?, &v.u_on_grid(grid)?)?;
    let all: Vec<usize> = (0..grid.n_faces()).collect();
    let boundary = face_pairing(grid, &all, &flux_difference(grid, q1, q2, omega, &f, solver)?, &vf);
    let residual = (volume - boundary).norm() / volume.norm().max(boundary.norm()).max(1e-30);
    Ok(GreenIdentity {
        volume,
        boundary,
        residual,
    })
}

/// Unit `α` and `β` completing `ξ` to an orthogonal frame, with `α` the
/// normalized projection of `alpha0` onto `ξ^⊥`.
pub fn frame_for(xi: &Point, alpha0: &Point) -> Result<(Point, Point)> {
    let xn = norm(xi, 3);
    let e = if xn > 0.0 {
        [xi[0] / xn, xi[1] / xn, xi[2] / xn]
    } else {
        [0.0; 3]
    };
    let proj = |a: &Point| {
        let t = dot(a, &e);
        [a[0] - t * e[0], a[1] - t * e[1], a[2] - t * e[2]]
    };
    let mut a = proj(alpha0);
    if norm(&a, 3) < 1e-8 {
        let fallback = if e[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        a = proj(&fallback);
    }
    let an = norm(&a, 3);
    let alpha = [a[0] / an, a[1] / an, a[2] / an];
    let mut b = if xn > 0.0 {
        cross(&alpha, &e)
    } else {
        let seed = if alpha[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        cross(&alpha, &seed)
    };
    let bn = norm(&b, 3);
    b.iter_mut().for_each(|x| *x /= bn);
    Ok((alpha, b))
}

fn cross(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// `(ω²+2λ²)^{3/2} e^{2λR}`, the growth factor of the data term.
pub fn data_growth(pair: &ZetaPair, radius: f64) -> f64 {
    pair.magnitude().powi(3) * (2.0 * pair.lambda * radius).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierModeEstimate {
    pub xi: Point,
    pub lambda: f64,
    pub value: C64,
    pub bound_data_term: f64,
    pub bound_lambda_term: f64,
    pub cgo_ids: (String, String),
}

impl FourierModeEstimate {
    pub fn bound(&self) -> f64 {
        self.bound_data_term + self.bound_lambda_term
    }

    /// Smallest constant for which `|value - truth|` stays within the bounds.
    pub fn required_constant(&self, truth: C64, c: f64) -> f64 {
        (self.value - truth).norm() * c / self.bound()
    }
}

fn check_pair_inputs(grid: &DomainGrid, pair: &ZetaPair, part: &BoundaryPartition, dn_diff: &DnOperator) -> Result<()> {
    grid.check_same(&part.grid_hash, "partition")?;
    grid.check_same(dn_diff.grid_hash(), "DN difference")?;
    if norm(&pair.xi, 3) > pair.lambda {
        return invalid(format!("|xi| = {} exceeds lambda = {}", norm(&pair.xi, 3), pair.lambda));
    }
    if dot(&pair.xi, &pair.alpha).abs() > 1e-10 * norm(&pair.xi, 3).max(1.0) {
        return invalid("xi is not orthogonal to alpha");
    }
    if (0..3).any(|d| (pair.alpha[d] - part.alpha[d]).abs() > 1e-12) {
        return invalid("partition built for a different alpha");
    }
    match dn_diff.restriction() {
        Some((eps, alpha)) if eps == part.epsilon && alpha == part.alpha => {}
        _ => return invalid("DN difference must be restricted to the partition's minus set"),
    }
    if dn_diff.omega() != pair.omega {
        return invalid("DN difference at a different frequency");
    }
    Ok(())
}

fn check_cgo(sol: &CgoSolution, zeta: &[C64; 3]) -> Result<()> {
    if sol.zeta != *zeta {
        return invalid("CGO solution was built for a different zeta");
    }
    Ok(())
}

/// Estimates `(q₁-q₂)^(ξ)` from the measured part of the boundary pairing.
/// `dn_gap` is the fractional operator norm of `dn_diff`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_fourier_mode(
    grid: &DomainGrid,
    pair: &ZetaPair,
    dn_diff: &DnOperator,
    dn_gap: f64,
    v: &CgoSolution,
    u2: &CgoSolution,
    part: &BoundaryPartition,
    c: f64,
) -> Result<FourierModeEstimate> {
    check_pair_inputs(grid, pair, part, dn_diff)?;
    check_cgo(v, &pair.zeta1)?;
    check_cgo(u2, &pair.zeta2)?;
    let (vf, _, _) = v.boundary_traces(grid)?;
    let (f, _, _) = u2.boundary_traces(grid)?;
    let g = dn_diff.apply(&f)?;
    let value: C64 = dn_diff
        .row_faces()
        .iter()
        .zip(&g)
        .map(|(&face, gi)| gi * vf[face].conj() * grid.faces()[face].area)
        .sum();
    Ok(FourierModeEstimate {
        xi: pair.xi,
        lambda: pair.lambda,
        value,
        bound_data_term: c * data_growth(pair, grid.radius()) * dn_gap,
        bound_lambda_term: c / pair.lambda.sqrt(),
        cgo_ids: (v.id.clone(), u2.id.clone()),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTermCheck {
    pub minus_term: f64,
    pub est99_bound: f64,
    pub holds: bool,
    /// `‖e^{λα·x}v̄‖` and `‖1+r̄₁‖` on the plus set.
    pub plus_weighted: f64,
    pub plus_amplitude: f64,
}

/// Evaluates the measured minus-set pairing against its a priori bound.
#[allow(clippy::too_many_arguments)]
pub fn boundary_term_check(
    grid: &DomainGrid,
    pair: &ZetaPair,
    v: &CgoSolution,
    part: &BoundaryPartition,
    dn_diff: &DnOperator,
    dn_gap: f64,
    u2_trace: &[C64],
    c: f64,
) -> Result<BoundaryTermCheck> {
    check_pair_inputs(grid, pair, part, dn_diff)?;
    check_cgo(v, &pair.zeta1)?;
    let (vf, _, amp) = v.boundary_traces(grid)?;
    let g = dn_diff.apply(u2_trace)?;
    let minus: C64 = dn_diff
        .row_faces()
        .iter()
        .zip(&g)
        .map(|(&face, gi)| gi * vf[face].conj() * grid.faces()[face].area)
        .sum();
    let est99_bound = c * data_growth(pair, grid.radius()) * dn_gap;
    let mut weighted = 0.0;
    let mut amplitude = 0.0;
    for &f in &part.plus_eps {
        let face = &grid.faces()[f];
        let w = (pair.lambda * dot(&pair.alpha, &face.center)).exp();
        weighted += (w * vf[f].conj()).norm_sqr() * face.area;
        amplitude += amp[f].conj().norm_sqr() * face.area;
    }
    Ok(BoundaryTermCheck {
        minus_term: minus.norm(),
        est99_bound,
        holds: minus.norm() <= est99_bound,
        plus_weighted: weighted.sqrt(),
        plus_amplitude: amplitude.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlusFaceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `∫_{∂Ω₊,ε} ∂_ν(u₁-u₂) v̄ dS`, available only with synthetic data.
    pub plus_term: C64,
}

/// Carleman bound on the unmeasured plus set, checked with the full flux
/// difference `dflux` of a synthetic pair.
pub fn plus_face_check(
    grid: &DomainGrid,
    pair: &ZetaPair,
    part: &BoundaryPartition,
    dq: &[f64],
    u2: &CgoSolution,
    v: &CgoSolution,
    dflux: &[C64],
) -> Result<PlusFaceCheck> {
    grid.check_same(&part.grid_hash, "partition")?;
    check_cgo(u2, &pair.zeta2)?;
    check_cgo(v, &pair.zeta1)?;
    if dflux.len() != grid.n_faces() || dq.len() != grid.n_cells() {
        return Err(Error::GridMismatch("field length does not match grid".into()));
    }
    let lambda = pair.lambda;
    let weight = |x: &Point| (-lambda * dot(&pair.alpha, x)).exp();
    let face_norm = |set: &[usize]| -> f64 {
        set.iter()
            .map(|&f| {
                let face = &grid.faces()[f];
                (weight(&face.center) * dflux[f]).norm_sqr() * face.area
            })
            .sum::<f64>()
            .sqrt()
    };
    let u = u2.u_on_grid(grid)?;
    let vol = grid
        .cell_centers()
        .iter()
        .zip(dq.iter().zip(&u))
        .map(|(x, (d, uu))| (weight(x) * d * uu).norm_sqr())
        .sum::<f64>()
        * grid.cell_volume();
    let inf_minus = part
        .minus
        .iter()
        .map(|&f| dot(&pair.alpha, &grid.faces()[f].normal))
        .fold(0.0, f64::min);
    let lhs = face_norm(&part.plus_eps);
    let rhs = (vol.sqrt() / lambda.sqrt() + (-inf_minus).sqrt() * face_norm(&part.minus_eps)) / part.epsilon.sqrt();
    let (vf, _, _) = v.boundary_traces(grid)?;
    Ok(PlusFaceCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
        plus_term: face_pairing(grid, &part.plus_eps, dflux, &vf),
    })
}

/// Estimated modes as CSV.
pub fn write_modes_csv<W: Write>(modes: &[FourierModeEstimate], mut out: W) -> Result<()> {
    writeln!(out, "xi0,xi1,xi2,lambda,re,im,bound_data,bound_lambda")?;
    for m in modes {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            m.xi[0], m.xi[1], m.xi[2], m.lambda, m.value.re, m.value.im, m.bound_data_term, m.bound_lambda_term
        )?;
    }
    Ok(())
}

/// Lattice modes `2πk/side` with `0 < |ξ| ≤ rho`, plus the zero mode.
pub fn mode_lattice(side: f64, rho: f64) -> Vec<Point> {
    let dk = 2.0 * std::f64::consts::PI / side;
    let m = (rho / dk).floor() as i64;
    let mut out = Vec::new();
    for i in -m..=m {
        for j in -m..=m {
            for k in -m..=m {
                let xi = [i as f64 * dk, j as f64 * dk, k as f64 * dk];
                if norm(&xi, 3) <= rho * (1.0 + 1e-12) {
                    out.push(xi);
                }
            }
        }
    }
    out
}

/// Truncated Fourier series `side^{-3} Σ ĝ(ξ) e^{iξ·x}` at the cell centers.
pub fn reconstruct(grid: &DomainGrid, modes: &[FourierModeEstimate], side: f64) -> Vec<f64> {
    let scale = side.powi(-3);
    grid.cell_centers()
        .iter()
        .map(|x| {
            modes
                .iter()
                .map(|m| (m.value * C64::from_polar(1.0, dot(&m.xi, x))).re)
                .sum::<f64>()
                * scale
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationResult {
    pub theta_emp: f64,
    /// `max_B |p - f| / max_B |f|` for the unscaled input.
    pub extension_error: f64,
    pub max_ball: f64,
    pub sup_cone: f64,
    pub condition: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ContinuationOptions {
    pub degree: usize,
    /// Samples per coefficient.
    pub oversampling: usize,
    pub seed: u64,
    pub max_condition: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            degree: 8,
            oversampling: 4,
            seed: 7,
            max_condition: 1e14,
        }
    }
}

fn monomials(degree: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for t in 0..=degree {
        for a in 0..=t {
            for b in 0..=t - a {
                out.push([a, b, t - a - b]);
            }
        }
    }
    out
}

fn sample_cap(rng: &mut ChaCha8Rng, frame: &[Point; 3], half_angle: f64, rho: f64) -> Point {
    let cos_min = half_angle.cos();
    let c = 1.0 - rng.random::<f64>() * (1.0 - cos_min);
    let s = (1.0 - c * c).max(0.0).sqrt();
    let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let mut t = rho * rng.random::<f64>().cbrt();
    if rng.random::<bool>() {
        t = -t;
    }
    std::array::from_fn(|d| t * (c * frame[0][d] + s * phi.cos() * frame[1][d] + s * phi.sin() * frame[2][d]))
}

/// Least-squares polynomial continuation of `fhat` from the double cone of
/// half-angle `half_angle` around `±axis`, intersected with `B(0, rho)`, to
/// the whole ball. `theta_emp` is the largest exponent for which
/// `max_B|p| ≤ e^{3ρ(1-θ)} sup_V|f|^θ` holds over amplitude-scaled copies.
pub fn vessella_continuation_test<F>(
    fhat: F,
    axis: &Point,
    half_angle: f64,
    rho: f64,
    opts: &ContinuationOptions,
) -> Result<ContinuationResult>
where
    F: Fn(&Point) -> C64,
{
    if !(half_angle > 0.0 && half_angle < std::f64::consts::FRAC_PI_2) || !(rho > 0.0) {
        return invalid("cone half-angle must lie in (0, π/2) and rho must be positive");
    }
    let an = norm(axis, 3);
    if !(an > 0.0) {
        return invalid("cone axis must be nonzero");
    }
    let a = [axis[0] / an, axis[1] / an, axis[2] / an];
    let (b, c) = {
        let (p, q) = frame_for(&a, &[1.0, 0.0, 0.0])?;
        (p, q)
    };
    let frame = [a, b, c];
    let mono = monomials(opts.degree);
    let n_coef = mono.len();
    let n_samp = n_coef * opts.oversampling.max(1);
    if n_samp < n_coef {
        return Err(Error::IllConditioned(format!("{n_samp} samples for {n_coef} coefficients")));
    }
    // Cone-adapted coordinates: axial scaled by ρ, transverse by ρ·tan(half-angle).
    let tr = rho * half_angle.tan();
    let local = |x: &Point| -> Point { [dot(x, &frame[0]) / rho, dot(x, &frame[1]) / tr, dot(x, &frame[2]) / tr] };
    let row = |x: &Point| -> Vec<f64> {
        let y = local(x);
        mono.iter().map(|m| y[0].powi(m[0] as i32) * y[1].powi(m[1] as i32) * y[2].powi(m[2] as i32)).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pts: Vec<Point> = (0..n_samp).map(|_| sample_cap(&mut rng, &frame, half_angle, rho)).collect();
    let vals: Vec<C64> = pts.iter().map(&fhat).collect();
    let vand = Mat::from_fn(n_samp, n_coef, |i, j| row(&pts[i])[j]);
    let svd = vand
        .thin_svd()
        .map_err(|e| Error::IllConditioned(format!("SVD failed: {e:?}")))?;
    let sv: Vec<f64> = (0..n_coef).map(|i| svd.S()[i]).collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = smax / smin;
    if !(condition <= opts.max_condition) {
        return Err(Error::IllConditioned(format!(
            "continuation fit condition {condition:.3e} at degree {}",
            opts.degree
        )));
    }
    let u = svd.U();
    let vmat = svd.V();
    let coef: Vec<C64> = {
        let mut tmp = vec![C64::new(0.0, 0.0); n_coef];
        for k in 0..n_coef {
            let proj: C64 = (0..n_samp).map(|i| vals[i] * u[(i, k)]).sum();
            tmp[k] = proj / sv[k];
        }
        (0..n_coef).map(|j| (0..n_coef).map(|k| tmp[k] * vmat[(j, k)]).sum()).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let ball: Vec<Point> = (0..4 * n_samp)
        .map(|_| {
            let d = sample_cap(&mut rng, &frame, std::f64::consts::PI, 1.0);
            let t = rho * rng.random::<f64>().cbrt();
            let dn = norm(&d, 3).max(1e-300);
            [t * d[0] / dn, t * d[1] / dn, t * d[2] / dn]
        })
        .collect();
    let mut max_ball = 0.0f64;
    let mut max_f = 0.0f64;
    let mut max_err = 0.0f64;
    for x in &ball {
        let r = row(x);
        let p: C64 = r.iter().zip(&coef).map(|(a, b)| a * b).sum();
        let f = fhat(x);
        max_ball = max_ball.max(p.norm());
        max_f = max_f.max(f.norm());
        max_err = max_err.max((p - f).norm());
    }
    let sup_cone = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let n_rho = 3.0 * rho;
    let mut theta = 1.0f64;
    if sup_cone > 0.0 {
        for scale in [1.0, 1e-2, 1e-4, 1e-6] {
            let (mb, sc) = (max_ball * scale, sup_cone * scale);
            if mb <= sc {
                continue;
            }
            let denom = n_rho - sc.ln();
            if denom > 0.0 {
                theta = theta.min(((n_rho - mb.ln()) / denom).clamp(1e-6, 1.0));
            } else {
                theta = 1e-6;
            }
        }
    }
    Ok(ContinuationResult {
        theta_emp: theta,
        extension_error: if max_f > 0.0 { max_err / max_f } else { max_err },
        max_ball,
        sup_cone,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgo::{make_zeta_pair, solve_remainder};
    use crate::dn::{build_dn, operator_norm_fractional, BoundaryNormCalculus};
    use crate::geometry::{partition_boundary, Shape};
    use crate::potential::{sample_profiles, Profile};

    fn cube(h: f64) -> DomainGrid {
        DomainGrid::build(3, Shape::unit_cube(), h).unwrap()
    }

    fn bump(g: &DomainGrid, c: Point, amp: f64) -> PotentialField {
        let p = Profile::Gaussian {
            center: c,
            width: 0.15,
            amplitude: amp,
        };
        sample_profiles(g, &[p], 2, 1e4).unwrap()
    }

    fn pair() -> ZetaPair {
        make_zeta_pair([0.0, 2.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 2.0, 2.0).unwrap()
    }

    #[test]
    fn green_identity_trivial_for_equal_potentials() {
        let g = cube(0.125);
        let q = bump(&g, [0.0; 3], 3.0);
        let gi = green_identity_residual(&g, &q, &q, 2.0, &pair(), &CgoOptions::default(), SolverOptions::default())
            .unwrap();
        assert_eq!(gi.volume.norm(), 0.0);
        assert_eq!(gi.boundary.norm(), 0.0);
        assert_eq!(gi.residual, 0.0);
    }

    #[test]
    fn green_identity_refines() {
        let mut res = Vec::new();
        for h in [0.125, 0.0625] {
            let g = cube(h);
            let q1 = bump(&g, [0.1, 0.0, 0.0], 4.0);
            let q2 = bump(&g, [-0.1, 0.05, 0.0], 2.0);
            let gi = green_identity_residual(&g, &q1, &q2, 2.0, &pair(), &CgoOptions::default(), SolverOptions::default())
                .unwrap();
            res.push(gi.residual);
        }
        assert!(res[0] < 0.1, "{res:?}");
        assert!(res[1] < 0.5 * res[0], "{res:?}");
    }

    #[test]
    fn volume_pairing_is_a_pure_mode_without_remainders() {
        let g = cube(0.125);
        let zero = PotentialField::zero(&g, 2, 1.0).unwrap();
        let p = pair();
        let opts = CgoOptions::default();
        let v = solve_remainder(&g, &zero, p.zeta1, &opts).unwrap();
        let u2 = solve_remainder(&g, &zero, p.zeta2, &opts).unwrap();
        let dq = bump(&g, [0.1, 0.1, -0.1], 1.0).values().to_vec();
        let (uu, vv) = (u2.u_on_grid(&g).unwrap(), v.u_on_grid(&g).unwrap());
        let lhs = volume_pairing(&g, &dq, &uu, &vv).unwrap();
        let want = fourier_transform_at(&g, &dq, &p.xi).unwrap();
        assert!((lhs - want).norm() < 1e-10 * want.norm());
        let neg: Vec<f64> = dq.iter().map(|x| -x).collect();
        assert_eq!(volume_pairing(&g, &neg, &uu, &vv).unwrap(), -lhs);
    }

    #[test]
    fn equal_potentials_give_lambda_term_only() {
        let g = cube(0.125);
        let q = bump(&g, [0.0; 3], 3.0);
        let p = pair();
        let part = partition_boundary(&g, p.alpha, 0.3).unwrap();
        let dn = build_dn(&g, &q, 2.0).unwrap().restrict_partial(&part).unwrap();
        let diff = dn.difference(&dn).unwrap();
        let calc = BoundaryNormCalculus::new(&g).unwrap();
        let gap = operator_norm_fractional(&diff, &calc).unwrap();
        assert_eq!(gap, 0.0);
        let opts = CgoOptions::default();
        let v = solve_remainder(&g, &q, p.zeta1, &opts).unwrap();
        let u2 = solve_remainder(&g, &q, p.zeta2, &opts).unwrap();
        let est = estimate_fourier_mode(&g, &p, &diff, gap, &v, &u2, &part, 1.5).unwrap();
        assert_eq!(est.value.norm(), 0.0);
        assert_eq!(est.bound_data_term, 0.0);
        assert!((est.bound_lambda_term - 1.5 / 2f64.sqrt()).abs() < 1e-15);
        let (f, _, _) = u2.boundary_traces(&g).unwrap();
        let chk = boundary_term_check(&g, &p, &v, &part, &diff, gap, &f, 1.0).unwrap();
        assert_eq!(chk.minus_term, 0.0);
        assert!((chk.plus_weighted - chk.plus_amplitude).abs() <= 1e-10 * chk.plus_amplitude);
    }

    #[test]
    fn rejects_bad_modes() {
        let g = cube(0.25);
        let q = PotentialField::zero(&g, 2, 1.0).unwrap();
        let p = make_zeta_pair([0.0, 3.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 2.0, 2.0).unwrap();
        let part = partition_boundary(&g, p.alpha, 0.3).unwrap();
        let dn = build_dn(&g, &q, 2.0).unwrap();
        let diff = dn.restrict_partial(&part).unwrap();
        let opts = CgoOptions::default();
        let v = solve_remainder(&g, &q, p.zeta1, &opts).unwrap();
        let u2 = solve_remainder(&g, &q, p.zeta2, &opts).unwrap();
        assert!(estimate_fourier_mode(&g, &p, &diff, 0.0, &v, &u2, &part, 1.0).is_err());
        let ok = make_zeta_pair([0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 2.0, 2.0).unwrap();
        assert!(estimate_fourier_mode(&g, &ok, &dn, 0.0, &v, &u2, &part, 1.0).is_err());
    }

    #[test]
    fn lambda_term_slope() {
        let g = cube(0.25);
        let q = PotentialField::zero(&g, 2, 1.0).unwrap();
        let dn = build_dn(&g, &q, 2.0).unwrap();
        let mut pts = Vec::new();
        for lambda in [2.0, 4.0, 8.0, 16.0] {
            let p = make_zeta_pair([0.0; 3], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], lambda, 2.0).unwrap();
            let part = partition_boundary(&g, p.alpha, 0.3).unwrap();
            let diff = dn.restrict_partial(&part).unwrap();
            let diff = diff.difference(&diff).unwrap();
            let opts = CgoOptions::default();
            let v = solve_remainder(&g, &q, p.zeta1, &opts).unwrap();
            let u2 = solve_remainder(&g, &q, p.zeta2, &opts).unwrap();
            let est = estimate_fourier_mode(&g, &p, &diff, 1e-12, &v, &u2, &part, 1.0).unwrap();
            pts.push((lambda.ln(), est.bound_lambda_term.ln()));
        }
        let slope = (pts[3].1 - pts[0].1) / (pts[3].0 - pts[0].0);
        assert!((slope + 0.5).abs() < 0.1);
    }

    #[test]
    fn frames_are_orthonormal() {
        for (xi, a0) in [
            ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            ([1.0, 2.0, 0.5], [1.0, 0.0, 0.0]),
            ([3.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
        ] {
            let (a, b) = frame_for(&xi, &a0).unwrap();
            assert!((norm(&a, 3) - 1.0).abs() < 1e-14 && (norm(&b, 3) - 1.0).abs() < 1e-14);
            assert!(dot(&a, &b).abs() < 1e-14 && dot(&a, &xi).abs() < 1e-13 && dot(&b, &xi).abs() < 1e-13);
        }
        let (a, _) = frame_for(&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn lattice_and_reconstruction_invert_a_mode() {
        let g = cube(0.125);
        let side = 2.0;
        let modes = mode_lattice(side, 2.0 * std::f64::consts::PI);
        assert!(modes.contains(&[0.0; 3]) && modes.iter().all(|m| norm(m, 3) <= 2.0 * std::f64::consts::PI + 1e-12));
        assert_eq!(modes.len(), 33);
        let pi = std::f64::consts::PI;
        let est: Vec<FourierModeEstimate> = [[pi, 0.0, 0.0], [-pi, 0.0, 0.0]]
            .iter()
            .map(|xi| FourierModeEstimate {
                xi: *xi,
                lambda: 1.0,
                value: C64::new(side.powi(3), 0.0),
                bound_data_term: 0.0,
                bound_lambda_term: 0.0,
                cgo_ids: (String::new(), String::new()),
            })
            .collect();
        let rec = reconstruct(&g, &est, side);
        for (r, x) in rec.iter().zip(g.cell_centers()) {
            assert!((r - 2.0 * (pi * x[0]).cos()).abs() < 1e-12);
        }
        let mut buf = Vec::new();
        write_modes_csv(&est, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn continuation_of_constants_and_zero() {
        let opts = ContinuationOptions::default();
        let r = vessella_continuation_test(|_| C64::new(0.7, 0.0), &[0.0, 1.0, 0.0], 15f64.to_radians(), 3.0, &opts)
            .unwrap();
        assert!(r.extension_error < 1e-6, "{}", r.extension_error);
        assert!((r.theta_emp - 1.0).abs() < 1e-6);
        let z = vessella_continuation_test(|_| C64::new(0.0, 0.0), &[0.0, 1.0, 0.0], 15f64.to_radians(), 3.0, &opts)
            .unwrap();
        assert!(z.max_ball < 1e-12 && z.theta_emp == 1.0);
    }

    #[test]
    fn continuation_improves_with_opening() {
        let opts = ContinuationOptions::default();
        // Transform of a Gaussian bump of width 0.3 centered at (0.2, 0, 0).
        let f = |x: &Point| C64::from_polar((-0.045 * dot(x, x)).exp(), -0.2 * x[0]);
        let errs: Vec<f64> = [10.0f64, 20.0, 40.0]
            .iter()
            .map(|a| {
                vessella_continuation_test(f, &[0.0, 0.0, 1.0], a.to_radians(), 4.0, &opts)
                    .unwrap()
                    .extension_error
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        let r = vessella_continuation_test(f, &[0.0, 0.0, 1.0], 15f64.to_radians(), 3.0, &opts).unwrap();
        assert!(r.theta_emp > 0.0 && r.theta_emp <= 1.0);
    }
}
