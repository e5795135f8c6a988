//! Finite-difference discretization of `-Δ - ω² + q` with Dirichlet data,
//! sparse direct solves, spectral admissibility checks and Neumann traces.
//!
//! Dirichlet data sits on boundary faces, half a cell from the adjacent cell
//! center, and enters through a ghost value `u_g = 2f - u_c`. The matrix is
//! real symmetric; complex data is solved as two real right-hand sides.

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatMut};
use num_complex::Complex64 as C64;

use crate::eigen::{largest_magnitude, LanczosOptions};
use crate::error::{invalid, Error, Result};
use crate::geometry::DomainGrid;
use crate::potential::PotentialField;
use crate::record::Digest;

/// Sparse matrix of `-Δ_h + q - σ` together with the boundary coupling.
pub struct HelmholtzSystem {
    pub matrix: SparseColMat<usize, f64>,
    /// Weight `2/h²` of a face value in the right-hand side of its cell.
    pub boundary_weight: f64,
    /// Upper bound on the 2-norm (largest absolute row sum).
    pub norm_bound: f64,
    face_cells: Vec<usize>,
    diag: Vec<f64>,
    grid_hash: Digest,
}

/// Assembles `-Δ_h - ω² + q`.
pub fn assemble_operator(grid: &DomainGrid, q: &PotentialField, omega: f64) -> Result<HelmholtzSystem> {
    if !(omega >= 0.0) || !omega.is_finite() {
        return invalid(format!("omega must be finite and non-negative, got {omega}"));
    }
    assemble_shifted(grid, q, omega * omega)
}

/// Assembles `-Δ_h + q - σ`.
pub fn assemble_shifted(grid: &DomainGrid, q: &PotentialField, sigma: f64) -> Result<HelmholtzSystem> {
    q.check_grid(grid)?;
    let h2 = grid.h() * grid.h();
    let n = grid.n_cells();
    let mut trip = Vec::with_capacity(n * (2 * grid.dim() + 1));
    let mut diag = vec![0.0; n];
    let mut norm_bound = 0.0f64;
    for c in 0..n {
        let mut d = q.values()[c] - sigma;
        let mut off = 0.0;
        for axis in 0..grid.dim() {
            for side in [-1i8, 1] {
                match grid.neighbor(c, axis, side) {
                    Some(nb) => {
                        d += 1.0 / h2;
                        off += 1.0 / h2;
                        trip.push(Triplet::new(c, nb, -1.0 / h2));
                    }
                    None => d += 2.0 / h2,
                }
            }
        }
        diag[c] = d;
        trip.push(Triplet::new(c, c, d));
        norm_bound = norm_bound.max(d.abs() + off);
    }
    let matrix = SparseColMat::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Solver(format!("assembly: {e:?}")))?;
    Ok(HelmholtzSystem {
        matrix,
        boundary_weight: 2.0 / h2,
        norm_bound,
        face_cells: grid.faces().iter().map(|f| f.cell).collect(),
        diag,
        grid_hash: *grid.hash(),
    })
}

impl HelmholtzSystem {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn grid_hash(&self) -> &Digest {
        &self.grid_hash
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Right-hand side contributed by real face data.
    pub fn boundary_rhs(&self, f: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n()];
        for (fi, v) in f.iter().enumerate() {
            b[self.face_cells[fi]] += self.boundary_weight * v;
        }
        b
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let a = self.matrix.as_ref();
        let mut y = vec![0.0; self.n()];
        let cp = a.symbolic().col_ptr();
        let ri = a.symbolic().row_idx();
        let vals = a.val();
        for j in 0..self.n() {
            let xj = x[j];
            for p in cp[j]..cp[j + 1] {
                y[ri[p]] += vals[p] * xj;
            }
        }
        y
    }

    fn factor(&self) -> Option<Lu<usize, f64>> {
        self.matrix.sp_lu().ok()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Condition estimates above this are treated as near-resonance.
    pub max_condition: f64,
    pub check_condition: bool,
    /// Relative residual target for each solve.
    pub tol: f64,
    pub lanczos: LanczosOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_condition: 1e10,
            check_condition: true,
            tol: 1e-10,
            lanczos: LanczosOptions::default(),
        }
    }
}

/// One factorization of `-Δ_h - ω² + q`, reused for any boundary data.
pub struct ForwardSolver {
    system: HelmholtzSystem,
    lu: Lu<usize, f64>,
    omega: f64,
    q_id: String,
    condition: Option<f64>,
    tol: f64,
}

impl std::fmt::Debug for ForwardSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardSolver")
            .field("n", &self.system.n())
            .field("omega", &self.omega)
            .field("q_id", &self.q_id)
            .field("condition", &self.condition)
            .finish()
    }
}

impl ForwardSolver {
    pub fn new(grid: &DomainGrid, q: &PotentialField, omega: f64, opts: SolverOptions) -> Result<Self> {
        let system = assemble_operator(grid, q, omega)?;
        let violation = |reason: String| Error::AssumptionViolation {
            reason,
            q_id: q.id(),
            omega,
        };
        let lu = system
            .factor()
            .ok_or_else(|| violation("singular system: factorization failed".into()))?;
        let mut s = Self {
            system,
            lu,
            omega,
            q_id: q.id(),
            condition: None,
            tol: opts.tol,
        };
        if opts.check_condition {
            let n = s.system.n();
            let inv_norm = match largest_magnitude(n, 1, |x| s.solve_real(x), opts.lanczos) {
                Ok(v) => v[0].abs(),
                Err(Error::EigenNonConvergence(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let cond = s.system.norm_bound * inv_norm;
            s.condition = Some(cond);
            if !(cond <= opts.max_condition) {
                return Err(violation(format!(
                    "near-singular system: condition estimate {cond:.3e} exceeds {:.1e}",
                    opts.max_condition
                )));
            }
        }
        Ok(s)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn q_id(&self) -> &str {
        &self.q_id
    }

    pub fn system(&self) -> &HelmholtzSystem {
        &self.system
    }

    /// Estimate of ‖A‖₂‖A⁻¹‖₂, if computed.
    pub fn condition(&self) -> Option<f64> {
        self.condition
    }

    fn solve_real(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut m = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.lu.solve_in_place(m.as_mut());
        let x: Vec<f64> = (0..b.len()).map(|i| m[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite solution".into()));
        }
        Ok(x)
    }

    /// Solves in place for every column of `rhs`.
    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        self.lu.solve_in_place(rhs);
    }

    fn solve_refined(&self, b: &[f64]) -> Result<Vec<f64>> {
        let nb = norm2(b);
        if nb == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.solve_real(b)?;
        for _ in 0..3 {
            let ax = self.system.apply(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            if norm2(&r) <= self.tol * nb {
                return Ok(x);
            }
            let dx = self.solve_real(&r)?;
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        }
        let ax = self.system.apply(&x);
        let rel = norm2(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / nb;
        if rel > 1e3 * self.tol {
            return Err(Error::Solver(format!("relative residual {rel:.2e} above tolerance")));
        }
        Ok(x)
    }

    /// Solves with Dirichlet data `f` on the boundary faces.
    pub fn solve(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.solve_with_source(f, None)
    }

    /// Solves `L u = source` in Ω with `u = f` on the boundary.
    pub fn solve_with_source(&self, f: &[C64], source: Option<&[C64]>) -> Result<Vec<C64>> {
        let nf = self.system.face_cells.len();
        if f.len() != nf {
            return Err(Error::GridMismatch(format!("boundary data has {} entries, grid has {nf} faces", f.len())));
        }
        let n = self.system.n();
        if let Some(s) = source {
            if s.len() != n {
                return Err(Error::GridMismatch("source length does not match grid".into()));
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); n];
        for part in 0..2 {
            let pick = |z: &C64| if part == 0 { z.re } else { z.im };
            let fr: Vec<f64> = f.iter().map(pick).collect();
            let mut b = self.system.boundary_rhs(&fr);
            if let Some(s) = source {
                b.iter_mut().zip(s).for_each(|(bi, si)| *bi += pick(si));
            }
            let x = self.solve_refined(&b)?;
            for (o, v) in out.iter_mut().zip(&x) {
                if part == 0 {
                    o.re = *v;
                } else {
                    o.im = *v;
                }
            }
        }
        Ok(out)
    }
}

/// Solves the Dirichlet problem once, with the condition gate enabled.
pub fn solve_dirichlet(grid: &DomainGrid, q: &PotentialField, omega: f64, f: &[C64]) -> Result<Vec<C64>> {
    ForwardSolver::new(grid, q, omega, SolverOptions::default())?.solve(f)
}

/// Difference scheme for the outward normal derivative on a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceScheme {
    /// Quadratic through the face value and two cells, `(8f - 9u₁ + u₂)/(3h)`.
    OneSided,
    /// Two-point flux `2(f - u₁)/h`, the adjoint-consistent choice.
    Flux,
}

/// First and second interior cells behind a face.
pub(crate) fn inner_cells(grid: &DomainGrid, face: usize) -> (usize, Option<usize>) {
    let f = &grid.faces()[face];
    (f.cell, grid.neighbor(f.cell, f.axis, -f.side))
}

/// Outward normal derivative by the second-order one-sided scheme.
pub fn neumann_trace(grid: &DomainGrid, u: &[C64], f: &[C64]) -> Result<Vec<C64>> {
    neumann_trace_with(grid, u, f, TraceScheme::OneSided)
}

pub fn neumann_trace_with(grid: &DomainGrid, u: &[C64], f: &[C64], scheme: TraceScheme) -> Result<Vec<C64>> {
    if u.len() != grid.n_cells() || f.len() != grid.n_faces() {
        return Err(Error::GridMismatch("field shapes do not match grid".into()));
    }
    let h = grid.h();
    Ok((0..grid.n_faces())
        .map(|fi| {
            let (c1, c2) = inner_cells(grid, fi);
            match (scheme, c2) {
                (TraceScheme::OneSided, Some(c2)) => (8.0 * f[fi] - 9.0 * u[c1] + u[c2]) / (3.0 * h),
                _ => 2.0 * (f[fi] - u[c1]) / h,
            }
        })
        .collect())
}

/// Spectral admissibility of a frequency.
#[derive(Clone, Debug)]
pub struct FrequencyCheck {
    pub omega: f64,
    /// Lowest eigenvalues of the discrete `-Δ + q`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue closest to ω².
    pub nearest_eigenvalue: f64,
    pub dist_to_spectrum: f64,
    /// Eigenvalue closest to 0.
    pub nearest_to_zero: f64,
    /// Eigenvalues above this are not resolved by the grid.
    pub reliability_cutoff: f64,
    pub c_small: f64,
    pub passes_a: bool,
    pub passes_b: bool,
}

fn nearest_eigenvalue(grid: &DomainGrid, q: &PotentialField, sigma: f64, lopts: LanczosOptions) -> Result<f64> {
    let sys = assemble_shifted(grid, q, sigma)?;
    let Some(lu) = sys.factor() else {
        return Ok(sigma);
    };
    let n = sys.n();
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let mut m = Mat::from_fn(n, 1, |i, _| x[i]);
        lu.solve_in_place(m.as_mut());
        Ok((0..n).map(|i| m[(i, 0)]).collect())
    };
    match largest_magnitude(n, 1, apply, lopts) {
        Ok(t) => Ok(sigma + 1.0 / t[0]),
        // an exactly singular shift shows up as a non-finite solve
        Err(Error::EigenNonConvergence(m)) if m.contains("invalid output") => Ok(sigma),
        Err(e) => Err(e),
    }
}

/// Computes the `k` lowest Dirichlet eigenvalues of the discrete `-Δ + q` and
/// tests assumptions (A) and (B).
pub fn dirichlet_spectrum_check(
    grid: &DomainGrid,
    q: &PotentialField,
    omega: f64,
    k: usize,
    c_small: f64,
) -> Result<FrequencyCheck> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if !(omega > 0.0) {
        return invalid(format!("omega must be positive, got {omega}"));
    }
    if !(c_small > 0.0) {
        return invalid("c_small must be positive");
    }
    let lopts = LanczosOptions::default();
    let qmin = q.min_value();

    let below = qmin - 1.0;
    let sys = assemble_shifted(grid, q, below)?;
    let lu = sys
        .factor()
        .ok_or_else(|| Error::Solver("factorization below the spectrum failed".into()))?;
    let n = sys.n();
    let thetas = largest_magnitude(
        n,
        k.min(n),
        |x| {
            let mut m = Mat::from_fn(n, 1, |i, _| x[i]);
            lu.solve_in_place(m.as_mut());
            Ok((0..n).map(|i| m[(i, 0)]).collect())
        },
        lopts,
    )?;
    let mut eigenvalues: Vec<f64> = thetas.iter().map(|t| below + 1.0 / t).collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let zero_tol = 1e-8 * sys.norm_bound;
    let near_zero = nearest_eigenvalue(grid, q, 0.0, lopts)?;
    let w2 = omega * omega;
    let near_w = nearest_eigenvalue(grid, q, w2, lopts)?;
    let h = grid.h();
    let cutoff = grid.dim() as f64 / (4.0 * h * h) + qmin.min(0.0);
    let dist = (near_w - w2).abs();
    let gap = c_small * omega.powi(2 - grid.dim() as i32);
    Ok(FrequencyCheck {
        omega,
        eigenvalues,
        nearest_eigenvalue: near_w,
        dist_to_spectrum: dist,
        nearest_to_zero: near_zero,
        reliability_cutoff: cutoff,
        c_small,
        passes_a: near_zero.abs() > zero_tol,
        passes_b: near_w > cutoff || dist > gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;

    fn square(h: f64) -> DomainGrid {
        DomainGrid::build(
            2,
            Shape::Box {
                center: [0.0; 3],
                half_widths: [0.5, 0.5, 0.0],
            },
            h,
        )
        .unwrap()
    }

    fn dense(sys: &HelmholtzSystem) -> Vec<Vec<f64>> {
        let n = sys.n();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                sys.apply(&e)
            })
            .collect()
    }

    #[test]
    fn five_point_stencil() {
        let g = square(0.125);
        let q = PotentialField::zero(&g, 2, 1.0).unwrap();
        let sys = assemble_operator(&g, &q, 0.0).unwrap();
        let a = dense(&sys);
        let h2 = 0.125f64.powi(2);
        for c in 0..g.n_cells() {
            let interior = (0..2).all(|ax| g.neighbor(c, ax, 1).is_some() && g.neighbor(c, ax, -1).is_some());
            let row_sum: f64 = (0..g.n_cells()).map(|j| a[j][c]).sum();
            if interior {
                assert!(row_sum.abs() < 1e-9);
                assert!((a[c][c] - 4.0 / h2).abs() < 1e-9);
            }
            for j in 0..g.n_cells() {
                assert_eq!(a[j][c], a[c][j]);
            }
        }
    }

    #[test]
    fn constant_potential_shifts_diagonal() {
        let g = square(0.25);
        let z = PotentialField::zero(&g, 2, 1.0).unwrap();
        let q = PotentialField::constant(&g, 3.0, 2, 10.0).unwrap();
        let a0 = dense(&assemble_operator(&g, &z, 0.0).unwrap());
        let a1 = dense(&assemble_operator(&g, &q, 1.5).unwrap());
        for i in 0..g.n_cells() {
            for j in 0..g.n_cells() {
                let expect = a0[i][j] + if i == j { 3.0 - 2.25 } else { 0.0 };
                assert!((a1[i][j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_data_reproduced_exactly() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.125).unwrap();
        let q = PotentialField::zero(&g, 2, 1.0).unwrap();
        let alpha = [0.6, 0.0, 0.8];
        let lin = |x: &[f64; 3]| alpha[0] * x[0] + alpha[1] * x[1] + alpha[2] * x[2];
        let f: Vec<C64> = g.faces().iter().map(|fc| C64::new(lin(&fc.center), 0.0)).collect();
        let u = solve_dirichlet(&g, &q, 0.0, &f).unwrap();
        for (c, x) in g.cell_centers().iter().enumerate() {
            assert!((u[c].re - lin(x)).abs() < 1e-10);
        }
        for scheme in [TraceScheme::OneSided, TraceScheme::Flux] {
            let t = neumann_trace_with(&g, &u, &f, scheme).unwrap();
            for (fi, fc) in g.faces().iter().enumerate() {
                let an = alpha[0] * fc.normal[0] + alpha[1] * fc.normal[1] + alpha[2] * fc.normal[2];
                assert!((t[fi].re - an).abs() < 1e-8, "{scheme:?}");
            }
        }
    }

    #[test]
    fn bilinear_trace() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.125).unwrap();
        let q = PotentialField::zero(&g, 2, 1.0).unwrap();
        let f: Vec<C64> = g.faces().iter().map(|fc| C64::new(fc.center[0] * fc.center[1], 0.0)).collect();
        let u = solve_dirichlet(&g, &q, 0.0, &f).unwrap();
        let t = neumann_trace(&g, &u, &f).unwrap();
        for (fi, fc) in g.faces().iter().enumerate() {
            if fc.normal[0] == 1.0 {
                assert!((t[fi].re - fc.center[1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_data_zero_solution() {
        let g = square(0.125);
        let q = PotentialField::constant(&g, 1.0, 2, 10.0).unwrap();
        let f = vec![C64::new(0.0, 0.0); g.n_faces()];
        let u = solve_dirichlet(&g, &q, 2.0, &f).unwrap();
        assert!(u.iter().all(|z| z.norm() == 0.0));
        let t = neumann_trace(&g, &u, &f).unwrap();
        assert!(t.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn plane_wave_second_order() {
        let q0 = |g: &DomainGrid| PotentialField::zero(g, 2, 1.0).unwrap();
        let omega = 3.0;
        let kappa = [omega * 0.6, omega * 0.8, 0.0];
        let mut errs = Vec::new();
        for h in [1.0 / 8.0, 1.0 / 16.0] {
            let g = DomainGrid::build(3, Shape::unit_cube(), h).unwrap();
            let pw = |x: &[f64; 3]| C64::from_polar(1.0, kappa[0] * x[0] + kappa[1] * x[1]);
            let f: Vec<C64> = g.faces().iter().map(|fc| pw(&fc.center)).collect();
            let u = solve_dirichlet(&g, &q0(&g), omega, &f).unwrap();
            let e = g
                .cell_centers()
                .iter()
                .enumerate()
                .map(|(c, x)| (u[c] - pw(x)).norm())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[1] < 1e-2, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn cube_spectrum_checks() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 1.0 / 12.0).unwrap();
        let q = PotentialField::zero(&g, 2, 1.0).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        let mid = 0.5 * (3.0 * pi2 + 6.0 * pi2);
        let chk = dirichlet_spectrum_check(&g, &q, mid.sqrt(), 3, 1e-3).unwrap();
        assert!(chk.passes_a && chk.passes_b);
        let l1 = chk.eigenvalues[0];
        assert!((l1 - 3.0 * pi2).abs() < 0.02 * 3.0 * pi2, "{l1}");

        let res = dirichlet_spectrum_check(&g, &q, (l1 + 1e-6).sqrt(), 1, 1e-3).unwrap();
        assert!(!res.passes_b);

        let shifted = PotentialField::constant(&g, -l1, 2, 100.0).unwrap();
        let chk = dirichlet_spectrum_check(&g, &shifted, 2.0, 1, 1e-3).unwrap();
        assert!(!chk.passes_a, "{}", chk.nearest_to_zero);
    }

    #[test]
    fn near_resonance_rejected_by_condition_gate() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.125).unwrap();
        let q = PotentialField::zero(&g, 2, 1.0).unwrap();
        let chk = dirichlet_spectrum_check(&g, &q, 5.0, 1, 1e-3).unwrap();
        let l1 = chk.eigenvalues[0];
        let err = ForwardSolver::new(&g, &q, (l1 + 1e-9).sqrt(), SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation { .. }), "{err}");
    }
}
