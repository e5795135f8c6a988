//! Both sides of the boundary Carleman estimate with the linear weight
//! `φ = α·x`, evaluated by grid quadrature on fields vanishing on the boundary,
//! and the empirical calibration of `(C, λ₀)`.

use std::io::Write;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{dot, norm, DomainGrid, Point, Shape};
use crate::potential::PotentialField;

#[derive(Clone, Debug, PartialEq)]
pub struct CarlemanReport {
    pub lambda: f64,
    pub alpha: Point,
    pub lhs_boundary: f64,
    pub lhs_volume: f64,
    pub rhs_volume: f64,
    pub rhs_boundary: f64,
    pub slack: f64,
}

impl CarlemanReport {
    fn assemble(lambda: f64, alpha: Point, lb: f64, lv: f64, rv: f64, rb: f64) -> Self {
        Self {
            lambda,
            alpha,
            lhs_boundary: lb,
            lhs_volume: lv,
            rhs_volume: rv,
            rhs_boundary: rb,
            slack: (rv + rb) - (lb + lv),
        }
    }
}

fn check_inputs(grid: &DomainGrid, q: &PotentialField, lambda: f64, alpha: &Point, u: &[C64]) -> Result<()> {
    q.check_grid(grid)?;
    if u.len() != grid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "test field has {} values, grid has {} cells",
            u.len(),
            grid.n_cells()
        )));
    }
    if !(lambda > 0.0) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    if (norm(alpha, 3) - 1.0).abs() > 1e-12 {
        return invalid("alpha must be a unit vector");
    }
    Ok(())
}

/// Value across face `(axis, side)` of cell `c`, with the zero-Dirichlet ghost.
fn across(grid: &DomainGrid, u: &[C64], c: usize, axis: usize, side: i8) -> C64 {
    grid.neighbor(c, axis, side).map_or(-u[c], |nb| u[nb])
}

fn laplacian(grid: &DomainGrid, u: &[C64], c: usize) -> C64 {
    let h2 = grid.h() * grid.h();
    let mut acc = C64::new(0.0, 0.0);
    for axis in 0..grid.dim() {
        acc += across(grid, u, c, axis, 1) + across(grid, u, c, axis, -1) - 2.0 * u[c];
    }
    acc / h2
}

fn directional(grid: &DomainGrid, u: &[C64], c: usize, alpha: &Point) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for axis in 0..grid.dim() {
        acc += alpha[axis] * (across(grid, u, c, axis, 1) - across(grid, u, c, axis, -1));
    }
    acc / (2.0 * grid.h())
}

/// Outward normal derivative of a field vanishing on the boundary,
/// `(u₂ - 9u₁)/(3h)` from the two cells behind each face.
pub fn zero_trace_normal_derivative(grid: &DomainGrid, u: &[C64]) -> Vec<C64> {
    let h = grid.h();
    grid.faces()
        .iter()
        .map(|f| {
            let u1 = u[f.cell];
            match grid.neighbor(f.cell, f.axis, -f.side) {
                Some(c2) => (u[c2] - 9.0 * u1) / (3.0 * h),
                None => -2.0 * u1 / h,
            }
        })
        .collect()
}

/// `Δu - 2λα·∇u + (λ²+ω²-q)u`, the conjugated operator in expanded form.
pub fn conjugated_operator(grid: &DomainGrid, q: &PotentialField, omega: f64, lambda: f64, alpha: &Point, u: &[C64]) -> Vec<C64> {
    let qv = q.values();
    (0..grid.n_cells())
        .map(|c| {
            laplacian(grid, u, c) - 2.0 * lambda * directional(grid, u, c, alpha)
                + (lambda * lambda + omega * omega - qv[c]) * u[c]
        })
        .collect()
}

fn sq_norm(grid: &DomainGrid, v: &[C64]) -> f64 {
    grid.cell_volume() * v.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Carleman terms for the weight `φ = α·x` with volume constant `c_const`.
pub fn evaluate_carleman(
    grid: &DomainGrid,
    q: &PotentialField,
    omega: f64,
    lambda: f64,
    alpha: Point,
    u: &[C64],
    c_const: f64,
) -> Result<CarlemanReport> {
    check_inputs(grid, q, lambda, &alpha, u)?;
    let pu = conjugated_operator(grid, q, omega, lambda, &alpha, u);
    let d = zero_trace_normal_derivative(grid, u);
    let (mut lb, mut rb) = (0.0, 0.0);
    for (f, dv) in grid.faces().iter().zip(&d) {
        let an = dot(&alpha, &f.normal);
        let w = an * dv.norm_sqr() * f.area / lambda;
        if an > 0.0 {
            rb += w;
        } else {
            lb -= w;
        }
    }
    Ok(CarlemanReport::assemble(
        lambda,
        alpha,
        lb,
        c_const * sq_norm(grid, u),
        sq_norm(grid, &pu) / (lambda * lambda),
        rb,
    ))
}

/// The weight-flipped form on `ũ`, with `e^{-λφ}` inside every term.
pub fn evaluate_remark_form(
    grid: &DomainGrid,
    q: &PotentialField,
    omega: f64,
    lambda: f64,
    alpha: Point,
    u_tilde: &[C64],
    c_const: f64,
) -> Result<CarlemanReport> {
    check_inputs(grid, q, lambda, &alpha, u_tilde)?;
    let qv = q.values();
    let centers = grid.cell_centers();
    let weight = |x: &Point| (-lambda * dot(&alpha, x)).exp();
    let weighted: Vec<C64> = centers.iter().zip(u_tilde).map(|(x, v)| weight(x) * v).collect();
    let lu: Vec<C64> = (0..grid.n_cells())
        .map(|c| weight(&centers[c]) * (laplacian(grid, u_tilde, c) + (omega * omega - qv[c]) * u_tilde[c]))
        .collect();
    let d = zero_trace_normal_derivative(grid, u_tilde);
    let (mut lb, mut rb) = (0.0, 0.0);
    for (f, dv) in grid.faces().iter().zip(&d) {
        let an = dot(&alpha, &f.normal);
        let w = an * (weight(&f.center) * dv).norm_sqr() * f.area / lambda;
        if an > 0.0 {
            lb += w;
        } else {
            rb -= w;
        }
    }
    Ok(CarlemanReport::assemble(
        lambda,
        alpha,
        lb,
        c_const * sq_norm(grid, &weighted),
        sq_norm(grid, &lu) / (lambda * lambda),
        rb,
    ))
}

/// `n` values spaced logarithmically over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default λ grid: 16 points in `[1, 10³]`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1.0, 1e3, 16)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub c_emp: f64,
    pub lambda0: f64,
    pub degenerate: bool,
    /// Largest admissible `C` at each grid λ, before the suffix minimum.
    pub feasible_c: Vec<f64>,
}

/// Largest `C ≤ c_max` and smallest grid `λ₀` with non-negative slack for
/// every field and every grid `λ ≥ λ₀`.
pub fn calibrate_constants(
    grid: &DomainGrid,
    q: &PotentialField,
    omega: f64,
    alpha: Point,
    family: &[Vec<C64>],
    lambda_grid: &[f64],
    c_max: f64,
) -> Result<Calibration> {
    if family.is_empty() {
        return invalid("calibration family is empty");
    }
    if lambda_grid.is_empty() || lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("lambda grid must be non-empty and strictly increasing");
    }
    let live: Vec<usize> = (0..family.len()).filter(|&i| family[i].iter().any(|z| z.norm() > 0.0)).collect();
    if live.is_empty() {
        return Ok(Calibration {
            c_emp: c_max,
            lambda0: lambda_grid[0],
            degenerate: true,
            feasible_c: vec![c_max; lambda_grid.len()],
        });
    }
    let per_lambda: Vec<(f64, usize)> = lambda_grid
        .par_iter()
        .map(|&lam| -> Result<(f64, usize)> {
            let mut best = (f64::INFINITY, 0);
            for &i in &live {
                let r = evaluate_carleman(grid, q, omega, lam, alpha, &family[i], 0.0)?;
                let c = r.slack / sq_norm(grid, &family[i]);
                if c < best.0 {
                    best = (c, i);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let feasible_c: Vec<f64> = per_lambda.iter().map(|p| p.0).collect();
    let mut suffix = feasible_c.clone();
    for j in (0..suffix.len() - 1).rev() {
        suffix[j] = suffix[j].min(suffix[j + 1]);
    }
    let last = *suffix.last().unwrap();
    if !(last > 0.0) {
        let (slack, field) = *per_lambda.last().unwrap();
        return Err(Error::NoFeasibleLambda {
            field,
            lambda: *lambda_grid.last().unwrap(),
            slack,
        });
    }
    let c_emp = c_max.min(last);
    let (mut lo, mut hi) = (0usize, suffix.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if suffix[mid] >= c_emp {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Calibration {
        c_emp,
        lambda0: lambda_grid[lo],
        degenerate: false,
        feasible_c,
    })
}

/// Smooth compactly supported bubble vanishing on the boundary of the shape.
fn bubble(shape: &Shape, x: &Point, dim: usize) -> f64 {
    match shape {
        Shape::Box {
            center,
            half_widths,
        } => (0..dim)
            .map(|d| {
                let t = (x[d] - center[d]) / half_widths[d];
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    (0.5 * std::f64::consts::PI * t).cos()
                }
            })
            .product(),
        Shape::Ball { center, radius } => {
            let r2: f64 = (0..dim).map(|d| (x[d] - center[d]).powi(2)).sum::<f64>() / (radius * radius);
            (1.0 - r2).max(0.0)
        }
    }
}

/// Gaussian bump times the boundary bubble.
pub fn bump_field(grid: &DomainGrid, center: Point, width: f64) -> Vec<C64> {
    grid.cell_centers()
        .iter()
        .map(|x| {
            let r2: f64 = (0..grid.dim()).map(|d| (x[d] - center[d]).powi(2)).sum();
            C64::new((-r2 / (2.0 * width * width)).exp() * bubble(grid.shape(), x, grid.dim()), 0.0)
        })
        .collect()
}

/// Continuum Dirichlet Laplacian eigenfunction `Π sin(m_d π (x_d - a_d)/ℓ_d)` on a box.
pub fn sine_mode(grid: &DomainGrid, modes: [usize; 3]) -> Result<Vec<C64>> {
    let Shape::Box {
        center,
        half_widths,
    } = grid.shape()
    else {
        return invalid("sine modes are defined on boxes only");
    };
    let pi = std::f64::consts::PI;
    Ok(grid
        .cell_centers()
        .iter()
        .map(|x| {
            let v: f64 = (0..grid.dim())
                .map(|d| {
                    let t = (x[d] - center[d] + half_widths[d]) / (2.0 * half_widths[d]);
                    (modes[d].max(1) as f64 * pi * t).sin()
                })
                .product();
            C64::new(v, 0.0)
        })
        .collect())
}

fn random_point(rng: &mut ChaCha8Rng, grid: &DomainGrid, frac: f64) -> Point {
    let c = grid.shape().center();
    let r = match grid.shape() {
        Shape::Box { half_widths, .. } => half_widths.iter().cloned().fold(f64::INFINITY, f64::min),
        Shape::Ball { radius, .. } => *radius / 3f64.sqrt(),
    };
    let mut p = [0.0; 3];
    for d in 0..grid.dim() {
        p[d] = c[d] + frac * r * (2.0 * rng.random::<f64>() - 1.0);
    }
    p
}

/// Five Gaussian bumps with random centers and widths plus the five lowest
/// box sine modes (Gaussian bumps only on balls).
pub fn calibration_family(grid: &DomainGrid, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fam: Vec<Vec<C64>> = (0..5)
        .map(|_| {
            let c = random_point(&mut rng, grid, 0.5);
            bump_field(grid, c, 0.08 + 0.2 * rng.random::<f64>())
        })
        .collect();
    let modes: [[usize; 3]; 5] = [[1, 1, 1], [2, 1, 1], [1, 2, 1], [1, 1, 2], [2, 2, 1]];
    for m in modes {
        if let Ok(f) = sine_mode(grid, m) {
            fam.push(f);
        }
    }
    fam
}

/// Randomized bumps, trigonometrically modulated bumps and low sine modes
/// with random amplitudes and phases.
pub fn random_test_fields(grid: &DomainGrid, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let amp = C64::from_polar(0.1 + 10.0 * rng.random::<f64>(), 2.0 * std::f64::consts::PI * rng.random::<f64>());
            let base = match i % 3 {
                0 => {
                    let c = random_point(&mut rng, grid, 0.6);
                    bump_field(grid, c, 0.05 + 0.25 * rng.random::<f64>())
                }
                1 => {
                    let c = random_point(&mut rng, grid, 0.4);
                    let k: Vec<f64> = (0..3).map(|_| 12.0 * (2.0 * rng.random::<f64>() - 1.0)).collect();
                    let phase = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                    let b = bump_field(grid, c, 0.1 + 0.2 * rng.random::<f64>());
                    grid.cell_centers()
                        .iter()
                        .zip(b)
                        .map(|(x, v)| v * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + phase).cos())
                        .collect()
                }
                _ => {
                    let m = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
                    sine_mode(grid, m).unwrap_or_else(|_| {
                        let c = random_point(&mut rng, grid, 0.5);
                        bump_field(grid, c, 0.15)
                    })
                }
            };
            base.into_iter().map(|v| amp * v).collect()
        })
        .collect()
}

/// CSV with columns `omega,lambda,field,lhs_boundary,lhs_volume,rhs_volume,rhs_boundary,slack`.
pub fn write_reports_csv<W: Write>(mut out: W, rows: &[(f64, usize, CarlemanReport)]) -> Result<()> {
    writeln!(out, "omega,lambda,field,lhs_boundary,lhs_volume,rhs_volume,rhs_boundary,slack")?;
    for (omega, id, r) in rows {
        writeln!(
            out,
            "{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            omega, r.lambda, id, r.lhs_boundary, r.lhs_volume, r.rhs_volume, r.rhs_boundary, r.slack
        )?;
    }
    Ok(())
}
