//! Periodic boxes aligned with the cell lattice, FFT helpers and spectral norms.
//!
//! Box nodes coincide with cell centers of the domain grid. Fields on Ω are
//! zero-extended. A `shift` vector moves the frequency lattice to
//! `2πm/L + shift`, which represents quasi-periodic fields.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::geometry::{DomainGrid, Point};

pub const NO_SHIFT: Point = [0.0; 3];

/// Periodic lattice box enclosing the domain grid.
pub struct SpectralBox {
    dim: usize,
    n: [usize; 3],
    h: f64,
    origin: Point,
    offset: [usize; 3],
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    grid_hash: [u8; 32],
}

impl std::fmt::Debug for SpectralBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralBox")
            .field("n", &self.n)
            .field("h", &self.h)
            .field("origin", &self.origin)
            .finish()
    }
}

fn nice_size(min: usize) -> usize {
    let mut m = min.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

impl SpectralBox {
    /// Smallest FFT-friendly box of side at least `min_side` along every axis,
    /// centered on the grid's lattice.
    pub fn around(grid: &DomainGrid, min_side: f64) -> Result<Self> {
        if !(min_side > 0.0) {
            return invalid(format!("box side must be positive, got {min_side}"));
        }
        let dim = grid.dim();
        let h = grid.h();
        let gd = grid.dims();
        let go = grid.origin();
        let mut n = [1usize; 3];
        let mut offset = [0usize; 3];
        let mut origin = [0.0; 3];
        let mut planner = FftPlanner::new();
        let mut fwd = Vec::new();
        let mut inv = Vec::new();
        for d in 0..3 {
            if d < dim {
                let want = ((min_side / h) - 1e-9).ceil() as usize;
                n[d] = nice_size(want.max(gd[d]));
                offset[d] = (n[d] - gd[d]) / 2;
                origin[d] = go[d] + (0.5 - offset[d] as f64) * h;
            }
            fwd.push(planner.plan_fft_forward(n[d]));
            inv.push(planner.plan_fft_inverse(n[d]));
        }
        Ok(Self {
            dim,
            n,
            h,
            origin,
            offset,
            fwd,
            inv,
            grid_hash: *grid.hash(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> [usize; 3] {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn side(&self, d: usize) -> f64 {
        self.n[d] as f64 * self.h
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|d| self.side(d)).product()
    }

    /// Position of node 0.
    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Measure of one frequency cell, Π 2π/L_d.
    pub fn dk(&self) -> f64 {
        (0..self.dim).map(|d| 2.0 * PI / self.side(d)).product()
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.n[0] * (ijk[1] + self.n[1] * ijk[2])
    }

    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    pub fn position(&self, idx: usize) -> Point {
        let m = self.unindex(idx);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = self.origin[d] + m[d] as f64 * self.h;
        }
        x
    }

    /// Box node holding grid cell `c`.
    pub fn node_of_cell(&self, grid: &DomainGrid, c: usize) -> usize {
        let ijk = grid.cells()[c];
        self.index([
            ijk[0] + self.offset[0],
            ijk[1] + self.offset[1],
            ijk[2] + self.offset[2],
        ])
    }

    pub fn check_grid(&self, grid: &DomainGrid) -> Result<()> {
        grid.check_same(&self.grid_hash, "spectral box")
    }

    /// Zero extension of cell values onto the box.
    pub fn embed(&self, grid: &DomainGrid, values: &[f64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        for (c, v) in values.iter().enumerate() {
            out[self.node_of_cell(grid, c)] = C64::new(*v, 0.0);
        }
        out
    }

    pub fn restrict(&self, grid: &DomainGrid, field: &[C64]) -> Vec<C64> {
        (0..grid.n_cells())
            .map(|c| field[self.node_of_cell(grid, c)])
            .collect()
    }

    /// Wavevector of the mode stored at `idx`.
    pub fn wavevector(&self, idx: usize, shift: &Point) -> Point {
        let m = self.unindex(idx);
        let mut k = [0.0; 3];
        for d in 0..self.dim {
            let nd = self.n[d] as i64;
            let mut mm = m[d] as i64;
            if mm > nd / 2 {
                mm -= nd;
            }
            k[d] = 2.0 * PI * mm as f64 / self.side(d) + shift[d];
        }
        k
    }

    pub fn wavevectors(&self, shift: &Point) -> Vec<Point> {
        (0..self.len()).map(|i| self.wavevector(i, shift)).collect()
    }

    fn modulate(&self, data: &mut [C64], shift: &Point, sign: f64) {
        if shift.iter().all(|s| *s == 0.0) {
            return;
        }
        for (idx, v) in data.iter_mut().enumerate() {
            let m = self.unindex(idx);
            let mut ph = 0.0;
            for d in 0..self.dim {
                ph += shift[d] * m[d] as f64 * self.h;
            }
            *v *= C64::from_polar(1.0, sign * ph);
        }
    }

    fn transform_axes(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        // axis 0 is contiguous
        plans[0].process(data);
        let mut line = Vec::new();
        for axis in 1..self.dim {
            let len = n[axis];
            let stride: usize = n[..axis].iter().product();
            let outer: usize = n[axis + 1..].iter().product();
            line.resize(len * stride, C64::new(0.0, 0.0));
            for o in 0..outer {
                let base = o * stride * len;
                // gather the slab so that each line along `axis` is contiguous
                for a in 0..len {
                    for s in 0..stride {
                        line[s * len + a] = data[base + a * stride + s];
                    }
                }
                plans[axis].process(&mut line);
                for a in 0..len {
                    for s in 0..stride {
                        data[base + a * stride + s] = line[s * len + a];
                    }
                }
            }
        }
    }

    /// Unnormalized DFT after removing the quasi-periodic phase.
    pub fn forward(&self, data: &mut [C64], shift: &Point) {
        self.modulate(data, shift, -1.0);
        self.transform_axes(data, &self.fwd);
    }

    /// Inverse of [`SpectralBox::forward`].
    pub fn inverse(&self, data: &mut [C64], shift: &Point) {
        self.transform_axes(data, &self.inv);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
        self.modulate(data, shift, 1.0);
    }

    /// Applies a Fourier multiplier `m(k)` to a box field.
    pub fn apply_multiplier<F>(&self, field: &[C64], shift: &Point, m: F) -> Vec<C64>
    where
        F: Fn(&Point) -> C64,
    {
        let mut d = field.to_vec();
        self.forward(&mut d, shift);
        for (i, v) in d.iter_mut().enumerate() {
            *v *= m(&self.wavevector(i, shift));
        }
        self.inverse(&mut d, shift);
        d
    }

    /// Spectral H^s norm of a box field, ((2π)^{-n} ∫ (1+|k|²)^s |ĝ|² dk)^{1/2}.
    pub fn sobolev_norm(&self, field: &[C64], s: f64, shift: &Point) -> f64 {
        let mut d = field.to_vec();
        self.forward(&mut d, shift);
        let mut acc = 0.0;
        for (i, v) in d.iter().enumerate() {
            let k = self.wavevector(i, shift);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            acc += (1.0 + k2).powf(s) * v.norm_sqr();
        }
        let hn = self.h.powi(self.dim as i32);
        (acc * hn * hn / self.volume()).sqrt()
    }

    /// Continuous Fourier transform samples q̂(k) = ∫ q e^{-ik·x} dx of
    /// zero-extended cell values.
    pub fn transform(&self, grid: &DomainGrid, values: &[f64]) -> FourierField {
        let mut d = self.embed(grid, values);
        self.forward(&mut d, &NO_SHIFT);
        let hn = self.h.powi(self.dim as i32);
        let k: Vec<Point> = self.wavevectors(&NO_SHIFT);
        for (v, kk) in d.iter_mut().zip(&k) {
            let ph = -(kk[0] * self.origin[0] + kk[1] * self.origin[1] + kk[2] * self.origin[2]);
            *v *= C64::from_polar(hn, ph);
        }
        FourierField {
            dim: self.dim,
            k,
            values: d,
            dk: self.dk(),
        }
    }
}

/// Samples of a Fourier transform on a frequency lattice.
#[derive(Clone, Debug)]
pub struct FourierField {
    pub dim: usize,
    pub k: Vec<Point>,
    pub values: Vec<C64>,
    /// Lattice cell measure in frequency space.
    pub dk: f64,
}

impl FourierField {
    /// Plancherel weight of one lattice cell.
    pub fn weight(&self) -> f64 {
        self.dk / (2.0 * PI).powi(self.dim as i32)
    }

    /// Squared L² norm by Plancherel.
    pub fn l2_squared(&self) -> f64 {
        self.weight() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Squared H^s norm.
    pub fn sobolev_squared(&self, s: f64) -> f64 {
        self.weight()
            * self
                .k
                .iter()
                .zip(&self.values)
                .map(|(k, v)| (1.0 + k2(k)).powf(s) * v.norm_sqr())
                .sum::<f64>()
    }
}

pub(crate) fn k2(k: &Point) -> f64 {
    k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
}

/// Spectral H^s norm of zero-extended cell values on a box of side ≥ 2R.
pub fn sobolev_norm(grid: &DomainGrid, values: &[f64], s: f64) -> Result<f64> {
    if values.len() != grid.n_cells() {
        return invalid("field length does not match grid");
    }
    let b = SpectralBox::around(grid, 2.0 * grid.radius())?;
    let f = b.embed(grid, values);
    Ok(b.sobolev_norm(&f, s, &NO_SHIFT))
}
