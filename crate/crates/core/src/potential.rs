//! Grid-sampled real potentials and the analytic families used in experiments.

use crate::error::{invalid, Error, Result};
use crate::geometry::{DomainGrid, Point};
use crate::record::{hex, ContentHasher, Digest};
use crate::spectral;

/// Real potential sampled at cell centers, with smoothness order `s` and
/// admissibility bound `bound` (the constant M).
#[derive(Clone, Debug)]
pub struct PotentialField {
    values: Vec<f64>,
    s: u32,
    bound: f64,
    grid_hash: Digest,
    hash: Digest,
}

impl PotentialField {
    pub fn new(grid: &DomainGrid, values: Vec<f64>, s: u32, bound: f64) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GridMismatch(format!(
                "potential has {} values, grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("potential has non-finite values");
        }
        let min_s = (grid.dim() / 2 + 1) as u32;
        if s < min_s {
            return invalid(format!("smoothness order {s} below [n/2]+1 = {min_s}"));
        }
        if !(bound > 0.0) {
            return invalid(format!("bound M must be positive, got {bound}"));
        }
        let mut hs = ContentHasher::new();
        hs.tag("potential").digest(grid.hash()).f64s(&values);
        let hash = hs.finish();
        Ok(Self {
            values,
            s,
            bound,
            grid_hash: *grid.hash(),
            hash,
        })
    }

    pub fn from_fn<F: Fn(&Point) -> f64>(grid: &DomainGrid, s: u32, bound: f64, f: F) -> Result<Self> {
        let vals = grid.cell_centers().iter().map(f).collect();
        Self::new(grid, vals, s, bound)
    }

    pub fn zero(grid: &DomainGrid, s: u32, bound: f64) -> Result<Self> {
        Self::new(grid, vec![0.0; grid.n_cells()], s, bound)
    }

    pub fn constant(grid: &DomainGrid, c0: f64, s: u32, bound: f64) -> Result<Self> {
        Self::new(grid, vec![c0; grid.n_cells()], s, bound)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn hash(&self) -> &Digest {
        &self.hash
    }

    /// Short identifier used in error messages and file names.
    pub fn id(&self) -> String {
        hex(&self.hash)[..12].to_string()
    }

    pub fn check_grid(&self, grid: &DomainGrid) -> Result<()> {
        grid.check_same(&self.grid_hash, "potential")
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Spectral H^s norm of the zero extension.
    pub fn sobolev_norm(&self, grid: &DomainGrid) -> Result<f64> {
        self.check_grid(grid)?;
        spectral::sobolev_norm(grid, &self.values, self.s as f64)
    }

    pub fn is_admissible(&self, grid: &DomainGrid) -> Result<bool> {
        Ok(self.sobolev_norm(grid)? <= self.bound)
    }

    /// Pointwise difference, keeping the smoothness order and summing bounds.
    pub fn difference(&self, other: &PotentialField) -> Result<Vec<f64>> {
        if self.grid_hash != other.grid_hash {
            return Err(Error::GridMismatch("potentials on different grids".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }
}

/// Analytic potential families named in configuration files.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Gaussian {
        center: Point,
        width: f64,
        amplitude: f64,
    },
    /// `amplitude · cos(k·x + phase)` under a Gaussian window.
    Trig {
        wavevector: Point,
        phase: f64,
        center: Point,
        width: f64,
        amplitude: f64,
    },
    Constant(f64),
}

impl Profile {
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Profile::Gaussian {
                center,
                width,
                amplitude,
            } => amplitude * gaussian(x, center, *width),
            Profile::Trig {
                wavevector,
                phase,
                center,
                width,
                amplitude,
            } => {
                let kx = wavevector[0] * x[0] + wavevector[1] * x[1] + wavevector[2] * x[2];
                amplitude * (kx + phase).cos() * gaussian(x, center, *width)
            }
            Profile::Constant(c) => *c,
        }
    }
}

fn gaussian(x: &Point, c: &Point, w: f64) -> f64 {
    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
    (-r2 / (2.0 * w * w)).exp()
}

/// Sum of profiles sampled on the grid.
pub fn sample_profiles(grid: &DomainGrid, profiles: &[Profile], s: u32, bound: f64) -> Result<PotentialField> {
    PotentialField::from_fn(grid, s, bound, |x| profiles.iter().map(|p| p.eval(x)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;

    #[test]
    fn constructors_validate() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.25).unwrap();
        assert!(PotentialField::new(&g, vec![0.0; 3], 3, 1.0).is_err());
        assert!(PotentialField::zero(&g, 1, 1.0).is_err());
        assert!(PotentialField::zero(&g, 2, 0.0).is_err());
        let q = PotentialField::zero(&g, 2, 1.0).unwrap();
        assert_eq!(q.sobolev_norm(&g).unwrap(), 0.0);
        assert!(q.is_admissible(&g).unwrap());
    }

    #[test]
    fn hash_tracks_values() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.25).unwrap();
        let a = PotentialField::constant(&g, 1.0, 3, 10.0).unwrap();
        let b = PotentialField::constant(&g, 1.0, 3, 10.0).unwrap();
        let c = PotentialField::constant(&g, 1.5, 3, 10.0).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn gaussian_sobolev_grows_with_order() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.0625).unwrap();
        let p = Profile::Gaussian {
            center: [0.0; 3],
            width: 0.1,
            amplitude: 1.0,
        };
        let q = sample_profiles(&g, &[p], 3, 1e6).unwrap();
        let n0 = spectral::sobolev_norm(&g, q.values(), 0.0).unwrap();
        let n3 = q.sobolev_norm(&g).unwrap();
        // oracle: ‖G‖_{L²} = (π w²)^{3/4} for an untruncated unit Gaussian
        let exact = (std::f64::consts::PI * 0.01f64).powf(0.75);
        assert!((n0 - exact).abs() < 1e-3 * exact, "{n0} vs {exact}");
        assert!(n3 > 10.0 * n0);
    }
}
