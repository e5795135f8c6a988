//! Cell-centered discretization of boxes and balls in two or three dimensions.
//!
//! Unknowns live at cell centers. A boundary face is a cell face whose
//! neighbor lies outside the domain; its center sits half a cell from the
//! adjacent cell center. For the ball the faces form a staircase and carry the
//! analytic sphere normal.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::record::{ContentHasher, Digest, RecordReader, RecordWriter};

pub type Point = [f64; 3];

const INACTIVE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Box { center: Point, half_widths: Point },
    Ball { center: Point, radius: f64 },
}

impl Shape {
    /// Axis-aligned box given by its center and half-widths.
    pub fn cube(center: Point, half_width: f64) -> Self {
        Shape::Box {
            center,
            half_widths: [half_width; 3],
        }
    }

    pub fn unit_cube() -> Self {
        Self::cube([0.0; 3], 0.5)
    }

    pub fn center(&self) -> Point {
        match self {
            Shape::Box { center, .. } | Shape::Ball { center, .. } => *center,
        }
    }

    fn contains(&self, x: &Point, dim: usize) -> bool {
        match self {
            Shape::Box {
                center,
                half_widths,
            } => (0..dim).all(|d| (x[d] - center[d]).abs() < half_widths[d]),
            Shape::Ball { center, radius } => dist(x, center, dim) < *radius,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryFace {
    pub center: Point,
    /// Area element dS.
    pub area: f64,
    /// Outward unit normal.
    pub normal: Point,
    /// Index of the adjacent interior cell.
    pub cell: usize,
    /// Lattice axis the face is orthogonal to.
    pub axis: usize,
    /// +1 if the face lies on the positive side of its cell, -1 otherwise.
    pub side: i8,
}

#[derive(Clone, Debug)]
pub struct DomainGrid {
    dim: usize,
    shape: Shape,
    h: f64,
    dims: [usize; 3],
    origin: Point,
    cells: Vec<[usize; 3]>,
    lookup: Vec<u32>,
    faces: Vec<BoundaryFace>,
    radius: f64,
    hash: Digest,
}

impl DomainGrid {
    /// Builds the grid. For boxes `h` must divide every half-width; for balls
    /// `h < radius / 4`.
    pub fn build(dim: usize, shape: Shape, h: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return invalid(format!("dimension must be 2 or 3, got {dim}"));
        }
        if !(h > 0.0) || !h.is_finite() {
            return invalid(format!("grid spacing must be positive, got {h}"));
        }
        let mut dims = [1usize; 3];
        let mut origin = [0.0; 3];
        match &shape {
            Shape::Box {
                center,
                half_widths,
            } => {
                for d in 0..dim {
                    let a = half_widths[d];
                    if !(a > 0.0) {
                        return invalid(format!("half-width {a} must be positive"));
                    }
                    let m = 2.0 * a / h;
                    let mr = m.round();
                    if mr < 1.0 || (m - mr).abs() > 1e-9 * m.max(1.0) {
                        return invalid(format!("h={h} does not divide half-width {a}"));
                    }
                    dims[d] = mr as usize;
                    origin[d] = center[d] - a;
                }
            }
            Shape::Ball { center, radius } => {
                if !(*radius > 0.0) {
                    return invalid(format!("radius {radius} must be positive"));
                }
                if h >= radius / 4.0 {
                    return invalid(format!("h={h} must be below radius/4={}", radius / 4.0));
                }
                let m = (2.0 * radius / h).ceil() as usize;
                for d in 0..dim {
                    dims[d] = m;
                    origin[d] = center[d] - 0.5 * m as f64 * h;
                }
            }
        }
        let total = dims[0] * dims[1] * dims[2];
        let mut lookup = vec![INACTIVE; total];
        let mut cells = Vec::new();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let x = center_of(&origin, h, [i, j, k], dim);
                    if shape.contains(&x, dim) {
                        lookup[i + dims[0] * (j + dims[1] * k)] = cells.len() as u32;
                        cells.push([i, j, k]);
                    }
                }
            }
        }
        if cells.is_empty() {
            return invalid("grid has no interior cells");
        }

        let mut grid = DomainGrid {
            dim,
            shape,
            h,
            dims,
            origin,
            cells,
            lookup,
            faces: Vec::new(),
            radius: 1.0,
            hash: [0; 32],
        };
        grid.faces = grid.collect_faces();
        grid.radius = grid.enclosing_radius();
        grid.hash = grid.compute_hash();
        Ok(grid)
    }

    fn collect_faces(&self) -> Vec<BoundaryFace> {
        let mut faces = Vec::new();
        let h = self.h;
        let area_unit = h.powi(self.dim as i32 - 1);
        for c in 0..self.cells.len() {
            let xc = self.cell_center(c);
            for axis in 0..self.dim {
                for side in [-1i8, 1] {
                    if self.neighbor(c, axis, side).is_some() {
                        continue;
                    }
                    let mut center = xc;
                    center[axis] += 0.5 * h * side as f64;
                    let (normal, area) = match &self.shape {
                        Shape::Box { .. } => {
                            let mut n = [0.0; 3];
                            n[axis] = side as f64;
                            (n, area_unit)
                        }
                        Shape::Ball { center: c0, .. } => {
                            let r = dist(&center, c0, self.dim);
                            let mut n = [0.0; 3];
                            for d in 0..self.dim {
                                n[d] = (center[d] - c0[d]) / r;
                            }
                            // projected area of the staircase face onto the sphere
                            (n, area_unit * n[axis].abs())
                        }
                    };
                    faces.push(BoundaryFace {
                        center,
                        area,
                        normal,
                        cell: c,
                        axis,
                        side,
                    });
                }
            }
        }
        faces
    }

    fn enclosing_radius(&self) -> f64 {
        let dim = self.dim;
        let r = match &self.shape {
            Shape::Box {
                center,
                half_widths,
            } => {
                let mut s = 0.0;
                for d in 0..dim {
                    let m = (center[d] - half_widths[d])
                        .abs()
                        .max((center[d] + half_widths[d]).abs());
                    s += m * m;
                }
                s.sqrt()
            }
            Shape::Ball { center, radius } => norm(center, dim) + radius,
        };
        let fmax = self
            .faces
            .iter()
            .map(|f| norm(&f.center, dim))
            .fold(0.0, f64::max);
        r.max(fmax).max(1.0)
    }

    fn compute_hash(&self) -> Digest {
        let mut hs = ContentHasher::new();
        hs.tag("grid").u64(self.dim as u64).f64(self.h);
        match &self.shape {
            Shape::Box {
                center,
                half_widths,
            } => {
                hs.tag("box").f64s(center).f64s(half_widths);
            }
            Shape::Ball { center, radius } => {
                hs.tag("ball").f64s(center).f64(*radius);
            }
        }
        hs.finish()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Lattice extents of the bounding box, padded with 1 for unused axes.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Lower corner of the lattice bounding box.
    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    /// Enclosing radius R with Ω ⊂ B(0, R) and R ≥ 1.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn hash(&self) -> &Digest {
        &self.hash
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn cell_center(&self, c: usize) -> Point {
        center_of(&self.origin, self.h, self.cells[c], self.dim)
    }

    pub fn cell_centers(&self) -> Vec<Point> {
        (0..self.n_cells()).map(|c| self.cell_center(c)).collect()
    }

    /// Cell index at lattice coordinates, if active.
    pub fn cell_at(&self, ijk: [isize; 3]) -> Option<usize> {
        for d in 0..3 {
            if ijk[d] < 0 || ijk[d] as usize >= self.dims[d] {
                return None;
            }
        }
        let idx = ijk[0] as usize + self.dims[0] * (ijk[1] as usize + self.dims[1] * ijk[2] as usize);
        match self.lookup[idx] {
            INACTIVE => None,
            c => Some(c as usize),
        }
    }

    /// Neighbor of cell `c` one step along `axis` in direction `side`.
    pub fn neighbor(&self, c: usize, axis: usize, side: i8) -> Option<usize> {
        let mut ijk = [0isize; 3];
        for d in 0..3 {
            ijk[d] = self.cells[c][d] as isize;
        }
        ijk[axis] += side as isize;
        self.cell_at(ijk)
    }

    /// Total boundary measure Σ dS.
    pub fn surface_area(&self) -> f64 {
        self.faces.iter().map(|f| f.area).sum()
    }

    pub fn check_same(&self, other_hash: &Digest, what: &str) -> Result<()> {
        if &self.hash != other_hash {
            return Err(Error::GridMismatch(format!("{what} was built on a different grid")));
        }
        Ok(())
    }

    /// Face pairs sharing an edge (3D) or a vertex (2D), each pair once with i < j.
    pub fn face_adjacency(&self) -> Vec<(usize, usize)> {
        let half = 0.5 * self.h;
        let mut ridges: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for b in 0..self.dim {
                if b == f.axis {
                    continue;
                }
                for s in [-1.0, 1.0] {
                    let mut p = f.center;
                    p[b] += s * half;
                    let mut key = [0i64; 3];
                    for d in 0..self.dim {
                        key[d] = ((p[d] - self.origin[d]) / half).round() as i64;
                    }
                    ridges.entry(key).or_default().push(fi);
                }
            }
        }
        let mut pairs = Vec::new();
        for fs in ridges.values() {
            for a in 0..fs.len() {
                for b in a + 1..fs.len() {
                    let (i, j) = (fs[a].min(fs[b]), fs[a].max(fs[b]));
                    if i != j {
                        pairs.push((i, j));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Serializes the grid specification into a versioned binary record.
    pub fn to_record(&self) -> Vec<u8> {
        let mut w = RecordWriter::new(b"SLGR", 1);
        w.u32(self.dim as u32);
        match &self.shape {
            Shape::Box {
                center,
                half_widths,
            } => {
                w.u8(0);
                center.iter().chain(half_widths).for_each(|v| w.f64(*v));
            }
            Shape::Ball { center, radius } => {
                w.u8(1);
                center.iter().for_each(|v| w.f64(*v));
                w.f64(*radius);
                w.f64(0.0);
                w.f64(0.0);
            }
        }
        w.f64(self.h);
        w.bytes(&self.hash);
        w.finish()
    }

    pub fn from_record(bytes: &[u8]) -> Result<Self> {
        let mut r = RecordReader::open(bytes, b"SLGR", 1)?;
        let dim = r.u32()? as usize;
        let tag = r.u8()?;
        let mut v = [0.0; 6];
        for x in v.iter_mut() {
            *x = r.f64()?;
        }
        let h = r.f64()?;
        let stored: Digest = r.bytes(32)?.try_into().unwrap();
        let shape = match tag {
            0 => Shape::Box {
                center: [v[0], v[1], v[2]],
                half_widths: [v[3], v[4], v[5]],
            },
            1 => Shape::Ball {
                center: [v[0], v[1], v[2]],
                radius: v[3],
            },
            t => return Err(Error::CorruptRecord(format!("unknown shape tag {t}"))),
        };
        let g = Self::build(dim, shape, h)?;
        if g.hash != stored {
            return Err(Error::CorruptRecord("grid hash mismatch".into()));
        }
        Ok(g)
    }
}

/// Direction-dependent split of the boundary faces.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPartition {
    pub alpha: Point,
    pub epsilon: f64,
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    pub plus_eps: Vec<usize>,
    pub minus_eps: Vec<usize>,
    pub grid_hash: Digest,
}

impl BoundaryPartition {
    pub fn measure(&self, grid: &DomainGrid, set: &[usize]) -> f64 {
        set.iter().map(|&f| grid.faces()[f].area).sum()
    }

    /// Mask over all faces marking membership in `minus_eps`.
    pub fn minus_eps_mask(&self, n_faces: usize) -> Vec<bool> {
        let mut m = vec![false; n_faces];
        for &f in &self.minus_eps {
            m[f] = true;
        }
        m
    }
}

pub fn partition_boundary(grid: &DomainGrid, alpha: Point, epsilon: f64) -> Result<BoundaryPartition> {
    let dim = grid.dim();
    if (norm(&alpha, 3) - 1.0).abs() > 1e-12 {
        return invalid(format!("alpha must be a unit vector, |alpha|={}", norm(&alpha, 3)));
    }
    if dim == 2 && alpha[2] != 0.0 {
        return invalid("alpha has a third component on a 2D grid");
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid(format!("epsilon must lie in (0,1), got {epsilon}"));
    }
    let mut part = BoundaryPartition {
        alpha,
        epsilon,
        plus: Vec::new(),
        minus: Vec::new(),
        plus_eps: Vec::new(),
        minus_eps: Vec::new(),
        grid_hash: *grid.hash(),
    };
    for (i, f) in grid.faces().iter().enumerate() {
        let an = dot(&alpha, &f.normal);
        if an > 0.0 {
            part.plus.push(i);
        } else {
            part.minus.push(i);
        }
        if an > epsilon {
            part.plus_eps.push(i);
        } else {
            part.minus_eps.push(i);
        }
    }
    Ok(part)
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point, dim: usize) -> f64 {
    a[..dim].iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>().sqrt()
}

fn center_of(origin: &Point, h: f64, ijk: [usize; 3], dim: usize) -> Point {
    let mut x = [0.0; 3];
    for d in 0..dim {
        x[d] = origin[d] + (ijk[d] as f64 + 0.5) * h;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn square_counts() {
        let g = square(0.25);
        assert_eq!(g.n_cells(), 16);
        assert_eq!(g.n_faces(), 16);
        assert!((g.surface_area() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn cube_counts_match_enumeration() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.5).unwrap();
        assert_eq!(g.n_cells(), 8);
        // oracle: each cell contributes one face per coordinate direction it touches
        let mut count = 0;
        for c in g.cells() {
            for d in 0..3 {
                count += (c[d] == 0) as usize + (c[d] == 1) as usize;
            }
        }
        assert_eq!(count, 24);
        assert_eq!(g.n_faces(), 24);
        assert!((g.surface_area() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(DomainGrid::build(3, Shape::unit_cube(), 0.0).is_err());
        assert!(DomainGrid::build(3, Shape::unit_cube(), -0.1).is_err());
        assert!(DomainGrid::build(4, Shape::unit_cube(), 0.25).is_err());
        assert!(DomainGrid::build(3, Shape::unit_cube(), 0.3).is_err());
        let ball = Shape::Ball {
            center: [0.0; 3],
            radius: 1.0,
        };
        assert!(DomainGrid::build(3, ball, 0.25).is_err());
    }

    #[test]
    fn normals_are_unit_and_radius_encloses() {
        let ball = Shape::Ball {
            center: [0.1, 0.0, 0.0],
            radius: 1.0,
        };
        let g = DomainGrid::build(3, ball, 0.1).unwrap();
        for f in g.faces() {
            assert!((norm(&f.normal, 3) - 1.0).abs() < 1e-12);
            assert!(norm(&f.center, 3) <= g.radius());
        }
        assert!(g.radius() >= 1.0);
    }

    #[test]
    fn ball_area_first_order() {
        let exact = 4.0 * std::f64::consts::PI;
        let mut errs = Vec::new();
        for h in [0.2, 0.1, 0.05] {
            let ball = Shape::Ball {
                center: [0.0; 3],
                radius: 1.0,
            };
            let g = DomainGrid::build(3, ball, h).unwrap();
            errs.push((g.surface_area() - exact).abs() / exact);
        }
        assert!(errs[2] < 0.1, "{errs:?}");
        assert!(errs[2] < errs[0], "{errs:?}");
    }

    #[test]
    fn cube_partition() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.25).unwrap();
        for eps in [0.5, 0.999, 1e-6] {
            let p = partition_boundary(&g, [1.0, 0.0, 0.0], eps).unwrap();
            assert_eq!(p.plus_eps.len(), 16);
            assert!(p.plus_eps.iter().all(|&f| g.faces()[f].normal[0] == 1.0));
            assert_eq!(p.minus_eps.len(), 80);
        }
        assert!(partition_boundary(&g, [1.0, 1.0, 0.0], 0.5).is_err());
        assert!(partition_boundary(&g, [1.0, 0.0, 0.0], 1.0).is_err());
        assert!(partition_boundary(&g, [1.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn hemisphere_fraction() {
        let ball = Shape::Ball {
            center: [0.0; 3],
            radius: 1.0,
        };
        let g = DomainGrid::build(3, ball, 0.05).unwrap();
        let p = partition_boundary(&g, [0.0, 0.0, 1.0], 1e-9).unwrap();
        let frac = p.measure(&g, &p.plus_eps) / g.surface_area();
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }

    #[test]
    fn adjacency_cube_degrees() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.5).unwrap();
        let adj = g.face_adjacency();
        let mut deg = vec![0; g.n_faces()];
        for (i, j) in adj {
            deg[i] += 1;
            deg[j] += 1;
        }
        // every face of the 2x2x2 cube touches 4 others through its 4 edges
        assert!(deg.iter().all(|&d| d == 4), "{deg:?}");
    }

    #[test]
    fn record_roundtrip() {
        let g = DomainGrid::build(3, Shape::unit_cube(), 0.25).unwrap();
        let bytes = g.to_record();
        let g2 = DomainGrid::from_record(&bytes).unwrap();
        assert_eq!(g.hash(), g2.hash());
        let mut bad = bytes.clone();
        bad[12] ^= 0x40;
        assert!(DomainGrid::from_record(&bad).is_err());
    }
}
