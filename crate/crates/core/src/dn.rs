//! Discrete Dirichlet-to-Neumann maps on face-indicator bases, boundary
//! fractional Sobolev norms and an on-disk cache of assembled maps.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::eigen::{largest_magnitude, LanczosOptions};
use crate::error::{invalid, Error, Result};
use crate::forward::{ForwardSolver, SolverOptions};
use crate::geometry::{BoundaryPartition, DomainGrid};
use crate::potential::PotentialField;
use crate::record::{hex, ContentHasher, Digest, RecordReader, RecordWriter};

const COLUMN_CHUNK: usize = 256;

/// A discrete DN map. Row `i` of `matrix` is the outward flux on face
/// `row_faces[i]`; column `j` is the indicator of face `j`.
#[derive(Clone, Debug)]
pub struct DnOperator {
    grid_hash: Digest,
    q_hash: Digest,
    omega: f64,
    matrix: Mat<f64>,
    row_faces: Vec<usize>,
    restriction: Option<(f64, [f64; 3])>,
}

/// Assembles the full DN map with the default solver options.
pub fn build_dn(grid: &DomainGrid, q: &PotentialField, omega: f64) -> Result<DnOperator> {
    build_dn_with(grid, q, omega, SolverOptions::default())
}

pub fn build_dn_with(grid: &DomainGrid, q: &PotentialField, omega: f64, opts: SolverOptions) -> Result<DnOperator> {
    let solver = ForwardSolver::new(grid, q, omega, opts)?;
    dn_from_solver(grid, q, &solver)
}

/// Flux trace `2(f - u_c)/h` of every face-indicator solution, one column per face.
pub(crate) fn dn_from_solver(grid: &DomainGrid, q: &PotentialField, solver: &ForwardSolver) -> Result<DnOperator> {
    let nf = grid.n_faces();
    let n = grid.n_cells();
    let h = grid.h();
    let face_cells: Vec<usize> = grid.faces().iter().map(|f| f.cell).collect();
    let w = solver.system().boundary_weight;
    let starts: Vec<usize> = (0..nf).step_by(COLUMN_CHUNK).collect();
    let blocks: Vec<Mat<f64>> = starts
        .par_iter()
        .map(|&j0| {
            let m = COLUMN_CHUNK.min(nf - j0);
            let mut rhs = Mat::<f64>::zeros(n, m);
            for j in 0..m {
                rhs[(face_cells[j0 + j], j)] += w;
            }
            solver.solve_in_place(rhs.as_mut());
            Mat::from_fn(nf, m, |i, j| {
                let delta = if i == j0 + j { 1.0 } else { 0.0 };
                2.0 * (delta - rhs[(face_cells[i], j)]) / h
            })
        })
        .collect();
    let mut matrix = Mat::<f64>::zeros(nf, nf);
    for (b, &j0) in blocks.iter().zip(&starts) {
        for j in 0..b.ncols() {
            for i in 0..nf {
                matrix[(i, j0 + j)] = b[(i, j)];
            }
        }
    }
    if (0..nf).any(|j| (0..nf).any(|i| !matrix[(i, j)].is_finite())) {
        return Err(Error::AssumptionViolation {
            reason: "DN assembly produced non-finite entries".into(),
            q_id: q.id(),
            omega: solver.omega(),
        });
    }
    Ok(DnOperator {
        grid_hash: *grid.hash(),
        q_hash: *q.hash(),
        omega: solver.omega(),
        matrix,
        row_faces: (0..nf).collect(),
        restriction: None,
    })
}

impl DnOperator {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn grid_hash(&self) -> &Digest {
        &self.grid_hash
    }

    pub fn q_hash(&self) -> &Digest {
        &self.q_hash
    }

    pub fn q_id(&self) -> String {
        hex(&self.q_hash)[..12].to_string()
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn row_faces(&self) -> &[usize] {
        &self.row_faces
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_restricted(&self) -> bool {
        self.restriction.is_some()
    }

    /// `(epsilon, alpha)` of the partition the rows were restricted to.
    pub fn restriction(&self) -> Option<(f64, [f64; 3])> {
        self.restriction
    }

    pub const SRC_ORDER: f64 = 1.5;
    pub const TGT_ORDER: f64 = 0.5;

    /// Applies the map to complex face data.
    pub fn apply(&self, f: &[C64]) -> Result<Vec<C64>> {
        if f.len() != self.n_cols() {
            return Err(Error::GridMismatch(format!(
                "boundary data has {} entries, operator expects {}",
                f.len(),
                self.n_cols()
            )));
        }
        Ok((0..self.matrix.nrows())
            .map(|i| (0..f.len()).map(|j| f[j] * self.matrix[(i, j)]).sum())
            .collect())
    }

    /// Keeps the rows in `part.minus_eps`.
    pub fn restrict_partial(&self, part: &BoundaryPartition) -> Result<DnOperator> {
        if part.grid_hash != self.grid_hash {
            return Err(Error::GridMismatch("partition was built on a different grid".into()));
        }
        let keep = part.minus_eps_mask(self.n_cols());
        let rows: Vec<usize> = (0..self.row_faces.len()).filter(|&i| keep[self.row_faces[i]]).collect();
        let matrix = Mat::from_fn(rows.len(), self.n_cols(), |i, j| self.matrix[(rows[i], j)]);
        Ok(DnOperator {
            row_faces: rows.iter().map(|&i| self.row_faces[i]).collect(),
            matrix,
            restriction: Some((part.epsilon, part.alpha)),
            ..self.clone()
        })
    }

    /// `self - other`, keeping the row set and metadata of `self`.
    pub fn difference(&self, other: &DnOperator) -> Result<DnOperator> {
        if self.grid_hash != other.grid_hash {
            return Err(Error::GridMismatch("DN maps on different grids".into()));
        }
        if self.row_faces != other.row_faces {
            return Err(Error::GridMismatch("DN maps have different row sets".into()));
        }
        if self.omega != other.omega {
            return invalid("DN maps at different frequencies");
        }
        let mut d = self.clone();
        d.matrix = &self.matrix - &other.matrix;
        let mut hs = ContentHasher::new();
        hs.tag("difference").digest(&self.q_hash).digest(&other.q_hash);
        d.q_hash = hs.finish();
        Ok(d)
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.norm_l2()
    }

    /// `‖Λ - Λᵀ‖_F / ‖Λ‖_F` on the full map.
    pub fn symmetry_defect(&self) -> Result<f64> {
        if self.matrix.nrows() != self.matrix.ncols() {
            return invalid("symmetry defect needs the full map");
        }
        let a = self.frobenius();
        if a == 0.0 {
            return Ok(0.0);
        }
        Ok((&self.matrix - self.matrix.transpose()).norm_l2() / a)
    }

    /// Plain spectral norm of the stored matrix.
    pub fn l2_norm(&self) -> f64 {
        if self.matrix.nrows() == 0 || self.frobenius() == 0.0 {
            return 0.0;
        }
        self.matrix
            .singular_values()
            .map(|s| s.first().copied().unwrap_or(0.0))
            .unwrap_or(f64::NAN)
    }

    /// Binary record: dimensions, face ids, complex entries and metadata.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = RecordWriter::new(b"SLDN", 1);
        w.bytes(&self.grid_hash);
        w.bytes(&self.q_hash);
        w.f64(self.omega);
        match self.restriction {
            Some((eps, a)) => {
                w.u8(1);
                w.f64(eps);
                a.iter().for_each(|v| w.f64(*v));
            }
            None => w.u8(0),
        }
        let (r, c) = (self.matrix.nrows(), self.matrix.ncols());
        w.u64(r as u64);
        w.u64(c as u64);
        self.row_faces.iter().for_each(|&f| w.u64(f as u64));
        (0..c).for_each(|j| w.u64(j as u64));
        for i in 0..r {
            for j in 0..c {
                w.f64(self.matrix[(i, j)]);
                w.f64(0.0);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = RecordReader::open(bytes, b"SLDN", 1)?;
        let grid_hash: Digest = rd.bytes(32)?.try_into().unwrap();
        let q_hash: Digest = rd.bytes(32)?.try_into().unwrap();
        let omega = rd.f64()?;
        let restriction = match rd.u8()? {
            0 => None,
            1 => {
                let eps = rd.f64()?;
                Some((eps, [rd.f64()?, rd.f64()?, rd.f64()?]))
            }
            t => return Err(Error::CorruptRecord(format!("unknown restriction tag {t}"))),
        };
        let r = rd.u64()? as usize;
        let c = rd.u64()? as usize;
        if r > c || c > 1 << 24 {
            return Err(Error::CorruptRecord(format!("implausible DN shape {r}x{c}")));
        }
        let row_faces = (0..r).map(|_| rd.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        for j in 0..c {
            if rd.u64()? as usize != j {
                return Err(Error::CorruptRecord("column ids out of order".into()));
            }
        }
        let mut matrix = Mat::<f64>::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                matrix[(i, j)] = rd.f64()?;
                if rd.f64()? != 0.0 {
                    return Err(Error::CorruptRecord("complex DN entries are not supported".into()));
                }
            }
        }
        if !rd.is_done() {
            return Err(Error::CorruptRecord("trailing bytes".into()));
        }
        Ok(Self {
            grid_hash,
            q_hash,
            omega,
            matrix,
            row_faces,
            restriction,
        })
    }

    /// CSV with columns `row_face,col_face,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row_face,col_face,re,im")?;
        for (i, &rf) in self.row_faces.iter().enumerate() {
            for j in 0..self.n_cols() {
                writeln!(out, "{rf},{j},{:.12e},{:.12e}", self.matrix[(i, j)], 0.0)?;
            }
        }
        Ok(())
    }
}

/// Fractional powers of `I + L_B`, with `L_B` the face-adjacency graph
/// Laplacian scaled by `1/h²`.
pub struct BoundaryNormCalculus {
    grid_hash: Digest,
    laplacian: Mat<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
    powers: Mutex<BTreeMap<i64, Arc<Mat<f64>>>>,
}

impl std::fmt::Debug for BoundaryNormCalculus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundaryNormCalculus").field("n", &self.eigenvalues.len()).finish()
    }
}

impl BoundaryNormCalculus {
    pub fn new(grid: &DomainGrid) -> Result<Self> {
        let nf = grid.n_faces();
        let w = 1.0 / (grid.h() * grid.h());
        let mut lap = Mat::<f64>::zeros(nf, nf);
        for (i, j) in grid.face_adjacency() {
            lap[(i, j)] -= w;
            lap[(j, i)] -= w;
            lap[(i, i)] += w;
            lap[(j, j)] += w;
        }
        let evd = lap
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::EigenNonConvergence(format!("boundary Laplacian: {e:?}")))?;
        let s = evd.S();
        let eigenvalues: Vec<f64> = (0..nf).map(|i| s[i].max(0.0)).collect();
        let calc = Self {
            grid_hash: *grid.hash(),
            laplacian: lap,
            eigenvalues,
            eigenvectors: evd.U().to_owned(),
            powers: Mutex::new(BTreeMap::new()),
        };
        for t in [0.25, 0.5, 0.75] {
            calc.power(t);
        }
        Ok(calc)
    }

    pub fn laplacian(&self) -> &Mat<f64> {
        &self.laplacian
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn grid_hash(&self) -> &Digest {
        &self.grid_hash
    }

    /// `(I + L_B)^t`, cached by `t` to 1e-9.
    pub fn power(&self, t: f64) -> Arc<Mat<f64>> {
        let key = (t * 1e9).round() as i64;
        if let Some(p) = self.powers.lock().unwrap().get(&key) {
            return p.clone();
        }
        let u = &self.eigenvectors;
        let d: Vec<f64> = self.eigenvalues.iter().map(|l| (1.0 + l).powf(t)).collect();
        let scaled = Mat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * d[j]);
        let p = Arc::new(&scaled * u.transpose());
        self.powers.lock().unwrap().insert(key, p.clone());
        p
    }

    /// Max-entry error of `(I+L_B)^{1/2}(I+L_B)^{1/2} - (I+L_B)`.
    pub fn reconstruction_error(&self) -> f64 {
        let half = self.power(0.5);
        let sq = &*half * &*half;
        let n = self.laplacian.nrows();
        let mut err = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                err = err.max((sq[(i, j)] - id - self.laplacian[(i, j)]).abs());
            }
        }
        err
    }
}

/// `‖(I+L_B)^{1/4} P A (I+L_B)^{-3/4}‖₂` by a Krylov iteration on the normal
/// operator, relative tolerance 1e-6.
pub fn operator_norm_fractional(a: &DnOperator, calc: &BoundaryNormCalculus) -> Result<f64> {
    if a.grid_hash != calc.grid_hash {
        return Err(Error::GridMismatch("norm calculus built on a different grid".into()));
    }
    let nf = a.n_cols();
    if a.frobenius() == 0.0 {
        return Ok(0.0);
    }
    let left = calc.power(0.25);
    let right = calc.power(-0.75);
    let left_rows = Mat::from_fn(nf, a.row_faces.len(), |i, k| left[(i, a.row_faces[k])]);
    let b = &(&left_rows * &a.matrix) * &*right;
    let bt = b.transpose().to_owned();
    let opts = LanczosOptions {
        max_dim: nf.min(10_000),
        tol: 1e-6,
        seed: 0x0b5e,
    };
    let top = largest_magnitude(
        nf,
        1,
        |x| {
            let xv = Mat::from_fn(nf, 1, |i, _| x[i]);
            let y = &bt * &(&b * &xv);
            Ok((0..nf).map(|i| y[(i, 0)]).collect())
        },
        opts,
    )
    .map_err(|e| match e {
        Error::EigenNonConvergence(m) => Error::NonConvergence {
            iterations: opts.max_dim,
            detail: m,
        },
        e => e,
    })?;
    Ok(top[0].max(0.0).sqrt())
}

/// Identity of a full DN map: grid, potential values, frequency and solver settings.
pub fn dn_cache_key(grid: &DomainGrid, q: &PotentialField, omega: f64, opts: &SolverOptions) -> Digest {
    let mut hs = ContentHasher::new();
    hs.tag("dn-v1")
        .digest(grid.hash())
        .digest(q.hash())
        .f64(omega)
        .f64(opts.tol)
        .f64(opts.max_condition)
        .u64(opts.check_condition as u64);
    hs.finish()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub memory_hits: usize,
    pub disk_hits: usize,
    pub solves: usize,
    pub corrupt: usize,
}

/// Full DN maps keyed by content hash, held in memory and optionally on disk.
/// Each key is computed at most once; concurrent requests for the same key wait.
#[derive(Default)]
pub struct DnCache {
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<Digest, Arc<Mutex<Option<Arc<DnOperator>>>>>>,
    memory_hits: AtomicUsize,
    disk_hits: AtomicUsize,
    solves: AtomicUsize,
    corrupt: AtomicUsize,
}

impl DnCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: Some(dir.as_ref().to_path_buf()),
            ..Self::default()
        })
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            memory_hits: self.memory_hits.load(Ordering::SeqCst),
            disk_hits: self.disk_hits.load(Ordering::SeqCst),
            solves: self.solves.load(Ordering::SeqCst),
            corrupt: self.corrupt.load(Ordering::SeqCst),
        }
    }

    fn path(&self, key: &Digest) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("dn-{}.bin", hex(key))))
    }

    pub fn get_or_build(
        &self,
        grid: &DomainGrid,
        q: &PotentialField,
        omega: f64,
        opts: SolverOptions,
    ) -> Result<Arc<DnOperator>> {
        let key = dn_cache_key(grid, q, omega, &opts);
        let slot = self.slots.lock().unwrap().entry(key).or_default().clone();
        let mut guard = slot.lock().unwrap();
        if let Some(dn) = guard.as_ref() {
            self.memory_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(dn.clone());
        }
        if let Some(p) = self.path(&key) {
            if let Ok(bytes) = fs::read(&p) {
                match DnOperator::from_bytes(&bytes) {
                    Ok(dn) if dn.grid_hash == *grid.hash() && dn.q_hash == *q.hash() && dn.omega == omega => {
                        self.disk_hits.fetch_add(1, Ordering::SeqCst);
                        let dn = Arc::new(dn);
                        *guard = Some(dn.clone());
                        return Ok(dn);
                    }
                    _ => {
                        log::warn!("discarding corrupt cache entry {}", p.display());
                        self.corrupt.fetch_add(1, Ordering::SeqCst);
                    }
                }
            }
        }
        log::info!("dn solve q={} omega={omega}", q.id());
        let dn = Arc::new(build_dn_with(grid, q, omega, opts)?);
        self.solves.fetch_add(1, Ordering::SeqCst);
        if let Some(p) = self.path(&key) {
            let tmp = p.with_extension(format!("tmp{}", std::process::id()));
            fs::write(&tmp, dn.to_bytes())?;
            fs::rename(&tmp, &p)?;
        }
        *guard = Some(dn.clone());
        Ok(dn)
    }
}
