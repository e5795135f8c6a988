//! Experiment configuration and the command implementations behind the CLI.
//!
//! Configs are flat `key = value` text; `#` starts a comment. Relative paths
//! resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::carleman::{self, CarlemanReport};
use crate::cgo::{self, make_zeta_pair, solve_pair_member, solve_remainder, CgoOptions};
use crate::dn::{operator_norm_fractional, BoundaryNormCalculus, DnCache};
use crate::error::{invalid, Error, Result};
use crate::forward::{dirichlet_spectrum_check, neumann_trace, solve_dirichlet, FrequencyCheck, SolverOptions};
use crate::fourier::{
    boundary_term_check, fourier_transform_at, frame_for, green_identity_residual, mode_lattice, reconstruct,
    estimate_fourier_mode, FourierModeEstimate,
};
use crate::geometry::{dot, partition_boundary, DomainGrid, Point, Shape};
use crate::gridfield::{read_potential, GridField, Support};
use crate::potential::PotentialField;
use crate::schedule::{schedule_params, ScheduleConfig};
use crate::sweep::{
    build_pairs, fit_beta, longest_non_decreasing, read_gap_points, run_sweep, write_beta_csv, write_failures_csv,
    with_bound, write_records_csv, write_svg, PairFamily, PotentialPair, SweepResult, SweepSpec,
};

/// Potential used by single-potential commands.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSource {
    Zero,
    /// `q₁` of the first pair of the family.
    Pair,
    File(PathBuf),
}

/// Dirichlet data for `forward`.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryData {
    /// `f = a·x`.
    Linear(Point),
    /// `f = e^{iκ·x}`.
    PlaneWave(Point),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub shape: Shape,
    pub h: f64,
    pub pair_family: String,
    pub pair_count: usize,
    pub pair_files: Vec<(PathBuf, PathBuf)>,
    pub potential: PotentialSource,
    pub boundary: BoundaryData,
    pub omega: f64,
    pub omega_grid: Vec<f64>,
    pub alpha: Point,
    pub epsilon: f64,
    pub s: u32,
    pub theta: f64,
    pub c_small: f64,
    pub margin: f64,
    pub lambda0: f64,
    /// Class bound `M`; the family maximum when unset.
    pub m_bound: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c_norm: f64,
    pub c_fourier: f64,
    pub lambda_grid: Vec<f64>,
    pub lambda: f64,
    pub rho: f64,
    pub solver_tol: f64,
    pub max_condition: f64,
    pub test_fields: usize,
    pub output_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            shape: Shape::unit_cube(),
            h: 1.0 / 16.0,
            pair_family: "frequency-ladder".into(),
            pair_count: 8,
            pair_files: Vec::new(),
            potential: PotentialSource::Pair,
            boundary: BoundaryData::Linear([1.0, 0.0, 0.0]),
            omega: 2.0,
            omega_grid: vec![2.0, 4.0, 8.0, 16.0],
            alpha: [1.0, 0.0, 0.0],
            epsilon: 0.1,
            s: 2,
            theta: 0.5,
            c_small: 1e-3,
            margin: 0.1,
            lambda0: 1.0,
            m_bound: None,
            c1: cgo::FROZEN.c1,
            c2: cgo::FROZEN.c2,
            c_norm: cgo::FROZEN.c_norm,
            c_fourier: 1.0,
            lambda_grid: vec![5.0, 10.0, 20.0, 50.0],
            lambda: 4.0,
            rho: 4.0,
            solver_tol: 1e-10,
            max_condition: 1e10,
            test_fields: 200,
            output_dir: PathBuf::from("out"),
            cache_dir: None,
            seed: 0,
            jobs: 1,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let v = v.trim();
    let parsed = match v.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
        None => v.parse().ok(),
    };
    match parsed {
        Some(x) if x.is_finite() => Ok(x),
        _ => invalid(format!("{key}: expected a number, got '{v}'")),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| parse_f64(key, x)).collect()
}

fn parse_point(key: &str, v: &str) -> Result<Point> {
    let xs = parse_list(key, v)?;
    if xs.len() != 3 {
        return invalid(format!("{key}: expected 3 comma-separated numbers"));
    }
    Ok([xs[0], xs[1], xs[2]])
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("{key}: expected an integer, got '{v}'")))
}

impl ExperimentConfig {
    /// Parses config text; relative paths are taken against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("line {}: expected 'key = value'", n + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return invalid(format!("line {}: duplicate key '{}'", n + 1, k.trim()));
            }
        }
        let mut c = Self::default();
        let path = |v: &str| base.join(v);
        let (mut shape_kind, mut center, mut half, mut radius) = ("box".to_string(), [0.0; 3], [0.5; 3], 0.5);
        for (k, v) in &kv {
            let v = v.as_str();
            match k.as_str() {
                "dim" => c.dim = parse_int(k, v)?,
                "shape" => shape_kind = v.to_string(),
                "center" => center = parse_point(k, v)?,
                "half_widths" => half = parse_point(k, v)?,
                "radius" => radius = parse_f64(k, v)?,
                "h" => c.h = parse_f64(k, v)?,
                "pair_family" => c.pair_family = v.to_string(),
                "pair_count" => c.pair_count = parse_int(k, v)?,
                "pair_files" => {
                    c.pair_files = v
                        .split(',')
                        .map(|p| {
                            p.split_once(':')
                                .map(|(a, b)| (path(a.trim()), path(b.trim())))
                                .ok_or_else(|| Error::InvalidInput(format!("pair_files: expected 'q1:q2', got '{p}'")))
                        })
                        .collect::<Result<_>>()?
                }
                "potential" => {
                    c.potential = match v {
                        "zero" => PotentialSource::Zero,
                        "pair" => PotentialSource::Pair,
                        file => PotentialSource::File(path(file)),
                    }
                }
                "boundary" => {
                    let (kind, vec) = v
                        .split_once(':')
                        .ok_or_else(|| Error::InvalidInput("boundary: expected 'linear:a,b,c' or 'plane-wave:kx,ky,kz'".into()))?;
                    let p = parse_point(k, vec)?;
                    c.boundary = match kind.trim() {
                        "linear" => BoundaryData::Linear(p),
                        "plane-wave" => BoundaryData::PlaneWave(p),
                        other => return invalid(format!("boundary: unknown kind '{other}'")),
                    };
                }
                "omega" => c.omega = parse_f64(k, v)?,
                "omega_grid" => c.omega_grid = parse_list(k, v)?,
                "alpha" => c.alpha = parse_point(k, v)?,
                "epsilon" => c.epsilon = parse_f64(k, v)?,
                "s" => c.s = parse_int(k, v)?,
                "theta" => c.theta = parse_f64(k, v)?,
                "c_small" => c.c_small = parse_f64(k, v)?,
                "margin" => c.margin = parse_f64(k, v)?,
                "lambda0" => c.lambda0 = parse_f64(k, v)?,
                "m_bound" => c.m_bound = Some(parse_f64(k, v)?),
                "c1" => c.c1 = parse_f64(k, v)?,
                "c2" => c.c2 = parse_f64(k, v)?,
                "c_norm" => c.c_norm = parse_f64(k, v)?,
                "c_fourier" => c.c_fourier = parse_f64(k, v)?,
                "lambda_grid" => c.lambda_grid = parse_list(k, v)?,
                "lambda" => c.lambda = parse_f64(k, v)?,
                "rho" => c.rho = parse_f64(k, v)?,
                "solver_tol" => c.solver_tol = parse_f64(k, v)?,
                "max_condition" => c.max_condition = parse_f64(k, v)?,
                "test_fields" => c.test_fields = parse_int(k, v)?,
                "output_dir" => c.output_dir = path(v),
                "cache_dir" => c.cache_dir = if v.is_empty() { None } else { Some(path(v)) },
                "seed" => c.seed = parse_int(k, v)?,
                "jobs" => c.jobs = parse_int(k, v)?,
                other => return invalid(format!("unknown key '{other}'")),
            }
        }
        c.shape = match shape_kind.as_str() {
            "box" => Shape::Box {
                center,
                half_widths: half,
            },
            "ball" => Shape::Ball { center, radius },
            other => return invalid(format!("shape: expected 'box' or 'ball', got '{other}'")),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega_grid.is_empty() || self.omega_grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("omega_grid must be non-empty and strictly increasing");
        }
        if self.omega_grid.iter().any(|w| *w <= 1.0) {
            return invalid("omega_grid frequencies must exceed 1");
        }
        if !(self.omega >= 0.0) {
            return invalid("omega must be non-negative");
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("lambda_grid must be non-empty and strictly increasing");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return invalid("epsilon must lie in (0,1)");
        }
        if self.pair_count == 0 && self.pair_files.is_empty() {
            return invalid("pair_count must be positive");
        }
        if self.jobs == 0 {
            return invalid("jobs must be positive");
        }
        for (a, b) in &self.pair_files {
            for p in [a, b] {
                if !p.is_file() {
                    return invalid(format!("pair file {} does not exist", p.display()));
                }
            }
        }
        if let PotentialSource::File(p) = &self.potential {
            if !p.is_file() {
                return invalid(format!("potential file {} does not exist", p.display()));
            }
        }
        if self.pair_family == "files" && self.pair_files.is_empty() {
            return invalid("pair_family = files needs pair_files");
        }
        if self.pair_family != "files" && !self.pair_files.is_empty() {
            return invalid("pair_files needs pair_family = files");
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<DomainGrid> {
        DomainGrid::build(self.dim, self.shape.clone(), self.h)
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_condition: self.max_condition,
            ..SolverOptions::default()
        }
    }

    pub fn cache(&self) -> Result<DnCache> {
        match &self.cache_dir {
            Some(d) => DnCache::on_disk(d),
            None => Ok(DnCache::in_memory()),
        }
    }

    pub fn pairs(&self, grid: &DomainGrid) -> Result<Vec<PotentialPair>> {
        let pairs = self.family_pairs(grid)?;
        match self.m_bound {
            Some(m) => with_bound(grid, pairs, m),
            None => Ok(pairs),
        }
    }

    fn family_pairs(&self, grid: &DomainGrid) -> Result<Vec<PotentialPair>> {
        if self.pair_family == "files" {
            let loaded: Vec<(PotentialField, PotentialField)> = self
                .pair_files
                .iter()
                .map(|(a, b)| Ok((read_potential(a, grid, self.s, f64::MAX)?, read_potential(b, grid, self.s, f64::MAX)?)))
                .collect::<Result<_>>()?;
            let mut m = 1e-12f64;
            for (a, b) in &loaded {
                m = m.max(a.sobolev_norm(grid)?).max(b.sobolev_norm(grid)?);
            }
            return loaded
                .into_iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    Ok(PotentialPair {
                        label: format!("file-{i}"),
                        q1: PotentialField::new(grid, a.values().to_vec(), self.s, m)?,
                        q2: PotentialField::new(grid, b.values().to_vec(), self.s, m)?,
                    })
                })
                .collect();
        }
        build_pairs(grid, &PairFamily::parse(&self.pair_family, self.pair_count, self.seed)?, self.s)
    }

    pub fn potential(&self, grid: &DomainGrid) -> Result<PotentialField> {
        match &self.potential {
            PotentialSource::Zero => PotentialField::zero(grid, self.s, 1.0),
            PotentialSource::Pair => Ok(self.pairs(grid)?.swap_remove(0).q1),
            PotentialSource::File(p) => {
                let q = read_potential(p, grid, self.s, f64::MAX)?;
                let m = q.sobolev_norm(grid)?.max(1e-12);
                PotentialField::new(grid, q.values().to_vec(), self.s, m)
            }
        }
    }

    pub fn schedule(&self, m: f64) -> ScheduleConfig {
        ScheduleConfig {
            n: self.dim,
            s: self.s as f64,
            theta: self.theta,
            radius: self.shape_radius(),
            m_bound: m,
            lambda0: self.lambda0,
            c2m: self.c2 * m,
            margin: self.margin,
        }
    }

    fn shape_radius(&self) -> f64 {
        self.grid().map(|g| g.radius()).unwrap_or(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Partial,
    Failed,
}

#[derive(Clone, Debug)]
pub struct CommandOutcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Process exit code for an outcome or error.
pub fn exit_code(result: &Result<CommandOutcome>) -> i32 {
    match result {
        Ok(o) => match o.status {
            Status::Ok => 0,
            Status::Partial => 4,
            Status::Failed => 5,
        },
        Err(Error::InvalidInput(_) | Error::GridMismatch(_) | Error::CorruptRecord(_) | Error::Io(_)) => 2,
        Err(_) => 3,
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn done(mut self, status: Status, summary: String) -> Result<CommandOutcome> {
        self.write("summary.txt", |w| Ok(w.write_all(summary.as_bytes())?))?;
        Ok(CommandOutcome {
            status,
            files: self.files,
            summary,
        })
    }
}

fn require_frequency(check: &FrequencyCheck, q: &PotentialField) -> Result<()> {
    if check.passes_a && check.passes_b {
        return Ok(());
    }
    let reason = if !check.passes_a {
        format!("0 is a Dirichlet eigenvalue (nearest {:.6e})", check.nearest_to_zero)
    } else {
        format!(
            "omega^2 within {:.3e} of eigenvalue {:.6e}",
            check.dist_to_spectrum, check.nearest_eigenvalue
        )
    };
    Err(Error::AssumptionViolation {
        reason,
        q_id: q.id(),
        omega: check.omega,
    })
}

/// Assumptions (A) and (B) at `cfg.omega`; at ω = 0 only (A) applies.
fn frequency_check(cfg: &ExperimentConfig, grid: &DomainGrid, q: &PotentialField) -> Result<FrequencyCheck> {
    let omega = if cfg.omega > 0.0 { cfg.omega } else { 1e-3 };
    let mut check = dirichlet_spectrum_check(grid, q, omega, 6, cfg.c_small)?;
    if cfg.omega == 0.0 {
        check.omega = 0.0;
        check.passes_b = true;
    }
    require_frequency(&check, q)?;
    Ok(check)
}

/// Solves one boundary value problem; writes `u.txt` and `trace.txt`.
pub fn cmd_forward(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let grid = cfg.grid()?;
    let q = cfg.potential(&grid)?;
    let check = frequency_check(cfg, &grid, &q)?;
    let f: Vec<C64> = grid
        .faces()
        .iter()
        .map(|fc| match cfg.boundary {
            BoundaryData::Linear(a) => C64::from(dot(&a, &fc.center)),
            BoundaryData::PlaneWave(k) => C64::from_polar(1.0, dot(&k, &fc.center)),
        })
        .collect();
    let u = solve_dirichlet(&grid, &q, cfg.omega, &f)?;
    let trace = neumann_trace(&grid, &u, &f)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    let uf = GridField::complex(&grid, Support::Cells, u);
    out.write("u.txt", |w| Ok(w.write_all(uf.to_text().as_bytes())?))?;
    let tf = GridField::complex(&grid, Support::Faces, trace);
    out.write("trace.txt", |w| Ok(w.write_all(tf.to_text().as_bytes())?))?;
    let summary = format!(
        "command forward\nq {}\nomega {:.12e}\ncells {}\nfaces {}\nnearest_eigenvalue {:.12e}\ndist_to_spectrum {:.12e}\n",
        q.id(),
        cfg.omega,
        grid.n_cells(),
        grid.n_faces(),
        check.nearest_eigenvalue,
        check.dist_to_spectrum
    );
    out.done(Status::Ok, summary)
}

/// Builds the full and partial DN maps of the configured potential.
pub fn cmd_dnmap(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let grid = cfg.grid()?;
    let q = cfg.potential(&grid)?;
    frequency_check(cfg, &grid, &q)?;
    let cache = cfg.cache()?;
    let dn = cache.get_or_build(&grid, &q, cfg.omega, cfg.solver())?;
    let part = partition_boundary(&grid, cfg.alpha, cfg.epsilon)?;
    let partial = dn.restrict_partial(&part)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("dn.csv", |w| dn.write_csv(w))?;
    out.write("dn_partial.csv", |w| partial.write_csv(w))?;
    let summary = format!(
        "command dnmap\nq {}\nomega {:.12e}\nfaces {}\nmeasured_faces {}\nsymmetry_defect {:.6e}\nl2_norm {:.12e}\n",
        q.id(),
        cfg.omega,
        grid.n_faces(),
        partial.row_faces().len(),
        dn.symmetry_defect()?,
        dn.l2_norm()
    );
    out.done(Status::Ok, summary)
}

/// One row of the CGO check.
#[derive(Clone, Debug, PartialEq)]
pub struct CgoCheckRow {
    pub lambda: f64,
    pub zeta_norm: f64,
    pub iterations: usize,
    pub residual: f64,
    pub remainder_norm: f64,
    pub ratio: f64,
    pub ratio_holds: bool,
    pub h1: cgo::NormBound,
    pub h2: cgo::NormBound,
}

pub fn cgo_check_rows(cfg: &ExperimentConfig, grid: &DomainGrid, q: &PotentialField) -> Result<Vec<CgoCheckRow>> {
    let (alpha, beta) = frame_for(&[0.0; 3], &cfg.alpha)?;
    let opts = CgoOptions::default();
    cfg.lambda_grid
        .iter()
        .map(|&lambda| {
            let pair = make_zeta_pair([0.0; 3], alpha, beta, lambda, cfg.omega)?;
            let (sol, _) = solve_pair_member(grid, q, &pair, false, &opts)?;
            let (ratio_holds, ratio) = cgo::verify_remainder_bound(&sol, q, grid, cfg.c1)?;
            Ok(CgoCheckRow {
                lambda,
                zeta_norm: sol.magnitude(),
                iterations: sol.iterations,
                residual: sol.residual,
                remainder_norm: sol.remainder_sobolev_norm(cfg.s as f64),
                ratio,
                ratio_holds,
                h1: cgo::cgo_norm_bounds(&sol, grid, 1, cfg.c_norm)?,
                h2: cgo::cgo_norm_bounds(&sol, grid, 2, cfg.c_norm)?,
            })
        })
        .collect()
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// CGO remainder and norm bounds over the λ grid.
pub fn cmd_cgo_check(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let grid = cfg.grid()?;
    let q = cfg.potential(&grid)?;
    let rows = cgo_check_rows(cfg, &grid, &q)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("cgo.csv", |w| {
        writeln!(w, "lambda,zeta_norm,iterations,residual,remainder_norm,ratio,c1,ratio_holds,h1_norm,h1_bound,h2_norm,h2_bound")?;
        for r in &rows {
            writeln!(
                w,
                "{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.lambda,
                r.zeta_norm,
                r.iterations,
                r.residual,
                r.remainder_norm,
                r.ratio,
                cfg.c1,
                r.ratio_holds as u8,
                r.h1.norm,
                r.h1.bound,
                r.h2.norm,
                r.h2.bound
            )?;
        }
        Ok(())
    })?;
    let zs: Vec<f64> = rows.iter().map(|r| r.zeta_norm).collect();
    let rs: Vec<f64> = rows.iter().map(|r| r.remainder_norm).collect();
    let ok = rows.iter().all(|r| r.ratio_holds && r.h1.holds && r.h2.holds);
    let summary = format!(
        "command cgo-check\nq {}\nomega {:.12e}\nremainder_slope {:.6}\nall_bounds_hold {}\n",
        q.id(),
        cfg.omega,
        if rows.len() > 1 { loglog_slope(&zs, &rs) } else { f64::NAN },
        ok
    );
    out.done(if ok { Status::Ok } else { Status::Failed }, summary)
}

#[derive(Clone, Debug)]
pub struct CarlemanCheck {
    pub c_emp: f64,
    pub lambda0: f64,
    /// Per ω: fraction of test fields with non-negative slack at `2λ₀`.
    pub pass_fraction: Vec<(f64, f64)>,
    pub reports: Vec<(f64, usize, CarlemanReport)>,
}

/// Calibrates one `(C, λ₀)` over every ω of the grid, then tests
/// `test_fields` fresh random fields at `2λ₀`.
pub fn carleman_check(cfg: &ExperimentConfig, grid: &DomainGrid, q: &PotentialField) -> Result<CarlemanCheck> {
    let family = carleman::calibration_family(grid, cfg.seed);
    let lambdas = carleman::default_lambda_grid();
    let mut c_emp = 1.0f64;
    let mut lambda0 = 0.0f64;
    for &omega in &cfg.omega_grid {
        let cal = carleman::calibrate_constants(grid, q, omega, cfg.alpha, &family, &lambdas, 1.0)?;
        c_emp = c_emp.min(cal.c_emp);
        lambda0 = lambda0.max(cal.lambda0);
    }
    // The suffix minimum is per frequency; re-check the joint pair.
    for &omega in &cfg.omega_grid {
        let cal = carleman::calibrate_constants(grid, q, omega, cfg.alpha, &family, &lambdas, c_emp)?;
        lambda0 = lambda0.max(cal.lambda0);
    }
    let tests = carleman::random_test_fields(grid, cfg.test_fields, cfg.seed.wrapping_add(1));
    let mut reports = Vec::new();
    let mut pass_fraction = Vec::new();
    for &omega in &cfg.omega_grid {
        let mut pass = 0usize;
        for (i, u) in tests.iter().enumerate() {
            let r = carleman::evaluate_carleman(grid, q, omega, 2.0 * lambda0, cfg.alpha, u, c_emp)?;
            pass += (r.slack >= 0.0) as usize;
            reports.push((omega, i, r));
        }
        pass_fraction.push((omega, pass as f64 / tests.len().max(1) as f64));
    }
    Ok(CarlemanCheck {
        c_emp,
        lambda0,
        pass_fraction,
        reports,
    })
}

pub fn cmd_carleman_check(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let grid = cfg.grid()?;
    let q = cfg.potential(&grid)?;
    let chk = carleman_check(cfg, &grid, &q)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("carleman.csv", |w| carleman::write_reports_csv(w, &chk.reports))?;
    let mut summary = format!(
        "command carleman-check\nq {}\nc_emp {:.12e}\nlambda0 {:.12e}\n",
        q.id(),
        chk.c_emp,
        chk.lambda0
    );
    for (w, f) in &chk.pass_fraction {
        summary.push_str(&format!("pass_fraction omega={w} {f:.4}\n"));
    }
    let ok = chk.pass_fraction.iter().all(|(_, f)| *f >= 0.99);
    out.done(if ok { Status::Ok } else { Status::Failed }, summary)
}

/// One reconstructed mode with its reference value.
#[derive(Clone, Debug)]
pub struct ModeCheck {
    pub estimate: FourierModeEstimate,
    pub truth: C64,
}

impl ModeCheck {
    pub fn error(&self) -> f64 {
        (self.estimate.value - self.truth).norm()
    }
}

/// Estimates `(q₁-q₂)^(ξ)` for `pair` at every lattice mode with
/// `|ξ| ≤ rho`, with `α(ξ)` the projection of `cfg.alpha` onto `ξ^⊥`.
pub fn fourier_modes(
    cfg: &ExperimentConfig,
    grid: &DomainGrid,
    pair: &PotentialPair,
    cache: &DnCache,
) -> Result<Vec<ModeCheck>> {
    let omega = cfg.omega;
    let calc = BoundaryNormCalculus::new(grid)?;
    let d1 = cache.get_or_build(grid, &pair.q1, omega, cfg.solver())?;
    let d2 = cache.get_or_build(grid, &pair.q2, omega, cfg.solver())?;
    let dq = pair.q1.difference(&pair.q2)?;
    let opts = CgoOptions::default();
    let mut out = Vec::new();
    for xi in mode_lattice(2.0 * grid.radius(), cfg.rho) {
        let (alpha, beta) = frame_for(&xi, &cfg.alpha)?;
        let part = partition_boundary(grid, alpha, cfg.epsilon)?;
        let diff = d1.restrict_partial(&part)?.difference(&d2.restrict_partial(&part)?)?;
        let gap = operator_norm_fractional(&diff, &calc)?;
        let zp = make_zeta_pair(xi, alpha, beta, cfg.lambda.max(cfg.rho), omega)?;
        let (v, zp) = solve_pair_member(grid, &pair.q1, &zp, false, &opts)?;
        let u2 = solve_remainder(grid, &pair.q2, zp.zeta2, &opts)?;
        let estimate = estimate_fourier_mode(grid, &zp, &diff, gap, &v, &u2, &part, cfg.c_fourier)?;
        out.push(ModeCheck {
            estimate,
            truth: fourier_transform_at(grid, &dq, &xi)?,
        });
    }
    Ok(out)
}

/// Fourier-mode estimates of the first pair and the truncated reconstruction.
pub fn cmd_fourier_recon(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let grid = cfg.grid()?;
    let pairs = cfg.pairs(&grid)?;
    let cache = cfg.cache()?;
    let modes = fourier_modes(cfg, &grid, &pairs[0], &cache)?;
    let side = 2.0 * grid.radius();
    let est: Vec<FourierModeEstimate> = modes.iter().map(|m| m.estimate.clone()).collect();
    let recon = reconstruct(&grid, &est, side);
    let truth_modes: Vec<FourierModeEstimate> = modes
        .iter()
        .map(|m| FourierModeEstimate {
            value: m.truth,
            ..m.estimate.clone()
        })
        .collect();
    let reference = reconstruct(&grid, &truth_modes, side);
    let num: f64 = recon.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("modes.csv", |w| {
        writeln!(w, "xi0,xi1,xi2,lambda,re,im,truth_re,truth_im,error,bound_data,bound_lambda")?;
        for m in &modes {
            let e = &m.estimate;
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                e.xi[0],
                e.xi[1],
                e.xi[2],
                e.lambda,
                e.value.re,
                e.value.im,
                m.truth.re,
                m.truth.im,
                m.error(),
                e.bound_data_term,
                e.bound_lambda_term
            )?;
        }
        Ok(())
    })?;
    let rf = GridField::real(&grid, Support::Cells, &recon);
    out.write("recon.txt", |w| Ok(w.write_all(rf.to_text().as_bytes())?))?;
    let within = modes.iter().filter(|m| m.error() <= m.estimate.bound()).count();
    let summary = format!(
        "command fourier-recon\npair {}\nomega {:.12e}\nmodes {}\nwithin_bound {}\nrelative_l2_vs_truncated_truth {:.6e}\n",
        pairs[0].label,
        cfg.omega,
        modes.len(),
        within,
        (num / den.max(1e-300)).sqrt()
    );
    out.done(Status::Ok, summary)
}

/// Runs the sweep over the configured family and frequency grid.
pub fn sweep(cfg: &ExperimentConfig, cache: &DnCache) -> Result<SweepResult> {
    let grid = cfg.grid()?;
    let pairs = cfg.pairs(&grid)?;
    let m = pairs[0].q1.bound();
    let spec = SweepSpec {
        grid: &grid,
        pairs: &pairs,
        omegas: &cfg.omega_grid,
        alpha: cfg.alpha,
        epsilon: cfg.epsilon,
        schedule: cfg.schedule(m),
        solver: cfg.solver(),
        cache,
        jobs: cfg.jobs,
    };
    run_sweep(&spec)
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let cache = cfg.cache()?;
    let result = sweep(cfg, &cache)?;
    let stats = cache.stats();
    log::info!(
        "cache: {} solves, {} disk hits, {} memory hits, {} corrupt",
        stats.solves,
        stats.disk_hits,
        stats.memory_hits,
        stats.corrupt
    );
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("records.csv", |w| write_records_csv(&result.records, w))?;
    out.write("beta.csv", |w| write_beta_csv(&result.betas, w))?;
    out.write("failures.csv", |w| write_failures_csv(&result.failures, w))?;
    let points = crate::sweep::gap_points(&result.records);
    out.write("plot.svg", |w| write_svg(&points, w))?;
    let status = if result.failures.is_empty() {
        Status::Ok
    } else if result.records.is_empty() {
        Status::Failed
    } else {
        Status::Partial
    };
    let mut summary = format!(
        "command sweep\npairs {}\nomegas {:?}\nrecords {}\nfailures {}\n",
        cfg.pairs(&cfg.grid()?)?.len(),
        cfg.omega_grid,
        result.records.len(),
        result.failures.len()
    );
    for b in &result.betas {
        summary.push_str(&format!("beta omega={} {:.6} (r2 {:.4})\n", b.omega, b.beta, b.r2));
    }
    summary.push_str(&format!("beta_non_decreasing_run {}\n", longest_non_decreasing(&result.betas)));
    out.done(status, summary)
}

/// One line of the verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    fn above(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }

    /// Signed distance to the bound, positive when the check passes.
    pub fn margin(&self) -> f64 {
        if self.pass {
            (self.bound - self.value).abs()
        } else {
            -(self.bound - self.value).abs()
        }
    }
}

/// The property suite: ζ algebra, CGO bounds, Green identity, schedule
/// chain, Carleman slack, DN symmetry and the boundary-term estimate.
pub fn verify_suite(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let grid = cfg.grid()?;
    let pairs = cfg.pairs(&grid)?;
    let q = cfg.potential(&grid)?;
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let xi: Point = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let a0: Point = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let (alpha, beta) = frame_for(&xi, &a0)?;
        let lambda = crate::geometry::norm(&xi, 3) + rng.random_range(1.0..50.0);
        let omega = rng.random_range(1.0..40.0);
        let p = make_zeta_pair(xi, alpha, beta, lambda, omega)?;
        for z in [p.zeta1, p.zeta2] {
            let zz = cgo::cdot(&z, &z);
            worst = worst.max((zz - omega * omega).norm() / (omega * omega));
            let mag2 = omega * omega + 2.0 * lambda * lambda;
            worst = worst.max((cgo::cnorm(&z).powi(2) - mag2).abs() / mag2);
        }
    }
    checks.push(Check::below("zeta_algebra_rel_error", worst, 1e-8));

    for r in cgo_check_rows(cfg, &grid, &q)? {
        checks.push(Check::below(format!("cgo_remainder_ratio lambda={}", r.lambda), r.ratio, cfg.c1));
        checks.push(Check::below(format!("cgo_h1_norm lambda={}", r.lambda), r.h1.norm, r.h1.bound));
        checks.push(Check::below(format!("cgo_h2_norm lambda={}", r.lambda), r.h2.norm, r.h2.bound));
    }

    let pair = &pairs[pairs.len() / 2];
    let (alpha, beta) = frame_for(&[0.0; 3], &cfg.alpha)?;
    let zp = make_zeta_pair([0.0; 3], alpha, beta, cfg.lambda, cfg.omega)?;
    let green = green_identity_residual(&grid, &pair.q1, &pair.q2, cfg.omega, &zp, &CgoOptions::default(), cfg.solver())?;
    checks.push(Check::below("green_identity_residual", green.residual, 0.1));

    let m = pair.q1.bound();
    let sc = cfg.schedule(m);
    let mut broken = 0usize;
    for _ in 0..500 {
        let omega = rng.random_range(1.5..100.0);
        let ln_g = sc.ln_delta() - rng.random_range(1.0..1e3);
        broken += schedule_params(omega, ln_g, &sc).is_err() as usize;
    }
    checks.push(Check::below("schedule_chain_failures", broken as f64, 0.0));

    let carl = carleman_check(cfg, &grid, &q)?;
    for (w, f) in &carl.pass_fraction {
        checks.push(Check::above(format!("carleman_pass_fraction omega={w}"), *f, 0.99));
    }

    let cache = cfg.cache()?;
    let dn = cache.get_or_build(&grid, &q, cfg.omega, cfg.solver())?;
    checks.push(Check::below("dn_symmetry_defect", dn.symmetry_defect()?, 1e-8));

    let part = partition_boundary(&grid, alpha, cfg.epsilon)?;
    let d1 = cache.get_or_build(&grid, &pair.q1, cfg.omega, cfg.solver())?;
    let d2 = cache.get_or_build(&grid, &pair.q2, cfg.omega, cfg.solver())?;
    let diff = d1.restrict_partial(&part)?.difference(&d2.restrict_partial(&part)?)?;
    let gap = operator_norm_fractional(&diff, &BoundaryNormCalculus::new(&grid)?)?;
    let opts = CgoOptions::default();
    let (v, zp) = solve_pair_member(&grid, &pair.q1, &zp, false, &opts)?;
    let u2 = solve_remainder(&grid, &pair.q2, zp.zeta2, &opts)?;
    let (f, _, _) = u2.boundary_traces(&grid)?;
    let bt = boundary_term_check(&grid, &zp, &v, &part, &diff, gap, &f, cfg.c_fourier)?;
    checks.push(Check::below("boundary_minus_term", bt.minus_term, bt.est99_bound));
    Ok(checks)
}

pub fn write_checks_csv<W: Write>(checks: &[Check], mut out: W) -> Result<()> {
    writeln!(out, "check,value,bound,margin,pass")?;
    for c in checks {
        writeln!(out, "{},{:.12e},{:.12e},{:.12e},{}", c.name, c.value, c.bound, c.margin(), c.pass as u8)?;
    }
    Ok(())
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let checks = verify_suite(cfg)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("verify.csv", |w| write_checks_csv(&checks, w))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let summary = format!(
        "command verify\nchecks {}\nfailed {}\n{}",
        checks.len(),
        failed.len(),
        failed.iter().map(|f| format!("FAIL {f}\n")).collect::<String>()
    );
    out.done(if failed.is_empty() { Status::Ok } else { Status::Failed }, summary)
}

/// Rebuilds `beta.csv` and `plot.svg` from an existing `records.csv`.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let path = cfg.output_dir.join("records.csv");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let points = read_gap_points(&text)?;
    let mut omegas: Vec<f64> = points.iter().map(|p| p.omega).collect();
    omegas.sort_by(|a, b| a.total_cmp(b));
    omegas.dedup();
    let betas = fit_beta(&points, &omegas);
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("beta.csv", |w| write_beta_csv(&betas, w))?;
    out.write("plot.svg", |w| write_svg(&points, w))?;
    let mut summary = format!("command report\nrecords {}\n", points.len());
    for b in &betas {
        summary.push_str(&format!("beta omega={} {:.6} (r2 {:.4})\n", b.omega, b.beta, b.r2));
    }
    summary.push_str(&format!("beta_non_decreasing_run {}\n", longest_non_decreasing(&betas)));
    out.done(Status::Ok, summary)
}

/// Dispatches a subcommand by name.
pub fn run_command(name: &str, cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    match name {
        "forward" => cmd_forward(cfg),
        "dnmap" => cmd_dnmap(cfg),
        "cgo-check" => cmd_cgo_check(cfg),
        "carleman-check" => cmd_carleman_check(cfg),
        "fourier-recon" => cmd_fourier_recon(cfg),
        "sweep" => cmd_sweep(cfg),
        "verify" => cmd_verify(cfg),
        "report" => cmd_report(cfg),
        other => invalid(format!("unknown command '{other}'")),
    }
}
