//! Python bindings: grids, potentials, the forward solver, DN maps, CGO
//! solutions, schedules and the experiment commands.

use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stabilab_core::cgo::{self, CgoOptions};
use stabilab_core::dn::{self, BoundaryNormCalculus, DnOperator};
use stabilab_core::experiment::{self, ExperimentConfig};
use stabilab_core::forward;
use stabilab_core::geometry::{self, DomainGrid, Shape};
use stabilab_core::potential::{self, PotentialField, Profile};
use stabilab_core::schedule::{self, ScheduleConfig};
use stabilab_core::Error;

create_exception!(stabilab, StabilabError, PyException, "Raised for every library error; `kind` is in args[0].");

fn err(e: Error) -> PyErr {
    StabilabError::new_err((e.kind(), e.to_string()))
}

type Point = [f64; 3];

#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyGrid(pub Arc<DomainGrid>);

#[pymethods]
impl PyGrid {
    /// Box `center ± half_widths` with spacing `h`.
    #[new]
    #[pyo3(signature = (h, dim = 3, center = [0.0; 3], half_widths = [0.5; 3]))]
    fn new(h: f64, dim: usize, center: Point, half_widths: Point) -> PyResult<Self> {
        DomainGrid::build(dim, Shape::Box { center, half_widths }, h)
            .map(|g| Self(Arc::new(g)))
            .map_err(err)
    }

    /// Ball of the given radius.
    #[staticmethod]
    #[pyo3(signature = (h, radius, center = [0.0; 3], dim = 3))]
    fn ball(h: f64, radius: f64, center: Point, dim: usize) -> PyResult<Self> {
        DomainGrid::build(dim, Shape::Ball { center, radius }, h)
            .map(|g| Self(Arc::new(g)))
            .map_err(err)
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }
    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }
    #[getter]
    fn n_cells(&self) -> usize {
        self.0.n_cells()
    }
    #[getter]
    fn n_faces(&self) -> usize {
        self.0.n_faces()
    }
    #[getter]
    fn radius(&self) -> f64 {
        self.0.radius()
    }
    fn cell_centers(&self) -> Vec<Point> {
        self.0.cell_centers()
    }
    fn face_centers(&self) -> Vec<Point> {
        self.0.faces().iter().map(|f| f.center).collect()
    }
    fn face_normals(&self) -> Vec<Point> {
        self.0.faces().iter().map(|f| f.normal).collect()
    }
    fn face_areas(&self) -> Vec<f64> {
        self.0.faces().iter().map(|f| f.area).collect()
    }
    /// Indices of the measured faces `α·ν < ε`.
    fn measured_faces(&self, alpha: Point, epsilon: f64) -> PyResult<Vec<usize>> {
        Ok(geometry::partition_boundary(&self.0, alpha, epsilon).map_err(err)?.minus_eps)
    }
    fn __repr__(&self) -> String {
        format!("Grid(h={}, cells={}, faces={})", self.0.h(), self.0.n_cells(), self.0.n_faces())
    }
}

#[pyclass(name = "Potential", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPotential(pub Arc<PotentialField>);

#[pymethods]
impl PyPotential {
    #[new]
    #[pyo3(signature = (grid, values, s = 2, bound = f64::MAX))]
    fn new(grid: &PyGrid, values: Vec<f64>, s: u32, bound: f64) -> PyResult<Self> {
        PotentialField::new(&grid.0, values, s, bound)
            .map(|q| Self(Arc::new(q)))
            .map_err(err)
    }

    /// Sum of Gaussian bumps, each `(center, width, amplitude)`.
    #[staticmethod]
    #[pyo3(signature = (grid, bumps, s = 2, bound = f64::MAX))]
    fn gaussians(grid: &PyGrid, bumps: Vec<(Point, f64, f64)>, s: u32, bound: f64) -> PyResult<Self> {
        let profiles: Vec<Profile> = bumps
            .into_iter()
            .map(|(center, width, amplitude)| Profile::Gaussian {
                center,
                width,
                amplitude,
            })
            .collect();
        potential::sample_profiles(&grid.0, &profiles, s, bound)
            .map(|q| Self(Arc::new(q)))
            .map_err(err)
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }
    #[getter]
    fn id(&self) -> String {
        self.0.id()
    }
    fn sobolev_norm(&self, grid: &PyGrid) -> PyResult<f64> {
        self.0.sobolev_norm(&grid.0).map_err(err)
    }
    fn is_admissible(&self, grid: &PyGrid) -> PyResult<bool> {
        self.0.is_admissible(&grid.0).map_err(err)
    }
}

/// Interior solution for Dirichlet data `f` (one value per face).
#[pyfunction]
fn solve_dirichlet(py: Python<'_>, grid: &PyGrid, q: &PyPotential, omega: f64, f: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    let (g, q) = (grid.0.clone(), q.0.clone());
    py.detach(move || forward::solve_dirichlet(&g, &q, omega, &f)).map_err(err)
}

#[pyfunction]
fn neumann_trace(grid: &PyGrid, u: Vec<Complex64>, f: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    forward::neumann_trace(&grid.0, &u, &f).map_err(err)
}

/// Assumptions (A)/(B) as a dict.
#[pyfunction]
#[pyo3(signature = (grid, q, omega, k = 6, c_small = 1e-3))]
fn spectrum_check<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    q: &PyPotential,
    omega: f64,
    k: usize,
    c_small: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (g, qq) = (grid.0.clone(), q.0.clone());
    let c = py
        .detach(move || forward::dirichlet_spectrum_check(&g, &qq, omega, k, c_small))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("omega", c.omega)?;
    d.set_item("eigenvalues", c.eigenvalues)?;
    d.set_item("nearest_eigenvalue", c.nearest_eigenvalue)?;
    d.set_item("dist_to_spectrum", c.dist_to_spectrum)?;
    d.set_item("passes_a", c.passes_a)?;
    d.set_item("passes_b", c.passes_b)?;
    Ok(d)
}

#[pyclass(name = "DnMap", frozen)]
pub struct PyDnMap(Arc<DnOperator>);

#[pymethods]
impl PyDnMap {
    #[new]
    fn new(py: Python<'_>, grid: &PyGrid, q: &PyPotential, omega: f64) -> PyResult<Self> {
        let (g, q) = (grid.0.clone(), q.0.clone());
        py.detach(move || dn::build_dn(&g, &q, omega))
            .map(|d| Self(Arc::new(d)))
            .map_err(err)
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega()
    }
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.row_faces().len(), self.0.n_cols())
    }
    fn row_faces(&self) -> Vec<usize> {
        self.0.row_faces().to_vec()
    }
    /// Row-major matrix.
    fn matrix(&self) -> Vec<Vec<f64>> {
        let m = self.0.matrix();
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
    }
    fn apply(&self, f: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.apply(&f).map_err(err)
    }
    /// Rows restricted to the measured faces `α·ν < ε`.
    fn restrict(&self, grid: &PyGrid, alpha: Point, epsilon: f64) -> PyResult<Self> {
        let part = geometry::partition_boundary(&grid.0, alpha, epsilon).map_err(err)?;
        self.0.restrict_partial(&part).map(|d| Self(Arc::new(d))).map_err(err)
    }
    fn __sub__(&self, other: &PyDnMap) -> PyResult<Self> {
        self.0.difference(&other.0).map(|d| Self(Arc::new(d))).map_err(err)
    }
    /// Operator norm from `H^{1/2}` to `H^{-1/2}` of the boundary.
    fn fractional_norm(&self, py: Python<'_>, grid: &PyGrid) -> PyResult<f64> {
        let (g, d) = (grid.0.clone(), self.0.clone());
        py.detach(move || {
            let calc = BoundaryNormCalculus::new(&g)?;
            dn::operator_norm_fractional(&d, &calc)
        })
        .map_err(err)
    }
    fn symmetry_defect(&self) -> PyResult<f64> {
        self.0.symmetry_defect().map_err(err)
    }
}

#[pyclass(name = "ZetaPair", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyZetaPair(cgo::ZetaPair);

#[pymethods]
impl PyZetaPair {
    #[new]
    fn new(xi: Point, alpha: Point, beta: Point, lambda_: f64, omega: f64) -> PyResult<Self> {
        cgo::make_zeta_pair(xi, alpha, beta, lambda_, omega).map(Self).map_err(err)
    }

    /// Pair for `ξ` with `α` the projection of `alpha0` onto `ξ^⊥`.
    #[staticmethod]
    fn for_mode(xi: Point, alpha0: Point, lambda_: f64, omega: f64) -> PyResult<Self> {
        let (a, b) = stabilab_core::fourier::frame_for(&xi, &alpha0).map_err(err)?;
        Self::new(xi, a, b, lambda_, omega)
    }

    #[getter]
    fn zeta1(&self) -> [Complex64; 3] {
        self.0.zeta1
    }
    #[getter]
    fn zeta2(&self) -> [Complex64; 3] {
        self.0.zeta2
    }
    #[getter]
    fn magnitude(&self) -> f64 {
        self.0.magnitude()
    }
}

#[pyclass(name = "CgoSolution", frozen)]
pub struct PyCgo(cgo::CgoSolution);

#[pymethods]
impl PyCgo {
    #[new]
    fn new(py: Python<'_>, grid: &PyGrid, q: &PyPotential, zeta: [Complex64; 3]) -> PyResult<Self> {
        let (g, q) = (grid.0.clone(), q.0.clone());
        py.detach(move || cgo::solve_remainder(&g, &q, zeta, &CgoOptions::default()))
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn magnitude(&self) -> f64 {
        self.0.magnitude()
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }
    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }
    #[getter]
    fn id(&self) -> String {
        self.0.id.clone()
    }
    fn remainder_norm(&self, s: f64) -> f64 {
        self.0.remainder_sobolev_norm(s)
    }
    fn u(&self, grid: &PyGrid) -> PyResult<Vec<Complex64>> {
        self.0.u_on_grid(&grid.0).map_err(err)
    }
}

/// Schedule for one frequency and gap, as a dict.
#[pyfunction]
#[pyo3(signature = (omega, gap, m_bound, n = 3, s = 2.0, theta = 0.5, radius = 1.0, lambda0 = 1.0, c2m = 0.0, margin = 0.1))]
#[allow(clippy::too_many_arguments)]
fn schedule_params<'py>(
    py: Python<'py>,
    omega: f64,
    gap: f64,
    m_bound: f64,
    n: usize,
    s: f64,
    theta: f64,
    radius: f64,
    lambda0: f64,
    c2m: f64,
    margin: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ScheduleConfig {
        n,
        s,
        theta,
        radius,
        m_bound,
        lambda0,
        c2m,
        margin,
    };
    let p = schedule::schedule_params(omega, schedule::ln_gap(gap), &cfg).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("K", p.k)?;
    d.set_item("L", p.l)?;
    d.set_item("lambda_tilde", p.lambda_tilde)?;
    d.set_item("ln_delta", p.ln_delta)?;
    d.set_item("rho", p.rho)?;
    d.set_item("lambda", p.lambda)?;
    d.set_item("eta", p.eta)?;
    d.set_item("p", p.p)?;
    d.set_item("regime", p.regime.as_str())?;
    d.set_item("capped", p.capped)?;
    Ok(d)
}

#[pyfunction]
fn hminus1_norm(grid: &PyGrid, values: Vec<f64>) -> PyResult<f64> {
    schedule::hminus1_norm(&grid.0, &values).map_err(err)
}

/// Runs a CLI command on a config file; returns `(exit_code, summary)`.
#[pyfunction]
fn run_command(py: Python<'_>, name: String, config: PathBuf) -> PyResult<(i32, String)> {
    py.detach(move || {
        let r = ExperimentConfig::load(&config).and_then(|c| experiment::run_command(&name, &c));
        let summary = match &r {
            Ok(o) => o.summary.clone(),
            Err(e) => format!("error kind={} message={e}\n", e.kind()),
        };
        Ok((experiment::exit_code(&r), summary))
    })
}

#[pymodule]
#[pyo3(name = "stabilab")]
pub fn stabilab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StabilabError", m.py().get_type::<StabilabError>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PyDnMap>()?;
    m.add_class::<PyZetaPair>()?;
    m.add_class::<PyCgo>()?;
    m.add_function(wrap_pyfunction!(solve_dirichlet, m)?)?;
    m.add_function(wrap_pyfunction!(neumann_trace, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum_check, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_params, m)?)?;
    m.add_function(wrap_pyfunction!(hminus1_norm, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    Ok(())
}
