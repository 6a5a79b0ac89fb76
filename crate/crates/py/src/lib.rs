//! Python bindings for `thinflow`.
//!
//! Fields cross the boundary as lists of per-component flat arrays in the
//! row-major order the Rust side uses, with z varying fastest. Reshaping a
//! component to `grid.comp_shape(c)` gives an `(x, y, z)` array.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use thinflow::harness::config::SimConfig;
use thinflow::harness::{energy_ledger, run_check_ops, run_convergence};
use thinflow::noise::make_paths;
use thinflow::nse::{project_div_free, run2d, run3d, SolverParams, Stepper, Trajectory};
use thinflow::{avgops, Error, Geometry};

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io(_) => PyOSError::new_err(msg),
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(msg),
        Error::SolverDiverged { .. } | Error::NonFinite { .. } => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for thinflow::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

#[pyclass(name = "Grid3D", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid3D(thinflow::Grid3D);

#[pymethods]
impl PyGrid3D {
    #[new]
    #[pyo3(signature = (nx, ny, nz, eps, lx = 1.0, ly = 1.0))]
    fn new(nx: usize, ny: usize, nz: usize, eps: f64, lx: f64, ly: f64) -> PyResult<Self> {
        thinflow::make_grid3d(nx, ny, nz, lx, ly, eps).py().map(Self)
    }
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.0.nx, self.0.ny, self.0.nz)
    }
    #[getter]
    fn lengths(&self) -> (f64, f64, f64) {
        (self.0.lx, self.0.ly, self.0.eps)
    }
    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps
    }
    #[getter]
    fn spacing(&self) -> (f64, f64, f64) {
        (self.0.dx, self.0.dy, self.0.dz)
    }
    fn base(&self) -> PyGrid2D {
        PyGrid2D(self.0.base())
    }
    fn with_eps(&self, eps: f64) -> PyResult<Self> {
        self.0.with_eps(eps).py().map(Self)
    }
    /// Number of entries per axis for velocity component `c`, as (nx, ny, nz).
    fn comp_shape(&self, c: usize) -> PyResult<[usize; 3]> {
        check_comp(c, 3)?;
        Ok(self.0.mesh().comp_shape(c))
    }
    fn __repr__(&self) -> String {
        let g = self.0;
        format!("Grid3D(nx={}, ny={}, nz={}, eps={}, lx={}, ly={})", g.nx, g.ny, g.nz, g.eps, g.lx, g.ly)
    }
}

#[pyclass(name = "Grid2D", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid2D(thinflow::Grid2D);

#[pymethods]
impl PyGrid2D {
    #[new]
    #[pyo3(signature = (nx, ny, lx = 1.0, ly = 1.0))]
    fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> PyResult<Self> {
        thinflow::make_grid2d(nx, ny, lx, ly).py().map(Self)
    }
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.nx, self.0.ny)
    }
    fn comp_shape(&self, c: usize) -> PyResult<[usize; 2]> {
        check_comp(c, 2)?;
        let s = self.0.mesh().comp_shape(c);
        Ok([s[0], s[1]])
    }
    fn __repr__(&self) -> String {
        format!("Grid2D(nx={}, ny={}, lx={}, ly={})", self.0.nx, self.0.ny, self.0.lx, self.0.ly)
    }
}

fn check_comp(c: usize, n: usize) -> PyResult<()> {
    if c < n {
        Ok(())
    } else {
        Err(PyIndexError::new_err(format!("component {c} out of range for {n} components")))
    }
}

macro_rules! field_class {
    ($py:ident, $name:literal, $grid:ident, $pygrid:ident, $ncomp:literal) => {
        #[pyclass(name = $name, skip_from_py_object)]
        #[derive(Clone)]
        struct $py(thinflow::VField<thinflow::$grid>);

        #[pymethods]
        impl $py {
            #[staticmethod]
            fn zeros(grid: &$pygrid) -> Self {
                Self(thinflow::VField::zeros(grid.0))
            }
            #[staticmethod]
            fn from_components(grid: &$pygrid, comps: Vec<Vec<f64>>) -> PyResult<Self> {
                thinflow::VField::from_components(grid.0, comps).py().map(Self)
            }
            #[staticmethod]
            fn random(grid: &$pygrid, seed: u64) -> Self {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                Self(thinflow::VField::random(grid.0, &mut rng))
            }
            #[getter]
            fn grid(&self) -> $pygrid {
                $pygrid(self.0.grid)
            }
            fn component(&self, c: usize) -> PyResult<Vec<f64>> {
                check_comp(c, $ncomp)?;
                Ok(self.0.comp(c).to_vec())
            }
            fn components(&self) -> Vec<Vec<f64>> {
                self.0.comps.clone()
            }
            fn norm(&self) -> f64 {
                self.0.norm()
            }
            fn norm_sq(&self) -> f64 {
                self.0.norm_sq()
            }
            fn lp_norm(&self, p: f64) -> f64 {
                self.0.lp_norm(p)
            }
            fn grad_norm_sq(&self) -> f64 {
                thinflow::grad_norm_sq(&self.0)
            }
            fn inner(&self, other: &Self) -> PyResult<f64> {
                self.0.inner(&other.0).py()
            }
            fn max_abs(&self) -> f64 {
                self.0.max_abs()
            }
            /// Largest absolute cell divergence.
            fn divergence_max(&self) -> f64 {
                thinflow::divergence(&self.0).max_abs()
            }
            /// Leray projection onto discretely divergence-free fields.
            fn project(&self) -> PyResult<Self> {
                let p = SolverParams::new(1.0, 1.0, 1.0);
                project_div_free(&self.0, &p).py().map(|(u, _)| Self(u))
            }
            fn __add__(&self, other: &Self) -> PyResult<Self> {
                self.0.add(&other.0).py().map(Self)
            }
            fn __sub__(&self, other: &Self) -> PyResult<Self> {
                self.0.sub(&other.0).py().map(Self)
            }
            fn __mul__(&self, a: f64) -> Self {
                Self(self.0.scaled(a))
            }
            fn __rmul__(&self, a: f64) -> Self {
                Self(self.0.scaled(a))
            }
            fn __eq__(&self, other: &Self) -> bool {
                self.0 == other.0
            }
        }
    };
}

field_class!(PyField3D, "Field3D", Grid3D, PyGrid3D, 3);
field_class!(PyField2D, "Field2D", Grid2D, PyGrid2D, 2);

/// Vertical average, as a field on the base domain.
#[pyfunction]
fn circ_m(u: &PyField3D) -> PyField2D {
    PyField2D(avgops::circ_m(&u.0))
}

/// Lift of a base-domain field to a z-independent field with vanishing
/// vertical component.
#[pyfunction]
fn retract(v: &PyField2D, grid: &PyGrid3D) -> PyResult<PyField3D> {
    avgops::retract(&v.0, grid.0).py().map(PyField3D)
}

#[pyfunction]
fn tilde_m(u: &PyField3D) -> PyField3D {
    PyField3D(avgops::tilde_m(&u.0))
}

#[pyfunction]
fn tilde_n(u: &PyField3D) -> PyField3D {
    PyField3D(avgops::tilde_n(&u.0))
}

/// Skew trilinear form b(u, v, w).
#[pyfunction]
fn trilinear(u: &PyField3D, v: &PyField3D, w: &PyField3D) -> PyResult<f64> {
    thinflow::nse::trilinear_b3(&u.0, &v.0, &w.0).py()
}

/// Parsed experiment configuration. Accepts TOML or JSON text.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(SimConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        SimConfig::load(&path).py().map(Self)
    }
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        SimConfig::from_toml_str(text).py().map(Self)
    }
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SimConfig::from_json_str(text).py().map(Self)
    }
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }
    #[getter]
    fn eps_ladder(&self) -> Vec<f64> {
        self.0.eps_ladder.clone()
    }
    #[getter]
    fn n_samples(&self) -> usize {
        self.0.n_samples
    }
    #[setter]
    fn set_n_samples(&mut self, n: usize) -> PyResult<()> {
        let mut c = self.0.clone();
        c.n_samples = n;
        c.validate().py()?;
        self.0 = c;
        Ok(())
    }
    #[setter]
    fn set_t_final(&mut self, t: f64) -> PyResult<()> {
        let mut c = self.0.clone();
        c.t_final = t;
        c.validate().py()?;
        self.0 = c;
        Ok(())
    }
    #[getter]
    fn t_final(&self) -> f64 {
        self.0.t_final
    }
    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt
    }
    fn sample_seeds(&self) -> Vec<u64> {
        self.0.sample_seeds()
    }
    fn grid3d(&self, eps: f64) -> PyResult<PyGrid3D> {
        self.0.grid3d(eps).py().map(PyGrid3D)
    }
    fn initial_2d(&self) -> PyResult<PyField2D> {
        self.0.initial_2d().py().map(PyField2D)
    }
    fn initial_3d(&self, eps: f64) -> PyResult<PyField3D> {
        let g = self.0.grid3d(eps).py()?;
        self.0.initial_3d(g).py().map(PyField3D)
    }
}

/// Time series from a single pathwise run.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    energy: Vec<f64>,
    #[pyo3(get)]
    enstrophy: Vec<f64>,
    #[pyo3(get)]
    energy_residual: Vec<f64>,
    #[pyo3(get)]
    energy_violations: usize,
    /// `(lhs, rhs)` of the time-integrated energy inequality.
    #[pyo3(get)]
    energy_ledger: (f64, f64),
    final_3d: Option<PyField3D>,
    final_2d: Option<PyField2D>,
}

#[pymethods]
impl PyTrajectory {
    /// Final state, as a Field3D or Field2D.
    #[getter]
    fn final_state(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        match (&self.final_3d, &self.final_2d) {
            (Some(u), _) => Ok(Py::new(py, u.clone())?.into_any()),
            (_, Some(u)) => Ok(Py::new(py, u.clone())?.into_any()),
            _ => unreachable!("trajectory without a final state"),
        }
    }
    fn __len__(&self) -> usize {
        self.times.len()
    }
}

fn wrap<G: Geometry>(t: &Trajectory<G>, forcing_dual_sq: f64, params: &SolverParams) -> PyTrajectory {
    let l = energy_ledger(t, forcing_dual_sq, params.nu, params.dt);
    PyTrajectory {
        times: t.times.clone(),
        energy: t.energy.clone(),
        enstrophy: t.enstrophy.clone(),
        energy_residual: t.energy_residual.clone(),
        energy_violations: t.energy_violations,
        energy_ledger: (l.lhs, l.rhs),
        final_3d: None,
        final_2d: None,
    }
}

/// Integrate one 3D sample of the configured experiment at thickness `eps`.
#[pyfunction]
fn simulate_3d(py: Python<'_>, config: &PyConfig, eps: f64, seed: u64) -> PyResult<PyTrajectory> {
    let c = &config.0;
    py.detach(|| {
        let g = c.grid3d(eps).py()?;
        let family = c.family(&[g]).py()?;
        let params = c.solver_params();
        let paths = make_paths(family.n_modes(), c.dt, c.t_final, seed).py()?;
        let t = run3d(&c.initial_3d(g).py()?, &params, &family, &paths).py()?;
        let dual = Stepper::new(&params, family.f3d[0].clone()).py()?.forcing_dual_sq();
        let mut out = wrap(&t, dual, &params);
        out.final_3d = Some(PyField3D(t.final_state));
        Ok(out)
    })
}

/// Integrate one sample of the limiting 2D system, driven by the same noise
/// path as `simulate_3d` with the same seed.
#[pyfunction]
fn simulate_2d(py: Python<'_>, config: &PyConfig, seed: u64) -> PyResult<PyTrajectory> {
    let c = &config.0;
    py.detach(|| {
        let family = c.family(&[]).py()?;
        let params = c.solver_params();
        let paths = make_paths(family.n_modes(), c.dt, c.t_final, seed).py()?;
        let t = run2d(&c.initial_2d().py()?, &params, &family, &paths).py()?;
        let dual = Stepper::new(&params, family.f2d.clone()).py()?.forcing_dual_sq();
        let mut out = wrap(&t, dual, &params);
        out.final_2d = Some(PyField2D(t.final_state));
        Ok(out)
    })
}

/// Run the full ensemble study and return the report as a JSON string.
#[pyfunction]
fn converge(py: Python<'_>, config: &PyConfig) -> PyResult<String> {
    let c = &config.0;
    py.detach(|| run_convergence(c).and_then(|r| r.to_json()).py())
}

/// Operator identity and inequality checks, returned as a JSON string.
#[pyfunction]
#[pyo3(signature = (grid, eps_list, n_fields = 100, seed = 0))]
fn check_ops(py: Python<'_>, grid: &PyGrid3D, eps_list: Vec<f64>, n_fields: usize, seed: u64) -> PyResult<String> {
    let g = grid.0;
    py.detach(|| {
        let r = run_check_ops(g, &eps_list, n_fields, seed).py()?;
        serde_json::to_string(&r).map_err(|e| PyValueError::new_err(e.to_string()))
    })
}

#[pymodule]
fn thinflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid3D>()?;
    m.add_class::<PyGrid2D>()?;
    m.add_class::<PyField3D>()?;
    m.add_class::<PyField2D>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(circ_m, m)?)?;
    m.add_function(wrap_pyfunction!(retract, m)?)?;
    m.add_function(wrap_pyfunction!(tilde_m, m)?)?;
    m.add_function(wrap_pyfunction!(tilde_n, m)?)?;
    m.add_function(wrap_pyfunction!(trilinear, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_3d, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_2d, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(check_ops, m)?)?;
    Ok(())
}
