//! Python bindings: fBM sampling, the two Lamperti-transformed models,
//! single implicit steps, path simulation and convergence experiments.

use fracsde::config::parse_config as parse_run_config;
use fracsde::convergence::{run_strong_error, ExperimentPlan};
use fracsde::fbm::sampler;
use fracsde::{
    audit_assumptions, fbm_covariance as covariance, implicit_step, integrate, power_path, Error, FbmMethod, Hurst,
    ModelSpec, RootOptions, SchemeConfig, SeedProvenance, TimeGrid,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Parameter(_) | Error::Usage(_) | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_hurst(h: f64) -> PyResult<Hurst> {
    Hurst::new(h).map_err(to_py)
}

fn to_method(name: &str) -> PyResult<FbmMethod> {
    name.parse().map_err(to_py)
}

/// R_H(t, s) = (t^2H + s^2H - |t - s|^2H) / 2.
#[pyfunction]
fn fbm_covariance(t: f64, s: f64, h: f64) -> PyResult<f64> {
    covariance(t, s, to_hurst(h)?).map_err(to_py)
}

/// Node values of one fBM path; path `index` of master seed `seed`.
#[pyfunction]
#[pyo3(signature = (hurst, steps, horizon = 1.0, method = "circulant", seed = 0, index = 0))]
fn sample_fbm(
    py: Python<'_>,
    hurst: f64,
    steps: usize,
    horizon: f64,
    method: &str,
    seed: u64,
    index: u64,
) -> PyResult<Vec<f64>> {
    let (h, m) = (to_hurst(hurst)?, to_method(method)?);
    let grid = TimeGrid::new(horizon, steps).map_err(to_py)?;
    py.detach(|| {
        let s = sampler(m, h, grid)?;
        Ok(s.sample(SeedProvenance::new(seed, index)).values().to_vec())
    })
    .map_err(to_py)
}

/// A Lamperti-transformed interest-rate model.
#[pyclass(frozen, module = "fracsde_py")]
struct Model {
    inner: ModelSpec,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn mean_reverting(a1: f64, a2: f64, gamma: f64, sigma: f64, y0: f64, hurst: f64) -> PyResult<Self> {
        let inner = ModelSpec::mean_reverting(a1, a2, gamma, sigma, y0, to_hurst(hurst)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    fn ait_sahalia(
        a_m1: f64,
        a0: f64,
        a1: f64,
        a2: f64,
        r: f64,
        rho: f64,
        sigma: f64,
        y0: f64,
        hurst: f64,
    ) -> PyResult<Self> {
        let inner = ModelSpec::ait_sahalia(a_m1, a0, a1, a2, r, rho, sigma, y0, to_hurst(hurst)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family()
    }

    #[getter]
    fn x0(&self) -> f64 {
        self.inner.x0()
    }

    /// Largest admissible step size.
    #[getter]
    fn max_step(&self) -> f64 {
        self.inner.certificate().max_step()
    }

    /// `(rate, log_power)` of the expected strong order.
    #[getter]
    fn target_rate(&self) -> (f64, f64) {
        self.inner.target_rate()
    }

    fn lamperti_forward(&self, y: f64) -> PyResult<f64> {
        self.inner.lamperti_forward(y).map_err(to_py)
    }

    fn lamperti_inverse(&self, x: f64) -> PyResult<f64> {
        self.inner.lamperti_inverse(x).map_err(to_py)
    }

    /// Transformed drift B(x).
    fn drift(&self, x: f64) -> f64 {
        use fracsde::Drift;
        self.inner.drift().value(x)
    }

    /// Certificate constants as a dict.
    fn certificate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.inner.certificate();
        let d = PyDict::new(py);
        d.set_item("k", c.k)?;
        d.set_item("alpha", c.alpha)?;
        d.set_item("regime", format!("{:?}", c.regime).to_lowercase())?;
        d.set_item("x1", c.x1)?;
        d.set_item("h1_min", c.h1_min)?;
        d.set_item("theta", c.theta)?;
        d.set_item("h4", c.h4)?;
        d.set_item("q", c.q)?;
        d.set_item("h3", c.h3)?;
        d.set_item("h0", c.h0)?;
        Ok(d)
    }

    /// Numerical audit; returns `(passed, table)`.
    #[pyo3(signature = (pairs = 2000))]
    fn audit(&self, pairs: usize) -> (bool, String) {
        let grid = fracsde::assumptions::default_audit_grid();
        let r = audit_assumptions(self.inner.drift(), self.inner.certificate(), &grid, pairs, Some(self.inner.hurst()));
        (r.passed(), r.to_string())
    }

    /// Solve `B(x) h - x + c = 0`; returns `(root, residual, iterations)`.
    fn step(&self, h: f64, c: f64) -> PyResult<(f64, f64, u32)> {
        self.inner.certificate().check_step(h).map_err(to_py)?;
        let r = implicit_step(self.inner.drift(), h, c, &RootOptions::default()).map_err(to_py)?;
        Ok((r.root, r.residual, r.iterations))
    }

    /// One path of the scheme: dict with `time`, `x`, `y`, `residual`, `iterations`.
    #[pyo3(signature = (steps, horizon = 1.0, seed = 0, index = 0, method = "circulant"))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        steps: usize,
        horizon: f64,
        seed: u64,
        index: u64,
        method: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = to_method(method)?;
        let grid = TimeGrid::new(horizon, steps).map_err(to_py)?;
        let model = &self.inner;
        let (sol, y) = py
            .detach(|| {
                let cfg = SchemeConfig::for_model(model, grid);
                cfg.validate(Some(model.certificate()))?;
                let noise = sampler(m, model.hurst(), grid)?.sample(SeedProvenance::new(seed, index)).increments();
                let sol = integrate(model.drift(), &cfg, &noise)?;
                let y = power_path(&sol, model.inverse_exponent())?;
                Ok((sol, y))
            })
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("time", grid.nodes())?;
        d.set_item("x", sol.values().to_vec())?;
        d.set_item("y", y)?;
        d.set_item("residual", sol.residuals().to_vec())?;
        d.set_item("iterations", sol.iterations().to_vec())?;
        Ok(d)
    }

    /// Strong-convergence experiment; returns the report as JSON text.
    #[pyo3(signature = (k_min = 4, k_max = 9, k_ref = 13, paths = 200, seed = 0, p = 2.0, horizon = 1.0))]
    #[allow(clippy::too_many_arguments)]
    fn converge(
        &self,
        py: Python<'_>,
        k_min: u32,
        k_max: u32,
        k_ref: u32,
        paths: usize,
        seed: u64,
        p: f64,
        horizon: f64,
    ) -> PyResult<String> {
        let mut plan = ExperimentPlan::new(self.inner.clone(), k_min, k_max, k_ref, paths, seed);
        plan.p = p;
        plan.horizon = horizon;
        let report = py.detach(|| run_strong_error(&plan)).map_err(to_py)?;
        serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({:?}, sigma={}, y0={}, hurst={})",
            self.inner.params(),
            self.inner.sigma(),
            self.inner.y0(),
            self.inner.hurst().value()
        )
    }
}

/// Validate a JSON run configuration; returns its digest or raises
/// `ValueError` listing every problem.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<String> {
    parse_run_config(text).map(|c| c.digest()).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn fracsde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fbm_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(sample_fbm, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
