//! Python bindings for the cvwaves solver.

use cvwaves::bounds::amplitude_bound as bound_report;
use cvwaves::config::RunConfig as CoreRunConfig;
use cvwaves::continuation::{
    bifurcation_data as core_bifurcation, detect_singularity as core_singularity, trace_branch,
    Branch as CoreBranch,
};
use cvwaves::kernel::{beta_certified, lemma1_verify as core_lemma, KernelConfig};
use cvwaves::reconstruction::{
    build_flow, build_strip_map, current_profile as core_current, default_heights, default_levels,
    physical_checks as core_physical,
};
use cvwaves::{
    condition_suite as core_conditions, identity_add_check, residual_system, BranchSign, Error,
    GridSpec, PhysicalParams as CoreParams, SolutionPoint as CorePoint,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParams(_)
        | Error::InvalidGrid(_)
        | Error::LengthMismatch { .. }
        | Error::NonFinite(_)
        | Error::GridMismatch { .. }
        | Error::NonZeroMean(_)
        | Error::Constraint(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Gravity, wavenumber, conformal depth and vorticity.
#[pyclass(name = "PhysicalParams", from_py_object)]
#[derive(Clone, Copy)]
struct PhysicalParams {
    inner: CoreParams,
}

#[pymethods]
impl PhysicalParams {
    #[new]
    #[pyo3(signature = (g = 9.81, k = 1.0, h = 1.0, upsilon = 0.0))]
    fn new(g: f64, k: f64, h: f64, upsilon: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreParams::new(g, k, h, upsilon).map_err(to_py)?,
        })
    }

    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn upsilon(&self) -> f64 {
        self.inner.upsilon
    }

    fn depth(&self) -> f64 {
        self.inner.depth()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "PhysicalParams(g={}, k={}, h={}, upsilon={})",
            p.g, p.k, p.h, p.upsilon
        )
    }
}

/// Run configuration in the TOML layout used by the command-line tool.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct RunConfig {
    inner: CoreRunConfig,
}

#[pymethods]
impl RunConfig {
    /// Parse TOML text; `overrides` maps `section.key` to a TOML value string.
    #[new]
    #[pyo3(signature = (text = "", overrides = None))]
    fn new(text: &str, overrides: Option<Vec<(String, String)>>) -> PyResult<Self> {
        let inner =
            CoreRunConfig::from_toml_with(text, &overrides.unwrap_or_default()).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn params(&self) -> PhysicalParams {
        PhysicalParams {
            inner: self.inner.physics,
        }
    }
}

/// One solution: surface elevation cosine coefficients, `m` and `Q`.
#[pyclass(name = "SolutionPoint", from_py_object)]
#[derive(Clone)]
struct SolutionPoint {
    inner: CorePoint,
    grid: GridSpec,
    sign: BranchSign,
}

#[pymethods]
impl SolutionPoint {
    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    #[getter(Q)]
    fn q(&self) -> f64 {
        self.inner.q
    }

    #[getter]
    fn cos_coeffs(&self) -> Vec<f64> {
        self.inner.v.cos_coeffs().to_vec()
    }

    #[getter]
    fn params(&self) -> PhysicalParams {
        PhysicalParams {
            inner: self.inner.params,
        }
    }

    fn amplitude(&self) -> f64 {
        self.inner.amplitude()
    }

    /// Surface elevation at the points `xs`.
    fn elevation(&self, xs: Vec<f64>) -> Vec<f64> {
        xs.iter().map(|&x| self.inner.v.eval(x)).collect()
    }

    /// `(largest field coefficient residual, scalar residual)`.
    fn residual(&self) -> PyResult<(f64, f64)> {
        let (f, s) = residual_system(&self.inner, &self.grid).map_err(to_py)?;
        Ok((f.max_abs_coeff(), s))
    }

    fn identity_residual(&self) -> PyResult<f64> {
        identity_add_check(&self.inner, &self.grid).map_err(to_py)
    }

    /// Condition name to `(passed, margin)`.
    fn conditions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let report = core_conditions(&self.inner, &self.grid, self.sign).map_err(to_py)?;
        let d = PyDict::new(py);
        for e in &report.entries {
            d.set_item(&e.name, (e.pass, e.margin))?;
        }
        Ok(d)
    }

    /// Flow-side residuals of the reconstructed velocity field.
    fn physical_checks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let p = &self.inner;
        let map =
            build_strip_map(p, &default_levels(p.params.depth()), &self.grid).map_err(to_py)?;
        let flow = build_flow(p, map, &self.grid).map_err(to_py)?;
        let r = core_physical(p, &flow, &self.grid).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("bernoulli_residual", r.bernoulli_residual)?;
        d.set_item("pressure_residual", r.pressure_residual)?;
        d.set_item("max_psi_y", r.max_psi_y)?;
        d.set_item("min_q2gy", r.min_q2gy)?;
        d.set_item("identity_gap", r.identity_gap)?;
        d.set_item("surface_monotone", r.surface_monotone)?;
        Ok(d)
    }

    /// `(slope, intercept, max deviation)` of the mean current below the trough.
    #[pyo3(signature = (count = 9, fraction = 0.9))]
    fn current_profile(&self, count: usize, fraction: f64) -> PyResult<(f64, f64, f64)> {
        let p = &self.inner;
        let map =
            build_strip_map(p, &default_levels(p.params.depth()), &self.grid).map_err(to_py)?;
        let flow = build_flow(p, map, &self.grid).map_err(to_py)?;
        let c = core_current(p, &flow, &default_heights(p, count, fraction)).map_err(to_py)?;
        Ok((c.slope, c.intercept, c.max_deviation))
    }
}

/// A traced branch of periodic waves.
#[pyclass(name = "Branch", from_py_object)]
#[derive(Clone)]
struct Branch {
    inner: CoreBranch,
}

#[pymethods]
impl Branch {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreBranch::from_json(text).map_err(to_py)?,
        })
    }

    #[pyo3(signature = (provenance = None))]
    fn to_json(&self, provenance: Option<String>) -> String {
        self.inner.to_json(provenance)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn halt(&self) -> String {
        format!("{:?}", self.inner.halt)
    }

    fn all_certified(&self) -> bool {
        self.inner.all_certified()
    }

    /// Rows `(s, m, Q, amplitude, bound, min(Q - 2gv))`.
    fn summary(&self) -> Vec<(f64, f64, f64, f64, f64, f64)> {
        self.inner
            .points
            .iter()
            .map(|p| {
                let d = &p.diagnostics;
                (p.s, p.point.m, p.point.q, d.amplitude, d.bound, d.min_q2gv)
            })
            .collect()
    }

    fn point(&self, index: isize) -> PyResult<SolutionPoint> {
        let n = self.inner.len() as isize;
        let i = if index < 0 { n + index } else { index };
        if i < 0 || i >= n {
            return Err(pyo3::exceptions::PyIndexError::new_err(
                "point index out of range",
            ));
        }
        Ok(SolutionPoint {
            inner: self.inner.points[i as usize].point.clone(),
            grid: self.inner.grid().map_err(to_py)?,
            sign: self.inner.config.sign,
        })
    }
}

/// Trace the primary branch for the configuration.
#[pyfunction]
fn trace(py: Python<'_>, config: &RunConfig) -> PyResult<Branch> {
    let c = config.inner.clone();
    let branch = py
        .detach(|| trace_branch(&c.physics, &c.continuation, &c.kernel_config()))
        .map_err(to_py)?;
    Ok(Branch { inner: branch })
}

/// Convolution kernel of the strip Hilbert transform at `s` for strip height `d`.
#[pyfunction]
fn beta(s: f64, d: f64) -> PyResult<f64> {
    Ok(beta_certified(s, &KernelConfig::new(d))
        .map_err(to_py)?
        .value)
}

/// Whether the kernel lemma holds on every strip height of `depths`.
#[pyfunction]
fn lemma1_verify(depths: Vec<f64>) -> PyResult<(bool, f64)> {
    let r = core_lemma(&depths, &KernelConfig::new(1.0)).map_err(to_py)?;
    Ok((r.all_ok(), r.min_margin))
}

/// Amplitude bound for non-negative vorticity.
#[pyfunction]
fn amplitude_bound(params: &PhysicalParams) -> PyResult<f64> {
    let p = params.inner;
    Ok(bound_report(&p, &KernelConfig::new(p.depth()))
        .map_err(to_py)?
        .bound)
}

/// `(m_minus, Q_minus, m_plus, Q_plus)` where the flat state bifurcates.
#[pyfunction]
fn bifurcation_data(params: &PhysicalParams) -> PyResult<(f64, f64, f64, f64)> {
    let b = core_bifurcation(&params.inner).map_err(to_py)?;
    Ok((b.m_minus, b.q_minus, b.m_plus, b.q_plus))
}

/// Scaled smallest singular value of the linearisation about the flat state.
#[pyfunction]
#[pyo3(signature = (params, m, modes = 64))]
fn detect_singularity(params: &PhysicalParams, m: f64, modes: usize) -> PyResult<f64> {
    let grid = GridSpec::with_default_nodes(modes, params.inner.depth()).map_err(to_py)?;
    core_singularity(&params.inner, m, &grid).map_err(to_py)
}

#[pymodule]
fn cvwaves_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PhysicalParams>()?;
    m.add_class::<RunConfig>()?;
    m.add_class::<SolutionPoint>()?;
    m.add_class::<Branch>()?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(lemma1_verify, m)?)?;
    m.add_function(wrap_pyfunction!(amplitude_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bifurcation_data, m)?)?;
    m.add_function(wrap_pyfunction!(detect_singularity, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
