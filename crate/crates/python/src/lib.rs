//! Python bindings for `dirreg`.
//!
//! Structured inputs (functions, sets, regions, programs) are plain Python
//! dicts in the scenario-file format; results come back as dicts in the
//! report format, with non-finite reals as the strings `"inf"`, `"-inf"`
//! and `"nan"`.

use dirreg::cli::{parse_scenario, run_scenario as run_parsed, RunOptions};
use dirreg::geometry::{ConvexSet as CoreSet, DirectionSpec, ProductPoint};
use dirreg::maps::{BoxDomain, SearchRegion, SetValuedMap, SmoothFn};
use dirreg::regularity::{self, RegularityQuery};
use dirreg::sensitivity::{self as sens, DerivativeSchedule, ParametricProgram};
use dirreg::slopes::{self, SlopeKind};
use dirreg::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::NotInSet { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn slope_kind(kind: &str) -> PyResult<SlopeKind> {
    match kind {
        "local" => Ok(SlopeKind::Local),
        "nonlocal" => Ok(SlopeKind::Nonlocal),
        _ => Err(PyValueError::new_err("kind must be 'local' or 'nonlocal'")),
    }
}

/// Closed convex set: box, polyhedron, ball or singleton.
#[pyclass(module = "pydirreg", from_py_object)]
#[derive(Clone)]
struct ConvexSet {
    inner: CoreSet,
}

#[pymethods]
impl ConvexSet {
    /// From a spec such as `{"kind": "box", "lo": [0], "hi": ["inf"]}`.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner: CoreSet = from_py(spec)?;
        inner.validate().map_err(to_py_err)?;
        Ok(ConvexSet { inner })
    }

    #[staticmethod]
    fn nonpositive_orthant(dim: usize) -> Self {
        ConvexSet {
            inner: CoreSet::nonpositive_orthant(dim),
        }
    }

    #[staticmethod]
    fn nonnegative_orthant(dim: usize) -> Self {
        ConvexSet {
            inner: CoreSet::nonnegative_orthant(dim),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn project(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project(&z).map_err(to_py_err)
    }

    fn distance(&self, z: Vec<f64>) -> PyResult<f64> {
        self.inner.distance(&z).map_err(to_py_err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("ConvexSet({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// `F(x) = f(x)`, or `F(x) = f(x) − K` when a set is given.
#[pyclass(module = "pydirreg", from_py_object)]
#[derive(Clone)]
struct Map {
    inner: SetValuedMap,
}

#[pymethods]
impl Map {
    /// `f` is a builtin spec such as `{"builtin": "cubic-difference"}`; `domain` is `{"lo": .., "hi": ..}`.
    #[new]
    #[pyo3(signature = (f, set=None, domain=None))]
    fn new(f: &Bound<'_, PyAny>, set: Option<ConvexSet>, domain: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let f: SmoothFn = from_py(f)?;
        let domain: Option<BoxDomain> = domain.map(from_py).transpose()?;
        let inner = match set {
            None => SetValuedMap::single_smooth(f, domain),
            Some(k) => SetValuedMap::smooth_minus_convex(f, k.inner, domain),
        }
        .map_err(to_py_err)?;
        Ok(Map { inner })
    }

    #[getter]
    fn x_dim(&self) -> usize {
        self.inner.x_dim()
    }

    #[getter]
    fn y_dim(&self) -> usize {
        self.inner.y_dim()
    }

    /// `d(y, F(x))`.
    fn image_distance(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.inner.image_distance(&x, &y).map_err(to_py_err)
    }

    /// `(d(x, F⁻¹(y)), witness)`, searched over `region`.
    fn inverse_distance(
        &self,
        py: Python<'_>,
        x: Vec<f64>,
        y: Vec<f64>,
        region: &Bound<'_, PyAny>,
    ) -> PyResult<(f64, Vec<f64>)> {
        let region: SearchRegion = from_py(region)?;
        let r = py
            .detach(|| self.inner.inverse_distance(&x, &y, &region))
            .map_err(to_py_err)?;
        Ok((r.distance, r.witness))
    }

    /// Slope of `u ↦ d(y, F(u))^γ` at `x`; `kind` is `"local"` or `"nonlocal"`.
    fn holder_slope<'py>(
        &self,
        py: Python<'py>,
        x: Vec<f64>,
        y: Vec<f64>,
        gamma: f64,
        kind: &str,
        region: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let region: SearchRegion = from_py(region)?;
        let kind = slope_kind(kind)?;
        let r = py
            .detach(|| slopes::holder_slope_of_phi(&self.inner, &y, &x, gamma, kind, &region))
            .map_err(to_py_err)?;
        to_py(py, &r)
    }

    /// Coderivative slope `m_F(x, y)`.
    fn coderivative_slope(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        regularity::coderivative_slope(&self.inner, &x, &y).map_err(to_py_err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Where and how to estimate the directional Hölder modulus of a map.
#[pyclass(module = "pydirreg", from_py_object)]
#[derive(Clone)]
struct Query {
    inner: RegularityQuery,
}

#[pymethods]
impl Query {
    /// `direction` is `(u, v, epsilon)`; the zero direction is used when absent.
    #[new]
    #[pyo3(signature = (map, base_x, base_y, gamma, delta, region, eta=f64::INFINITY, direction=None, samples=None, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        map: &Map,
        base_x: Vec<f64>,
        base_y: Vec<f64>,
        gamma: f64,
        delta: f64,
        region: &Bound<'_, PyAny>,
        eta: f64,
        direction: Option<(Vec<f64>, Vec<f64>, f64)>,
        samples: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let region: SearchRegion = from_py(region)?;
        let mut q =
            RegularityQuery::new(map.inner.clone(), base_x, base_y, gamma, delta, eta, region).map_err(to_py_err)?;
        if let Some((u, v, eps)) = direction {
            let dir = DirectionSpec::new(ProductPoint::from_vecs(u, v), eps).map_err(to_py_err)?;
            q = q.with_direction(dir).map_err(to_py_err)?;
        }
        q.seed = seed;
        if let Some(s) = samples {
            q.samples = s;
        }
        Ok(Query { inner: q })
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Sampled modulus and verdict; per-sample records on request.
    #[pyo3(signature = (include_samples=false))]
    fn estimate_modulus<'py>(&self, py: Python<'py>, include_samples: bool) -> PyResult<Bound<'py, PyAny>> {
        let r = py
            .detach(|| regularity::estimate_modulus(&self.inner))
            .map_err(to_py_err)?;
        let out = to_py(py, &r)?;
        if include_samples {
            out.set_item("samples", to_py(py, &r.samples)?)?;
        }
        Ok(out)
    }

    fn criterion<'py>(&self, py: Python<'py>, kind: &str) -> PyResult<Bound<'py, PyAny>> {
        let kind = slope_kind(kind)?;
        let r = py
            .detach(|| match kind {
                SlopeKind::Local => regularity::local_criterion(&self.inner),
                SlopeKind::Nonlocal => regularity::nonlocal_criterion(&self.inner),
            })
            .map_err(to_py_err)?;
        to_py(py, &r)
    }

    fn gamma1_equivalence<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py
            .detach(|| regularity::gamma1_equivalence_check(&self.inner))
            .map_err(to_py_err)?;
        to_py(py, &r)
    }

    /// Modulus of `F` and `F + g` against the bound `1/(1/τ − λ)`.
    fn perturbation_experiment<'py>(&self, py: Python<'py>, g: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let g: SmoothFn = from_py(g)?;
        let r = py
            .detach(|| regularity::perturbation_experiment(&self.inner, &g))
            .map_err(to_py_err)?;
        to_py(py, &r)
    }

    /// Compared-slope condition for the perturbation `g` with constant `c ∈ (0, 1)`.
    fn perturbation_condition<'py>(
        &self,
        py: Python<'py>,
        g: &Bound<'py, PyAny>,
        c: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let g: SmoothFn = from_py(g)?;
        let r = py
            .detach(|| regularity::perturbation_condition(&self.inner.map, &g, &self.inner, c))
            .map_err(to_py_err)?;
        to_py(py, &r)
    }
}

/// `min f(x, y)  s.t.  g(x) − y ∈ K` with parameter `y`.
#[pyclass(module = "pydirreg", from_py_object)]
#[derive(Clone)]
struct Program {
    inner: ParametricProgram,
}

#[pymethods]
impl Program {
    /// From a dict with `objective`, `g`, `set` and `search`.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner: ParametricProgram = from_py(spec)?;
        inner.validate().map_err(to_py_err)?;
        Ok(Program { inner })
    }

    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Ok(Program {
            inner: ParametricProgram::builtin(name).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn x_dim(&self) -> usize {
        self.inner.x_dim()
    }

    #[getter]
    fn y_dim(&self) -> usize {
        self.inner.y_dim()
    }

    fn solve<'py>(&self, py: Python<'py>, y: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| sens::solve_program(&self.inner, &y)).map_err(to_py_err)?;
        to_py(py, &r)
    }

    /// Optimal value `v(y)`.
    fn value(&self, py: Python<'_>, y: Vec<f64>) -> PyResult<f64> {
        py.detach(|| sens::value_function(&self.inner, &y)).map_err(to_py_err)
    }

    fn multipliers_singleton(&self, x0: Vec<f64>) -> PyResult<bool> {
        sens::multiplier_set(&self.inner, &x0)
            .and_then(|m| m.is_singleton())
            .map_err(to_py_err)
    }

    /// Optimal value of the linearized primal problem in direction `d`.
    fn linearized_primal(&self, x0: Vec<f64>, d: Vec<f64>) -> PyResult<f64> {
        Ok(sens::linearized_primal(&self.inner, &x0, &d)
            .map_err(to_py_err)?
            .objective)
    }

    /// `(max, min)` of the linearized dual over the multiplier set.
    fn linearized_dual(&self, x0: Vec<f64>, d: Vec<f64>) -> PyResult<(f64, f64)> {
        let r = sens::linearized_dual(&self.inner, &x0, &d).map_err(to_py_err)?;
        Ok((r.value, r.min_value))
    }

    /// Multiplier bounds against difference quotients of `v` along `d`.
    #[pyo3(signature = (d, schedule=None))]
    fn sandwich<'py>(
        &self,
        py: Python<'py>,
        d: Vec<f64>,
        schedule: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let schedule: DerivativeSchedule = schedule.map(from_py).transpose()?.unwrap_or_default();
        let r = py
            .detach(|| sens::sandwich_check(&self.inner, &d, &schedule))
            .map_err(to_py_err)?;
        to_py(py, &r)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Runs scenario text; returns `(report, exit_code)`. Schema errors raise `ValueError`.
#[pyfunction]
#[pyo3(signature = (text, seed=None, samples=None))]
fn run_scenario<'py>(
    py: Python<'py>,
    text: &str,
    seed: Option<u64>,
    samples: Option<usize>,
) -> PyResult<(Bound<'py, PyAny>, i32)> {
    let (scenario, echo) = parse_scenario(text, "<scenario>").map_err(|e| PyValueError::new_err(e.0))?;
    let opts = RunOptions { seed, samples };
    let out = py
        .detach(|| run_parsed(&scenario, &echo, &opts))
        .map_err(|e| PyValueError::new_err(e.0))?;
    let code = out.report.exit_code;
    Ok((to_py(py, &out.report)?, code))
}

#[pyfunction]
fn list_builtins() -> String {
    dirreg::cli::list_builtins()
}

#[pymodule]
pub fn pydirreg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<ConvexSet>()?;
    m.add_class::<Map>()?;
    m.add_class::<Query>()?;
    m.add_class::<Program>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(list_builtins, m)?)?;
    Ok(())
}
