use pathgroup::flow::{develop_left, ito_left, sample_bm, terminal_trace};
use pathgroup::heat::HeatKernelModel;
use pathgroup::noise::NoiseStream;
use pathgroup::suites::{run_identities, select, SuiteConfig, DEFAULT_GROUPS};
use pathgroup::{AlgebraVector, GroupElement, LieGroupSpec, Mat, TimeGrid};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: pathgroup::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Group", module = "pathgroup_py", frozen)]
struct PyGroup {
    spec: LieGroupSpec,
}

#[pymethods]
impl PyGroup {
    /// Built-in group by name: `circle`, `torusK`, `so3`, `soN`.
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self { spec: LieGroupSpec::by_name(name).map_err(err)? })
    }

    #[getter]
    fn label(&self) -> String {
        self.spec.label()
    }

    #[getter]
    fn algebra_dim(&self) -> usize {
        self.spec.algebra_dim()
    }

    #[getter]
    fn matrix_size(&self) -> usize {
        self.spec.matrix_size
    }

    fn is_abelian(&self) -> bool {
        self.spec.is_abelian()
    }

    /// Exponential of algebra coordinates, returned as matrix rows.
    fn exp(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.check_dim(&x)?;
        Ok(self.spec.exp(&AlgebraVector::from_slice(&x)).matrix().to_rows())
    }

    fn log(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let g = GroupElement(Mat::from_rows(&rows));
        Ok(self.spec.log(&g).map_err(err)?.coords().to_vec())
    }

    /// ⟨x, y⟩ = −½ tr(XY).
    fn inner(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&x)?;
        self.check_dim(&y)?;
        Ok(self.spec.inner(&AlgebraVector::from_slice(&x), &AlgebraVector::from_slice(&y)))
    }

    fn __repr__(&self) -> String {
        format!("Group('{}')", self.spec.label())
    }
}

impl PyGroup {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.spec.algebra_dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", self.spec.algebra_dim(), x.len())));
        }
        Ok(())
    }
}

/// Terminal traces tr(g_T) of `samples` left Brownian paths.
#[pyfunction]
#[pyo3(signature = (group, horizon=1.0, steps=200, samples=1000, seed=7))]
fn terminal_traces(py: Python<'_>, group: &PyGroup, horizon: f64, steps: usize, samples: u64, seed: u64) -> PyResult<Vec<f64>> {
    let grid = TimeGrid::new(horizon, steps).map_err(err)?;
    let spec = &group.spec;
    Ok(py.detach(|| {
        (0..samples)
            .map(|i| terminal_trace(&develop_left(spec, &sample_bm(spec, &grid, &NoiseStream::new(seed, i)))))
            .collect()
    }))
}

/// Largest deviation of B^L(develop(w)) from w over `samples` paths.
#[pyfunction]
#[pyo3(signature = (group, horizon=1.0, steps=200, samples=100, seed=7))]
fn ito_round_trip_error(group: &PyGroup, horizon: f64, steps: usize, samples: u64, seed: u64) -> PyResult<f64> {
    let grid = TimeGrid::new(horizon, steps).map_err(err)?;
    let spec = &group.spec;
    let mut worst = 0.0f64;
    for i in 0..samples {
        let w = sample_bm(spec, &grid, &NoiseStream::new(seed, i));
        worst = worst.max(ito_left(spec, &develop_left(spec, &w)).map_err(err)?.max_distance(&w));
    }
    Ok(worst)
}

/// E[tr g_t] on SO(3) from the spectral heat kernel.
#[pyfunction]
fn so3_trace_moment(t: f64) -> PyResult<f64> {
    let m = HeatKernelModel::so3(&LieGroupSpec::so3()).map_err(err)?;
    m.so3_trace_moment(t).map_err(err)
}

/// Wrapped-Gaussian heat kernel density on the circle.
#[pyfunction]
fn circle_density(t: f64, theta: f64) -> PyResult<f64> {
    HeatKernelModel::torus(1).circle_density(t, theta).map_err(err)
}

/// (name, suite, summary) for identities matching the selection.
#[pyfunction]
#[pyo3(signature = (suite=None, identity=None))]
fn list_identities(suite: Option<&str>, identity: Option<&str>) -> PyResult<Vec<(String, String, String)>> {
    Ok(select(suite, identity)
        .map_err(err)?
        .iter()
        .map(|i| (i.name.to_string(), i.suite.as_str().to_string(), i.summary.to_string()))
        .collect())
}

/// Runs identities and returns one JSON document per report.
#[pyfunction]
#[pyo3(signature = (suite=None, identity=None, groups=None, config=None))]
fn verify(
    py: Python<'_>,
    suite: Option<&str>,
    identity: Option<&str>,
    groups: Option<Vec<String>>,
    config: Option<&str>,
) -> PyResult<Vec<String>> {
    let cfg: SuiteConfig = match config {
        Some(c) => serde_json::from_str(c).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => SuiteConfig::default(),
    };
    cfg.validate().map_err(err)?;
    let ids = select(suite, identity).map_err(err)?;
    let names = groups.unwrap_or_else(|| DEFAULT_GROUPS.iter().map(|s| s.to_string()).collect());
    let specs = names.iter().map(|n| LieGroupSpec::by_name(n)).collect::<pathgroup::Result<Vec<_>>>().map_err(err)?;
    let reports = py.detach(|| run_identities(&ids, &specs, &cfg));
    reports.iter().map(|r| r.to_json().map_err(err)).collect()
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pymodule]
fn pathgroup_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGroup>()?;
    m.add_function(wrap_pyfunction!(terminal_traces, m)?)?;
    m.add_function(wrap_pyfunction!(ito_round_trip_error, m)?)?;
    m.add_function(wrap_pyfunction!(so3_trace_moment, m)?)?;
    m.add_function(wrap_pyfunction!(circle_density, m)?)?;
    m.add_function(wrap_pyfunction!(list_identities, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    Ok(())
}
