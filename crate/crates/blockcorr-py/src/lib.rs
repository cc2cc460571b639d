//! Python bindings for the block correlation toolkit.
//!
//! The module mirrors the command line surface: the same statistic
//! spellings (`schott`, `wilks`, `poly:c0,c1,...`), mean modes and
//! parameter methods, operating on in-memory data instead of CSV files.

use blockcorr::asymptotics::{
    contour_lss_params, mp_lss_params, run_test as standardize, schott_params, wilks_params,
    LssParams,
};
use blockcorr::blocks::{lss, spectrum, DataMatrix, MeanMode, TestFunction};
use blockcorr::freeconv::{density_grid, support_interval as support, YVector};
use blockcorr::sim::{run_experiment, EmpiricalResult, SimConfig};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn parse_mean(mean: &str) -> PyResult<MeanMode> {
    match mean {
        "known" => Ok(MeanMode::Known),
        "unknown" => Ok(MeanMode::Unknown),
        other => Err(value_err(format!(
            "mean must be `known` or `unknown`, got `{other}`"
        ))),
    }
}

fn parse_stat(stat: &str) -> PyResult<TestFunction> {
    match stat {
        "schott" => Ok(TestFunction::Square),
        "wilks" => Ok(TestFunction::Log),
        other => {
            let Some(list) = other.strip_prefix("poly:") else {
                return Err(value_err(format!(
                    "stat must be `schott`, `wilks` or `poly:c0,c1,...`, got `{other}`"
                )));
            };
            let coeffs = list
                .split(',')
                .map(|c| c.trim().parse::<f64>().map_err(value_err))
                .collect::<PyResult<Vec<f64>>>()?;
            if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                return Err(value_err("polynomial coefficients must be finite"));
            }
            Ok(TestFunction::Polynomial(coeffs))
        }
    }
}

fn resolve_params(
    layout: &blockcorr::blocks::BlockLayout,
    f: &TestFunction,
    mode: MeanMode,
    method: Option<&str>,
) -> PyResult<LssParams> {
    let method = method.unwrap_or(match f {
        TestFunction::Square | TestFunction::Log => "closed",
        TestFunction::Polynomial(_) => "contour",
    });
    let params = match (f, method) {
        (TestFunction::Square, "closed") => schott_params(layout, mode).map_err(value_err)?,
        (TestFunction::Log, "closed") => wilks_params(layout, mode).map_err(value_err)?,
        (TestFunction::Polynomial(_), "closed") => {
            return Err(value_err(
                "polynomial statistics have no closed form; pass method=\"contour\" or \"mp\"",
            ))
        }
        (f, "contour") => contour_lss_params(layout, f, mode).map_err(value_err)?,
        (f, "mp") => mp_lss_params(layout, f, mode).map_err(value_err)?,
        (_, other) => {
            return Err(value_err(format!(
                "method must be `closed`, `contour` or `mp`, got `{other}`"
            )))
        }
    };
    Ok(params)
}

/// Serde spelling of an enum tag, e.g. `schott-closed` or `unknown`.
fn tag_string<T: serde::Serialize>(tag: &T) -> String {
    serde_json::to_value(tag)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .expect("tags serialize to strings")
}

/// Grouping of variables into blocks plus the observation count.
#[pyclass(frozen)]
struct BlockLayout {
    inner: blockcorr::blocks::BlockLayout,
}

#[pymethods]
impl BlockLayout {
    #[new]
    fn new(sizes: Vec<usize>, samples: usize) -> PyResult<Self> {
        let inner = blockcorr::blocks::BlockLayout::new(sizes, samples).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.block_sizes().to_vec()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples()
    }

    #[getter]
    fn p_total(&self) -> usize {
        self.inner.p_total()
    }

    /// Dimension ratios `p_t / N_eff` for the given mean mode.
    #[pyo3(signature = (mean = "unknown"))]
    fn ratios(&self, mean: &str) -> PyResult<Vec<f64>> {
        let mode = parse_mean(mean)?;
        Ok(self
            .inner
            .ratios(mode)
            .map_err(value_err)?
            .as_slice()
            .to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "BlockLayout(sizes={:?}, samples={})",
            self.inner.block_sizes(),
            self.inner.samples()
        )
    }
}

/// Outcome of standardizing an observed statistic against its null law.
#[pyclass(frozen)]
struct TestReport {
    #[pyo3(get)]
    statistic: f64,
    #[pyo3(get)]
    z_score: f64,
    #[pyo3(get)]
    p_value: Option<f64>,
    #[pyo3(get)]
    mean: f64,
    #[pyo3(get)]
    variance: f64,
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    mean_mode: String,
    #[pyo3(get)]
    warnings: Vec<String>,
}

#[pymethods]
impl TestReport {
    fn __repr__(&self) -> String {
        format!(
            "TestReport(statistic={}, z_score={}, p_value={:?}, method={})",
            self.statistic, self.z_score, self.p_value, self.method
        )
    }
}

/// Aggregate of a Monte Carlo run of a statistic under its null.
#[pyclass(frozen)]
struct SimulationResult {
    #[pyo3(get)]
    raw: Vec<f64>,
    #[pyo3(get)]
    standardized: Vec<f64>,
    #[pyo3(get)]
    rejection_rate: f64,
    #[pyo3(get)]
    ks_distance: f64,
}

#[pymethods]
impl SimulationResult {
    fn standardized_mean(&self) -> f64 {
        self.standardized.iter().sum::<f64>() / self.standardized.len() as f64
    }

    fn standardized_variance(&self) -> f64 {
        let mean = self.standardized_mean();
        self.standardized
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (self.standardized.len() - 1) as f64
    }

    fn __repr__(&self) -> String {
        format!(
            "SimulationResult(reps={}, rejection_rate={}, ks_distance={})",
            self.raw.len(),
            self.rejection_rate,
            self.ks_distance
        )
    }
}

impl From<EmpiricalResult> for SimulationResult {
    fn from(result: EmpiricalResult) -> Self {
        Self {
            raw: result.raw,
            standardized: result.standardized,
            rejection_rate: result.rejection_rate,
            ks_distance: result.ks_distance,
        }
    }
}

fn data_matrix(data: Vec<Vec<f64>>, layout: &BlockLayout) -> PyResult<DataMatrix> {
    let n = data.len();
    let p = data.first().map_or(0, Vec::len);
    if data.iter().any(|row| row.len() != p) {
        return Err(value_err("data rows must all have the same length"));
    }
    if n != layout.inner.samples() || p != layout.inner.p_total() {
        return Err(value_err(format!(
            "data is {n} x {p} but the layout wants {} observations of {} variables",
            layout.inner.samples(),
            layout.inner.p_total()
        )));
    }
    let values = DMatrix::from_fn(p, n, |var, obs| data[obs][var]);
    DataMatrix::new(values, layout.inner.clone()).map_err(value_err)
}

/// Test block independence on `data` (rows are observations).
#[pyfunction]
#[pyo3(signature = (data, layout, stat = "schott", mean = "unknown", method = None))]
fn run_test(
    data: Vec<Vec<f64>>,
    layout: &BlockLayout,
    stat: &str,
    mean: &str,
    method: Option<&str>,
) -> PyResult<TestReport> {
    let f = parse_stat(stat)?;
    let mode = parse_mean(mean)?;
    let params = resolve_params(&layout.inner, &f, mode, method)?;
    let matrix = data_matrix(data, layout)?;
    let spec = spectrum(&matrix, mode).map_err(value_err)?;
    let observed = lss(&spec, &f).map_err(value_err)?;
    let report = standardize(observed, &params).map_err(value_err)?;
    Ok(TestReport {
        statistic: report.statistic,
        z_score: report.z_score,
        p_value: report.p_value,
        mean: report.mean,
        variance: report.variance,
        method: tag_string(&report.method),
        mean_mode: tag_string(&report.mean_mode),
        warnings: report.warnings,
    })
}

/// Null mean and variance of a statistic for a layout, as a pair.
#[pyfunction]
#[pyo3(signature = (layout, stat = "schott", mean = "unknown", method = None))]
fn null_params(
    layout: &BlockLayout,
    stat: &str,
    mean: &str,
    method: Option<&str>,
) -> PyResult<(f64, f64)> {
    let f = parse_stat(stat)?;
    let mode = parse_mean(mean)?;
    let params = resolve_params(&layout.inner, &f, mode, method)?;
    Ok((params.mean, params.variance))
}

/// Support interval of the limiting law for dimension ratios `y`.
#[pyfunction]
fn support_interval(y: Vec<f64>) -> PyResult<(f64, f64)> {
    support(&YVector::new(y).map_err(value_err)?).map_err(value_err)
}

/// Continuous part of the limiting density at each of `xs`.
#[pyfunction]
#[pyo3(signature = (y, xs, eps = 1e-6))]
fn density(y: Vec<f64>, xs: Vec<f64>, eps: f64) -> PyResult<Vec<f64>> {
    let y = YVector::new(y).map_err(value_err)?;
    Ok(density_grid(&y, &xs, eps).map_err(value_err)?.values)
}

/// Run a simulation experiment from a JSON configuration string.
#[pyfunction]
fn simulate(config_json: &str) -> PyResult<SimulationResult> {
    let config: SimConfig = serde_json::from_str(config_json).map_err(value_err)?;
    Ok(run_experiment(&config).map_err(value_err)?.into())
}

#[pymodule]
fn blockcorr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BlockLayout>()?;
    m.add_class::<TestReport>()?;
    m.add_class::<SimulationResult>()?;
    m.add_function(wrap_pyfunction!(run_test, m)?)?;
    m.add_function(wrap_pyfunction!(null_params, m)?)?;
    m.add_function(wrap_pyfunction!(support_interval, m)?)?;
    m.add_function(wrap_pyfunction!(density, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
