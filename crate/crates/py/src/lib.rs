//! Python bindings: payoff, metrics, threshold search, statistics, single
//! classifiers and whole experiment runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use straddle_core::classifiers::{self, ClassifierSpec, Matrix, ModelParams, TrainedModel};
use straddle_core::config::ExperimentConfig;
use straddle_core::metrics::{self, WeightMode};
use straddle_core::prequential::{self, ThresholdMode};
use straddle_core::runner;
use straddle_core::stats;
use straddle_core::strategy;
use straddle_core::timeline;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_name<T: DeserializeOwned>(name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).map_err(value_err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(value_err)
}

/// Profit of a short straddle sold for `premium` at `strike`, settled at `settlement`.
#[pyfunction]
fn straddle_profit(premium: f64, strike: f64, settlement: f64) -> f64 {
    strategy::straddle_profit(premium, strike, settlement)
}

/// Full metric row as a dict; undefined metrics are None.
#[pyfunction]
#[pyo3(signature = (y, decisions, probabilities, profits, weight_mode = "absolute"))]
fn evaluate<'py>(
    py: Python<'py>,
    y: Vec<u8>,
    decisions: Vec<u8>,
    probabilities: Vec<f64>,
    profits: Vec<f64>,
    weight_mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: WeightMode = from_name(weight_mode)?;
    let row = metrics::evaluate(&y, &decisions, &probabilities, &profits, mode).map_err(value_err)?;
    to_py(py, &row)
}

/// Best grid threshold and its validation profit.
#[pyfunction]
#[pyo3(signature = (probabilities, profits, mode = "per_sample"))]
fn optimize_threshold(probabilities: Vec<f64>, profits: Vec<f64>, mode: &str) -> PyResult<(f64, f64)> {
    let mode: ThresholdMode = from_name(mode)?;
    let c = prequential::optimize_threshold(&probabilities, &profits, mode).map_err(value_err)?;
    Ok((c.threshold, c.validation_avg_profit))
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
#[pyfunction]
fn wilcoxon<'py>(py: Python<'py>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let r = stats::wilcoxon_signed_rank(&a, &b).map_err(value_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn bonferroni(p_values: Vec<f64>, m: usize) -> PyResult<Vec<f64>> {
    stats::bonferroni(&p_values, m).map_err(value_err)
}

/// `(week, probability, trade)` for probabilities in week order.
#[pyfunction]
fn timeline_marks(probabilities: Vec<f64>) -> Vec<(usize, f64, bool)> {
    let entries: Vec<(String, f64)> = probabilities
        .iter()
        .enumerate()
        .map(|(i, p)| ((i + 1).to_string(), *p))
        .collect();
    timeline::mark(&entries)
        .into_iter()
        .map(|r| (r.week, r.probability, r.trade))
        .collect()
}

/// One classifier; hyperparameters are keyword arguments of the chosen kind.
#[pyclass(module = "straddle")]
struct Classifier {
    spec: ClassifierSpec,
    model: Option<TrainedModel>,
}

#[pymethods]
impl Classifier {
    #[new]
    #[pyo3(signature = (kind, seed = 0, **params))]
    fn new(py: Python<'_>, kind: &str, seed: u64, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut obj = serde_json::Map::new();
        if let Some(p) = params {
            let text: String = py.import("json")?.call_method1("dumps", (p,))?.extract()?;
            let parsed: serde_json::Value = serde_json::from_str(&text).map_err(value_err)?;
            if let serde_json::Value::Object(m) = parsed {
                obj = m;
            }
        }
        obj.insert("kind".into(), serde_json::Value::String(kind.into()));
        let params: ModelParams = serde_json::from_value(serde_json::Value::Object(obj)).map_err(value_err)?;
        Ok(Self {
            spec: ClassifierSpec::new(params, seed),
            model: None,
        })
    }

    fn fit(&mut self, x: Vec<Vec<f64>>, y: Vec<u8>) -> PyResult<()> {
        self.model = Some(classifiers::fit(&self.spec, &matrix(x)?, &y).map_err(value_err)?);
        Ok(())
    }

    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let m = self
            .model
            .as_ref()
            .ok_or_else(|| PyRuntimeError::new_err("classifier is not fitted"))?;
        m.predict_proba(&matrix(x)?).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        match &self.model {
            Some(m) => m.to_json().map_err(value_err),
            None => Err(PyRuntimeError::new_err("classifier is not fitted")),
        }
    }
}

/// A validated experiment config.
#[pyclass(module = "straddle")]
struct Experiment {
    config: ExperimentConfig,
}

#[pymethods]
impl Experiment {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            config: ExperimentConfig::load(path).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            config: ExperimentConfig::from_toml(text).map_err(value_err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.config.name.clone()
    }

    #[pyo3(signature = (seed = None, models = None, max_estimators = None))]
    fn with_overrides(
        &self,
        seed: Option<u64>,
        models: Option<Vec<String>>,
        max_estimators: Option<usize>,
    ) -> PyResult<Self> {
        let mut config = self.config.clone();
        let o = runner::Overrides {
            seed,
            models,
            max_estimators,
            ..Default::default()
        };
        runner::apply_overrides(&mut config, &o).map_err(value_err)?;
        Ok(Self { config })
    }

    fn to_toml(&self) -> String {
        self.config.to_toml()
    }

    fn dry_run<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let plan = runner::dry_run(&self.config).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        to_py(py, &plan)
    }

    /// Runs the experiment, writes all outputs to `out_dir` and returns the report.
    fn run<'py>(&self, py: Python<'py>, out_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let report = runner::run(&self.config, &out_dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        to_py(py, &report)
    }
}

#[pymodule]
fn straddle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(straddle_profit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon, m)?)?;
    m.add_function(wrap_pyfunction!(bonferroni, m)?)?;
    m.add_function(wrap_pyfunction!(timeline_marks, m)?)?;
    m.add_class::<Classifier>()?;
    m.add_class::<Experiment>()?;
    Ok(())
}
