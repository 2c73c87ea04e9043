//! Python bindings for `longicause`.
//!
//! Arrays cross the boundary as nested lists (`[unit][step]`), and
//! configurations as JSON strings using the same keys as the CLI's run
//! files. Unset keys take their defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use longicause::cdvae::{load_checkpoint, save_checkpoint};
use longicause::metrics::Metric;
use longicause::train::{check_gradients, GradcheckConfig};
use longicause::{CdvaeConfig, CdvaeModel, PanelDataset, SynthConfig, TrainConfig, TumorConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    match json {
        Some(s) => serde_json::from_str(s).map_err(value_err),
        None => Ok(T::default()),
    }
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let t = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != t) {
        return Err(PyValueError::new_err(format!("{what}: rows have unequal lengths")));
    }
    Array2::from_shape_vec((n, t), rows.into_iter().flatten().collect()).map_err(value_err)
}

/// A longitudinal panel: covariates, binary treatments, outcomes and, for
/// simulated data, both potential outcomes.
#[pyclass(name = "Panel", module = "longicause_py")]
pub struct PyPanel {
    inner: PanelDataset,
}

#[pymethods]
impl PyPanel {
    /// Reads a JSONL panel written by `save` or the CLI.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyPanel { inner: longicause::load_dataset(&path).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        longicause::save_dataset(&self.inner, &path).map_err(value_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn d_x(&self) -> usize {
        self.inner.d_x()
    }

    #[getter]
    fn y(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.y)
    }

    #[getter]
    fn w(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.w)
    }

    /// True effects, or `None` for observational data.
    #[getter]
    fn tau(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.tau.as_ref().map(to_rows)
    }

    /// Covariates as `[unit][step][feature]`.
    #[getter]
    fn x(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.x.outer_iter().map(|u| to_rows(&u.to_owned())).collect()
    }

    fn __repr__(&self) -> String {
        format!("Panel(n={}, steps={}, d_x={})", self.inner.n(), self.inner.steps(), self.inner.d_x())
    }
}

/// A trained (or freshly initialised) model.
#[pyclass(name = "Model", module = "longicause_py")]
pub struct PyModel {
    inner: CdvaeModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: load_checkpoint(&path).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, &path).map_err(value_err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    /// Model configuration as JSON.
    #[getter]
    fn config(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.config).map_err(value_err)
    }

    /// Estimated effects for every unit (or the listed units) of `panel`.
    #[pyo3(signature = (panel, units=None))]
    fn predict_ite(&self, panel: &PyPanel, units: Option<Vec<usize>>) -> PyResult<Vec<Vec<f64>>> {
        let idx = units.unwrap_or_else(|| (0..panel.inner.n()).collect());
        if let Some(&bad) = idx.iter().find(|&&i| i >= panel.inner.n()) {
            return Err(PyValueError::new_err(format!("unit {bad} out of range")));
        }
        let pred = self.inner.predict_dataset(&panel.inner, &idx).map_err(value_err)?;
        Ok(to_rows(&pred.tau))
    }
}

/// Simulates a synthetic panel; `config` is a JSON object of generator
/// settings (`n`, `T`, `d_x`, `d_u`, `p`, `rho`, `sigma2`, `gamma1_yx`, `seed`).
#[pyfunction]
#[pyo3(signature = (config=None))]
fn generate_synthetic(config: Option<&str>) -> PyResult<PyPanel> {
    let cfg: SynthConfig = parse(config)?;
    Ok(PyPanel { inner: longicause::generate_dataset(&cfg).map_err(value_err)? })
}

/// Simulates a tumour-growth cohort from a JSON object of simulator settings.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn generate_tumor(config: Option<&str>) -> PyResult<PyPanel> {
    let cfg: TumorConfig = parse(config)?;
    Ok(PyPanel { inner: longicause::generate_cohort(&cfg).map_err(value_err)? })
}

/// Splits `panel`, trains a model and returns it with the training log
/// (as JSON).
#[pyfunction]
#[pyo3(signature = (panel, model_config=None, train_config=None, split=(0.7, 0.15, 0.15), split_seed=0))]
fn train(
    py: Python<'_>,
    panel: &PyPanel,
    model_config: Option<&str>,
    train_config: Option<&str>,
    split: (f64, f64, f64),
    split_seed: u64,
) -> PyResult<(PyModel, String)> {
    let mcfg: CdvaeConfig = parse(model_config)?;
    let tcfg: TrainConfig = parse(train_config)?;
    let d = &panel.inner;
    let s = longicause::split_dataset(d, split, split_seed).map_err(value_err)?;
    let (model, log) = py.detach(|| longicause::train_model(&mcfg, &tcfg, d, &s)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let log = serde_json::to_string(&log).map_err(value_err)?;
    Ok((PyModel { inner: model }, log))
}

/// Normalised error metrics of an effect estimate, keyed by metric name.
#[pyfunction]
fn compute_metrics(
    tau: Vec<Vec<f64>>,
    tau_hat: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    y_hat: Vec<Vec<f64>>,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let (tau, tau_hat) = (from_rows(tau, "tau")?, from_rows(tau_hat, "tau_hat")?);
    let (y, y_hat) = (from_rows(y, "y")?, from_rows(y_hat, "y_hat")?);
    let r = longicause::compute_metrics(tau.view(), tau_hat.view(), y.view(), y_hat.view()).map_err(value_err)?;
    Ok(Metric::ALL.iter().map(|m| (m.name(), m.of(&r))).collect())
}

/// Two-sided paired t-test and Wilcoxon signed-rank p-values.
#[pyfunction]
fn paired_tests(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = longicause::paired_tests(&a, &b).map_err(value_err)?;
    Ok((r.p_t, r.p_wilcoxon))
}

/// KL weight at optimiser step `l` (1-based) of a cyclical schedule.
#[pyfunction]
fn beta_at_iteration(l: usize, n_iter: usize, cycles: usize, ratio: f64) -> PyResult<f64> {
    if l == 0 || n_iter == 0 || cycles == 0 || !(ratio > 0.0 && ratio <= 1.0) {
        return Err(PyValueError::new_err("need l >= 1, n_iter >= 1, cycles >= 1 and 0 < ratio <= 1"));
    }
    Ok(longicause::cdvae::beta_at_iteration(l, n_iter, cycles, ratio))
}

/// Finite-difference gradient check on a tiny model; returns the report
/// as JSON.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn gradcheck(py: Python<'_>, config: Option<&str>) -> PyResult<String> {
    let gc: GradcheckConfig = parse(config)?;
    let report = py.detach(|| check_gradients(&gc)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    serde_json::to_string(&report).map_err(value_err)
}

#[pymodule]
fn longicause_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(generate_tumor, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(paired_tests, m)?)?;
    m.add_function(wrap_pyfunction!(beta_at_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
