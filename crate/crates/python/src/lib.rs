//! Python bindings for the fedqk crate.
//!
//! Tensors cross the boundary as `(shape, values)` pairs with row-major
//! values; parameter sets are dicts from name to such a pair. Experiment
//! settings use the same dotted keys as the CLI config files.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use fedqk_core::cli::{self, ExperimentConfig, MetricsReport};
use fedqk_core::data::{gen_synthetic, SyntheticSpec};
use fedqk_core::federated::{self, ClientUpdate, Weighting};
use fedqk_core::model::{self, CellKind, ModelConfig};
use fedqk_core::numerics::{ParamTree, Rng, Tensor};
use fedqk_core::qkernel::{self, KernelConfig};
use fedqk_core::Error;

type PyTensor = (Vec<usize>, Vec<f64>);
type PyParams = BTreeMap<String, PyTensor>;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn tensor_from(shape: Vec<usize>, values: Vec<f64>) -> PyResult<Tensor> {
    Tensor::new(shape, values).map_err(to_py)
}

fn tree_from(params: PyParams) -> PyResult<ParamTree> {
    let mut tree = ParamTree::new();
    for (name, (shape, values)) in params {
        tree.insert(name, tensor_from(shape, values)?).map_err(to_py)?;
    }
    Ok(tree)
}

fn tree_to(tree: &ParamTree) -> PyParams {
    tree.iter()
        .map(|(name, t)| (name.to_string(), (t.shape().to_vec(), t.data().to_vec())))
        .collect()
}

fn rows_to_tensor(rows: &[Vec<f64>]) -> PyResult<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    tensor_from(vec![rows.len(), cols], rows.concat())
}

fn tensor_to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    let cols = t.shape().last().copied().unwrap_or(1).max(1);
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

fn experiment(overrides: Option<HashMap<String, Bound<'_, PyAny>>>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_text("").map_err(to_py)?;
    let mut entries: Vec<_> = overrides.unwrap_or_default().into_iter().collect();
    // data.path must be set before data.source can switch away from synthetic
    entries.sort_by_key(|(k, _)| (k != "data.path", k.clone()));
    for (key, value) in entries {
        let text = match value.extract::<bool>() {
            Ok(b) => b.to_string(),
            Err(_) => value.str()?.to_string(),
        };
        cfg = cfg.with(&key, &text).map_err(to_py)?;
    }
    Ok(cfg)
}

fn metrics_dict(report: &MetricsReport) -> HashMap<&'static str, f64> {
    HashMap::from([
        ("accuracy", report.accuracy),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
    ])
}

/// Fidelity kernel between `a` and `b` with per-feature scalings `w`.
#[pyfunction]
#[pyo3(signature = (a, b, w, block_size=4, depth=0))]
fn kernel(a: Vec<f64>, b: Vec<f64>, w: Vec<f64>, block_size: usize, depth: usize) -> PyResult<f64> {
    let cfg = KernelConfig::new(a.len(), block_size, depth).map_err(to_py)?;
    qkernel::kernel_value(&a, &b, &w, &cfg).map_err(to_py)
}

/// `(value, d/da, d/db, d/dw)`.
#[pyfunction]
#[pyo3(signature = (a, b, w, block_size=4, depth=0))]
fn kernel_grad(
    a: Vec<f64>,
    b: Vec<f64>,
    w: Vec<f64>,
    block_size: usize,
    depth: usize,
) -> PyResult<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let cfg = KernelConfig::new(a.len(), block_size, depth).map_err(to_py)?;
    let (k, g) = qkernel::kernel_value_and_grad(&a, &b, &w, &cfg).map_err(to_py)?;
    Ok((k, g.da, g.db, g.dw))
}

/// Closed-form depth-0 kernel.
#[pyfunction]
fn closed_form_kernel(a: Vec<f64>, b: Vec<f64>, w: Vec<f64>) -> PyResult<f64> {
    if a.len() != b.len() || a.len() != w.len() {
        return Err(PyValueError::new_err("a, b and w must have equal length"));
    }
    Ok(qkernel::closed_form_kernel(&a, &b, &w))
}

#[pyfunction]
#[pyo3(signature = (rows, w, block_size=4, depth=0))]
fn gram_matrix(rows: Vec<Vec<f64>>, w: Vec<f64>, block_size: usize, depth: usize) -> PyResult<Vec<Vec<f64>>> {
    let x = rows_to_tensor(&rows)?;
    let cfg = KernelConfig::new(w.len(), block_size, depth).map_err(to_py)?;
    Ok(tensor_to_rows(&qkernel::gram_matrix(&x, &w, &cfg).map_err(to_py)?))
}

/// Per-component trainable parameter counts plus `"total"`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn count_params(config: Option<HashMap<String, Bound<'_, PyAny>>>) -> PyResult<Vec<(String, usize)>> {
    let cfg = experiment(config)?;
    let (window, channels, classes) = cli::data_shape(&cfg).map_err(to_py)?;
    let model = ModelConfig {
        window,
        input_channels: channels,
        classes,
        ..cfg.model
    };
    model.validate().map_err(to_py)?;
    let counts = model::count_params(&model);
    let mut rows = counts.rows;
    rows.push(("total".into(), counts.total));
    Ok(rows)
}

/// Macro-averaged metrics for integer labels.
#[pyfunction]
fn compute_metrics(truth: Vec<usize>, predicted: Vec<usize>, classes: usize) -> PyResult<HashMap<&'static str, f64>> {
    let confusion = cli::confusion_matrix(&truth, &predicted, classes).map_err(to_py)?;
    Ok(metrics_dict(&cli::compute_metrics(&confusion).map_err(to_py)?))
}

/// Federated average of `(samples, params)` pairs listed in client-id order.
#[pyfunction]
#[pyo3(signature = (updates, uniform=false))]
fn fedavg(updates: Vec<(u64, PyParams)>, uniform: bool) -> PyResult<PyParams> {
    let updates = updates
        .into_iter()
        .enumerate()
        .map(|(k, (samples, params))| {
            Ok(ClientUpdate {
                round: 0,
                client: k as u32,
                samples,
                params: tree_from(params)?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let weighting = if uniform { Weighting::Uniform } else { Weighting::Samples };
    Ok(tree_to(&federated::fedavg_aggregate(&updates, weighting).map_err(to_py)?))
}

/// `(windows, labels, subjects)` with each window a list of time steps.
#[pyfunction]
#[pyo3(signature = (classes=4, windows_per_class=200, window=64, channels=3, noise_sd=0.3, seed=0))]
fn synthetic(
    classes: usize,
    windows_per_class: usize,
    window: usize,
    channels: usize,
    noise_sd: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<Vec<f64>>>, Vec<usize>, Vec<u32>)> {
    let spec = SyntheticSpec {
        classes,
        windows_per_class,
        window,
        channels,
        noise_sd,
        seed,
    };
    let ds = gen_synthetic(&spec).map_err(to_py)?;
    let windows = ds.windows().iter().map(tensor_to_rows).collect();
    Ok((windows, ds.labels().to_vec(), ds.subjects().to_vec()))
}

#[pyfunction]
fn save_checkpoint(path: PathBuf, params: PyParams) -> PyResult<()> {
    federated::save_checkpoint(&path, &tree_from(params)?).map_err(to_py)
}

#[pyfunction]
fn load_checkpoint(path: PathBuf) -> PyResult<PyParams> {
    Ok(tree_to(&federated::load_checkpoint(&path).map_err(to_py)?))
}

/// Runs an in-process federated experiment and returns one dict per round.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_fed_sim(py: Python<'_>, config: Option<HashMap<String, Bound<'_, PyAny>>>) -> PyResult<Vec<HashMap<&'static str, f64>>> {
    let cfg = experiment(config)?;
    let outcome = py.detach(|| cli::cmd_fed_sim(&cfg)).map_err(to_py)?;
    Ok(outcome
        .records
        .iter()
        .map(|r| {
            let mut row = r.metrics.as_ref().map(metrics_dict).unwrap_or_default();
            row.insert("round", r.round as f64);
            row.insert("train_loss", r.train_loss);
            row
        })
        .collect())
}

/// A network with fixed parameters.
#[pyclass(name = "Model")]
struct PyModel {
    inner: model::Model,
}

#[pymethods]
impl PyModel {
    /// Builds a freshly initialized network from config overrides.
    #[new]
    #[pyo3(signature = (config=None, seed=0))]
    fn new(config: Option<HashMap<String, Bound<'_, PyAny>>>, seed: u64) -> PyResult<Self> {
        let cfg = experiment(config)?;
        let (window, channels, classes) = cli::data_shape(&cfg).map_err(to_py)?;
        let model_cfg = ModelConfig {
            window,
            input_channels: channels,
            classes,
            ..cfg.model
        };
        model_cfg.validate().map_err(to_py)?;
        let params = federated::initial_params(&model_cfg, seed).map_err(to_py)?;
        let inner = model::Model::new(model_cfg, &params).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn cell(&self) -> &'static str {
        match self.inner.config().cell {
            CellKind::Quantum => "quantum",
            CellKind::Classical => "classical",
        }
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.param_tree().num_values()
    }

    fn params(&self) -> PyParams {
        tree_to(&self.inner.param_tree())
    }

    fn set_params(&mut self, params: PyParams) -> PyResult<()> {
        let tree = tree_from(params)?;
        self.inner = model::Model::new(self.inner.config().clone(), &tree).map_err(to_py)?;
        Ok(())
    }

    fn logits(&self, window: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.logits(&rows_to_tensor(&window)?).map_err(to_py)
    }

    fn predict(&self, window: Vec<Vec<f64>>) -> PyResult<usize> {
        self.inner.predict(&rows_to_tensor(&window)?).map_err(to_py)
    }

    /// Eval-mode loss and gradients for one labelled window.
    fn loss_and_grad(&self, window: Vec<Vec<f64>>, label: usize) -> PyResult<(f64, PyParams)> {
        let (loss, grads) = self
            .inner
            .loss_and_grad(&rows_to_tensor(&window)?, label, &mut Rng::new(0), false)
            .map_err(to_py)?;
        Ok((loss, tree_to(&grads)))
    }
}

#[pymodule]
fn fedqk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kernel, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_grad, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(gram_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(fedavg, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(save_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(load_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(run_fed_sim, m)?)?;
    m.add_class::<PyModel>()?;
    Ok(())
}
