//! Python bindings. Structured values (configs, reports) cross the boundary
//! as plain dicts via JSON; numeric arrays as (nested) lists of floats.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use sedmamba_core::complexity::{self, DEFAULT_REFERENCE_LEN};
use sedmamba_core::data::{synth_generate, Dataset, SynthConfig};
use sedmamba_core::metrics::{self, VideoPrediction};
use sedmamba_core::model::{self, ModelConfig, Sedmamba};
use sedmamba_core::ssm::{self, LtiParams, ScanInputs};
use sedmamba_core::train::{self, load_checkpoint, save_checkpoint, TrainConfig, Trainer};
use sedmamba_core::{Error, Tensor};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Format { .. } => PyIOError::new_err(e.to_string()),
        Error::NonFinite { .. } | Error::NumericAbort { .. } | Error::Backward(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn from_py<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let Some(obj) = obj else {
        return Ok(T::default());
    };
    if obj.is_none() {
        return Ok(T::default());
    }
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).map_err(py_err)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (r, c) = t.dims2("rows").expect("matrix");
    (0..r)
        .map(|i| t.data()[i * c..(i + 1) * c].to_vec())
        .collect()
}

/// ROC-AUC by the trapezoid rule over distinct thresholds.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::roc_auc(&scores, &labels).map_err(py_err)
}

#[pyfunction]
fn average_precision(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::average_precision(&scores, &labels).map_err(py_err)
}

/// Maximal constant-label runs as dicts with label/start/end/mean_prob/duration.
#[pyfunction]
fn group_instances<'py>(
    py: Python<'py>,
    labels: Vec<u8>,
    probs: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &metrics::group_instances(&labels, &probs).map_err(py_err)?,
    )
}

/// Pooled frame, instance and short/long metrics over
/// `[(video_id, labels, probs), ...]`.
#[pyfunction]
#[pyo3(signature = (videos, sample_rate=5.0))]
fn evaluate<'py>(
    py: Python<'py>,
    videos: Vec<(String, Vec<u8>, Vec<f64>)>,
    sample_rate: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let preds: Vec<VideoPrediction> = videos
        .into_iter()
        .map(|(video_id, labels, probs)| VideoPrediction {
            video_id,
            labels,
            probs,
        })
        .collect();
    to_py(py, &metrics::evaluate(&preds, sample_rate).map_err(py_err)?)
}

/// Zero-order-hold discretization of a diagonal SSM; returns (A_bar, B_bar).
#[pyfunction]
fn discretize(a: Vec<f64>, b: Vec<f64>, delta: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let c = vec![0.0; a.len()];
    let d = ssm::discretize(&LtiParams { a, b, c, delta }).map_err(py_err)?;
    Ok((d.a_bar, d.b_bar))
}

#[pyfunction]
fn lti_recurrence(
    a_bar: Vec<f64>,
    b_bar: Vec<f64>,
    c: Vec<f64>,
    x: Vec<f64>,
) -> PyResult<Vec<f64>> {
    ssm::lti_recurrence(&ssm::DiscreteLtiParams { a_bar, b_bar }, &c, &x).map_err(py_err)
}

/// K[i] = C · A_bar^i · B_bar for i < length.
#[pyfunction]
fn ssm_kernel(a_bar: Vec<f64>, b_bar: Vec<f64>, c: Vec<f64>, length: usize) -> PyResult<Vec<f64>> {
    Ok(
        ssm::ssm_kernel(&ssm::DiscreteLtiParams { a_bar, b_bar }, &c, length)
            .map_err(py_err)?
            .0,
    )
}

/// Selective scan over `u` (L×d). `delta` is L×d, `a` d×N, `b` and `c` L×N,
/// `d` has length d. `fast` selects the chunk-parallel implementation.
#[pyfunction]
#[pyo3(signature = (u, delta, a, b, c, d, fast=true))]
fn selective_scan(
    u: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<f64>,
    fast: bool,
) -> PyResult<Vec<Vec<f64>>> {
    let inputs = ScanInputs {
        delta: matrix(delta)?,
        a: matrix(a)?,
        b: matrix(b)?,
        c: matrix(c)?,
        d_skip: Tensor::vector(d),
    };
    let u = matrix(u)?;
    let y = if fast {
        ssm::selective_scan_fast(&inputs, &u)
    } else {
        ssm::selective_scan_reference(&inputs, &u)
    }
    .map_err(py_err)?;
    Ok(rows(&y))
}

/// Closed-form receptive field after FCTF layer 1, 2 or 3.
#[pyfunction]
fn receptive_field(layer: usize) -> PyResult<usize> {
    model::receptive_field_formula(layer).map_err(py_err)
}

/// Impulse-measured support width after each FCTF layer of `config`.
#[pyfunction]
#[pyo3(signature = (config=None, seed=0))]
fn measured_receptive_fields(config: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<Vec<usize>> {
    let cfg: ModelConfig = from_py(config)?;
    let block = cfg.block_configs().map_err(py_err)?.remove(0);
    model::measured_fctf_receptive_fields(&block.fctf, seed).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn count_params(config: Option<&Bound<'_, PyAny>>) -> PyResult<u64> {
    complexity::count_params(&from_py(config)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (config=None, length=DEFAULT_REFERENCE_LEN))]
fn estimate_flops(config: Option<&Bound<'_, PyAny>>, length: usize) -> PyResult<u64> {
    complexity::estimate_flops(&from_py(config)?, length).map_err(py_err)
}

/// Itemized parameter/FLOP report as a dict.
#[pyfunction]
#[pyo3(signature = (config=None, length=DEFAULT_REFERENCE_LEN))]
fn complexity_report<'py>(
    py: Python<'py>,
    config: Option<&Bound<'_, PyAny>>,
    length: usize,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &complexity::complexity(&from_py(config)?, length).map_err(py_err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (config=None, length=DEFAULT_REFERENCE_LEN))]
fn sweep_report<'py>(
    py: Python<'py>,
    config: Option<&Bound<'_, PyAny>>,
    length: usize,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &complexity::sweep_report(&from_py(config)?, length).map_err(py_err)?,
    )
}

/// Synthetic dataset as a list of dicts with video_id, split, embeddings
/// (L×D lists), labels and planted segments.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn synth<'py>(
    py: Python<'py>,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg: SynthConfig = from_py(config)?;
    let seqs = synth_generate(&cfg).map_err(py_err)?;
    seqs.iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("video_id", &s.data.sequence.video_id)?;
            d.set_item("split", if s.test { "test" } else { "train" })?;
            d.set_item("seed", s.seed)?;
            d.set_item("embeddings", rows(&s.data.sequence.to_tensor()))?;
            d.set_item("labels", s.data.labels.clone())?;
            d.set_item("segments", to_py(py, &s.segments)?)?;
            Ok(d)
        })
        .collect()
}

/// A detector with its parameters.
#[pyclass(name = "Model")]
struct PyModel {
    inner: Sedmamba,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (config=None, seed=0))]
    fn new(config: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<Self> {
        Ok(PyModel {
            inner: Sedmamba::new(from_py(config)?, seed).map_err(py_err)?,
        })
    }

    /// Load `final` (default) or `best` weights from a checkpoint file.
    #[staticmethod]
    #[pyo3(signature = (path, weights="final"))]
    fn from_checkpoint(path: std::path::PathBuf, weights: &str) -> PyResult<Self> {
        let ckpt = load_checkpoint(&path).map_err(py_err)?;
        let params = match weights {
            "final" => ckpt.params,
            "best" => ckpt
                .best_params
                .ok_or_else(|| PyValueError::new_err("checkpoint has no best weights"))?,
            other => {
                return Err(PyValueError::new_err(format!(
                    "weights must be final or best, got {other}"
                )))
            }
        };
        Ok(PyModel {
            inner: Sedmamba::from_params(ckpt.model_config, params).map_err(py_err)?,
        })
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_scalars()
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.config())
    }

    fn param_names(&self) -> Vec<String> {
        self.inner.params().keys().cloned().collect()
    }

    fn param_shape(&self, name: &str) -> PyResult<Vec<usize>> {
        self.inner
            .params()
            .get(name)
            .map(|t| t.shape().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("no parameter {name}")))
    }

    /// Per-frame error probabilities for an L×D embedding matrix.
    fn predict(&self, embeddings: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict(&matrix(embeddings)?).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!(
            "Model(d_model={}, num_blocks={}, compression={}, state_size={}, params={})",
            c.d_model,
            c.num_blocks,
            c.compression,
            c.state_size,
            self.inner.num_scalars()
        )
    }
}

/// Train on a synthetic dataset. Returns (model, history) where history is
/// a list of per-epoch dicts; writes checkpoints when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (model=None, train=None, data=None, out_dir=None))]
fn train_synthetic<'py>(
    py: Python<'py>,
    model: Option<&Bound<'_, PyAny>>,
    train: Option<&Bound<'_, PyAny>>,
    data: Option<&Bound<'_, PyAny>>,
    out_dir: Option<std::path::PathBuf>,
) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
    let model_cfg: ModelConfig = from_py(model)?;
    let train_cfg: TrainConfig = from_py(train)?;
    let synth_cfg: SynthConfig = from_py(data)?;
    let dataset = Dataset::from_synth(synth_generate(&synth_cfg).map_err(py_err)?);
    let outcome = py
        .detach(|| train::train_run(&dataset, model_cfg, train_cfg, out_dir.as_deref()))
        .map_err(py_err)?;
    let ckpt = outcome.final_checkpoint;
    let inner = Sedmamba::from_params(ckpt.model_config, ckpt.params).map_err(py_err)?;
    Ok((PyModel { inner }, to_py(py, &outcome.history)?))
}

/// Save a freshly initialised model as an epoch-0 checkpoint.
#[pyfunction]
#[pyo3(signature = (path, config=None, seed=0))]
fn init_checkpoint(
    path: std::path::PathBuf,
    config: Option<&Bound<'_, PyAny>>,
    seed: u64,
) -> PyResult<()> {
    let train_cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let trainer = Trainer::new(from_py(config)?, train_cfg).map_err(py_err)?;
    save_checkpoint(&path, &trainer.checkpoint()).map_err(py_err)
}

#[pymodule]
fn sedmamba(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(group_instances, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(lti_recurrence, m)?)?;
    m.add_function(wrap_pyfunction!(ssm_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(selective_scan, m)?)?;
    m.add_function(wrap_pyfunction!(receptive_field, m)?)?;
    m.add_function(wrap_pyfunction!(measured_receptive_fields, m)?)?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_flops, m)?)?;
    m.add_function(wrap_pyfunction!(complexity_report, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_report, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(init_checkpoint, m)?)?;
    Ok(())
}
