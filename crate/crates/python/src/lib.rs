//! Python bindings: preprocessing, datasets, splits, training, threshold
//! tuning and metrics. Structured results come back as plain dicts.

use std::path::{Path, PathBuf};

use polarcal::calibration::macro_f1_at;
use polarcal::{
    apply_thresholds, confusion, Dataset, FeaturizerConfig, Instance, LabelSchema, LinearModel,
    MetricsReport, PreprocessConfig, Preprocessor, ProbabilityMatrix, RefineMode, SplitConfig,
    SyntheticSpec, ThresholdVector, TrainConfig, TuneOptions, WeightingMode,
};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(polarcal, PolarcalError, PyValueError);

fn err(e: polarcal::Error) -> PyErr {
    PolarcalError::new_err(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> PyErr {
    PolarcalError::new_err(format!("{}: {e}", path.display()))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PolarcalError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn preprocessor(max_tokens: usize, emoji_table: Option<PathBuf>) -> PyResult<Preprocessor> {
    Preprocessor::new(PreprocessConfig {
        max_tokens,
        emoji_table_path: emoji_table,
        ..Default::default()
    })
    .map_err(err)
}

/// Wraps a row-major probability list; ids are row positions.
fn matrix(probs: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> PyResult<ProbabilityMatrix> {
    let width = probs.first().map_or(0, Vec::len);
    let schema = match labels {
        Some(names) => LabelSchema::new(names),
        None => LabelSchema::new((0..width).map(|i| format!("label{i}"))),
    }
    .map_err(err)?;
    let ids = (0..probs.len()).map(|i| i.to_string()).collect();
    ProbabilityMatrix::new(ids, probs, schema).map_err(err)
}

/// Normalizes one text: emoji names, URL, mention and `#` removal,
/// lowercasing and whitespace collapsing.
#[pyfunction]
#[pyo3(signature = (text, *, demojize=true, strip_urls=true, strip_mentions=true, strip_hashtag_symbol=true, lowercase=true))]
fn preprocess(
    text: &str,
    demojize: bool,
    strip_urls: bool,
    strip_mentions: bool,
    strip_hashtag_symbol: bool,
    lowercase: bool,
) -> String {
    let cfg = PreprocessConfig {
        demojize,
        strip_urls,
        strip_mentions,
        strip_hashtag_symbol,
        lowercase,
        ..Default::default()
    };
    polarcal::preprocess(text, &cfg)
}

/// Keeps at most `max_tokens` whitespace tokens.
#[pyfunction]
fn truncate(text: &str, max_tokens: usize) -> String {
    polarcal::truncate(text, max_tokens)
}

#[pyclass(name = "LabelSchema", module = "polarcal", frozen)]
struct PyLabelSchema {
    inner: LabelSchema,
}

#[pymethods]
impl PyLabelSchema {
    #[new]
    fn new(names: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            inner: LabelSchema::new(names).map_err(err)?,
        })
    }

    /// `subtask1`, `subtask2` or `subtask3`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        LabelSchema::preset(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PolarcalError::new_err(format!("unknown schema '{name}'")))
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("LabelSchema({:?})", self.inner.names())
    }
}

#[pyclass(name = "Dataset", module = "polarcal", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Reads a JSONL file, preprocessing every text.
    #[staticmethod]
    #[pyo3(signature = (path, schema, *, max_tokens=128, emoji_table=None))]
    fn load(
        path: PathBuf,
        schema: &PyLabelSchema,
        max_tokens: usize,
        emoji_table: Option<PathBuf>,
    ) -> PyResult<Self> {
        let pre = preprocessor(max_tokens, emoji_table)?;
        let inner = polarcal::load_dataset(&path, &schema.inner, &pre).map_err(err)?;
        Ok(Self { inner })
    }

    /// Builds a dataset from parallel lists of ids, raw texts and label rows.
    #[staticmethod]
    #[pyo3(signature = (schema, ids, texts, labels, *, max_tokens=128))]
    fn from_records(
        schema: &PyLabelSchema,
        ids: Vec<String>,
        texts: Vec<String>,
        labels: Vec<Vec<bool>>,
        max_tokens: usize,
    ) -> PyResult<Self> {
        if ids.len() != texts.len() || ids.len() != labels.len() {
            return Err(PolarcalError::new_err(format!(
                "{} ids, {} texts and {} label rows",
                ids.len(),
                texts.len(),
                labels.len()
            )));
        }
        let pre = preprocessor(max_tokens, None)?;
        let rows = ids
            .into_iter()
            .zip(texts)
            .zip(labels)
            .map(|((id, raw_text), labels)| Instance {
                id,
                text: pre.process(&raw_text),
                raw_text,
                labels,
            })
            .collect();
        let inner = Dataset::new(schema.inner.clone(), rows).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn schema(&self) -> PyLabelSchema {
        PyLabelSchema {
            inner: self.inner.schema().clone(),
        }
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner
            .instances()
            .iter()
            .map(|i| i.id.clone())
            .collect()
    }

    /// Preprocessed texts.
    #[getter]
    fn texts(&self) -> Vec<String> {
        self.inner
            .instances()
            .iter()
            .map(|i| i.text.clone())
            .collect()
    }

    #[getter]
    fn raw_texts(&self) -> Vec<String> {
        self.inner
            .instances()
            .iter()
            .map(|i| i.raw_text.clone())
            .collect()
    }

    #[getter]
    fn labels(&self) -> Vec<Vec<bool>> {
        self.inner.label_matrix()
    }

    fn positive_counts(&self) -> Vec<usize> {
        self.inner.positive_counts()
    }

    /// Label counts, rates, imbalance ratios and the cardinality histogram.
    fn stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &polarcal::summarize(&self.inner).map_err(err)?)
    }

    fn write_jsonl(&self, path: PathBuf) -> PyResult<()> {
        let mut buf = Vec::new();
        self.inner
            .write_jsonl(&mut buf)
            .map_err(|e| io_err(&path, e))?;
        std::fs::write(&path, buf).map_err(|e| io_err(&path, e))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} instances, labels {:?})",
            self.inner.len(),
            self.inner.schema().names()
        )
    }
}

#[pyclass(name = "Model", module = "polarcal", frozen)]
struct PyModel {
    inner: LinearModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        let inner = LinearModel::read_from(bytes.as_slice()).map_err(err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let mut buf = Vec::new();
        self.inner
            .write_to(&mut buf)
            .map_err(|e| io_err(&path, e))?;
        std::fs::write(&path, buf).map_err(|e| io_err(&path, e))
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.schema.names().to_vec()
    }

    /// One row of per-label probabilities per instance.
    fn predict_proba(&self, dataset: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        Ok(polarcal::predict_proba(&self.inner, &dataset.inner)
            .map_err(err)?
            .probs)
    }
}

fn split_with(
    dataset: &PyDataset,
    val_fraction: f64,
    seed: u64,
    f: fn(&Dataset, &SplitConfig) -> polarcal::Result<polarcal::SplitResult>,
) -> PyResult<(PyDataset, PyDataset)> {
    let r = f(&dataset.inner, &SplitConfig { val_fraction, seed }).map_err(err)?;
    Ok((PyDataset { inner: r.train }, PyDataset { inner: r.val }))
}

/// Single-label stratified split; returns `(train, val)`.
#[pyfunction]
#[pyo3(signature = (dataset, val_fraction=0.2, seed=42))]
fn stratified_split(
    dataset: &PyDataset,
    val_fraction: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    split_with(dataset, val_fraction, seed, polarcal::stratified_split)
}

/// Multi-label iterative stratification; returns `(train, val)`.
#[pyfunction]
#[pyo3(signature = (dataset, val_fraction=0.2, seed=42))]
fn iterative_stratified_split(
    dataset: &PyDataset,
    val_fraction: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    split_with(
        dataset,
        val_fraction,
        seed,
        polarcal::iterative_stratified_split,
    )
}

/// Appends donor rows to a binary corpus until it is exactly balanced.
#[pyfunction]
#[pyo3(signature = (primary, donor, seed=42))]
fn balanced_merge(primary: &PyDataset, donor: &PyDataset, seed: u64) -> PyResult<PyDataset> {
    let inner = polarcal::balanced_merge(&primary.inner, &donor.inner, seed).map_err(err)?;
    Ok(PyDataset { inner })
}

/// Balanced class weights `n / (k · n_c)`.
#[pyfunction]
fn class_weights(class_counts: Vec<usize>) -> PyResult<Vec<f64>> {
    Ok(polarcal::class_weights(&class_counts).map_err(err)?.w)
}

/// Per-label positive weights `n_neg / n_pos`, capped.
#[pyfunction]
#[pyo3(signature = (labels, cap=100.0))]
fn pos_weights(labels: Vec<Vec<bool>>, cap: f64) -> PyResult<Vec<f64>> {
    Ok(polarcal::pos_weights(&labels, cap).map_err(err)?.pw)
}

/// Trains the hashed linear model; returns `(model, report)`.
#[pyfunction]
#[pyo3(signature = (
    train, val, *, weighting="balanced", learning_rate=None, weight_decay=None,
    max_epochs=None, batch_size=None, patience=None, label_smoothing=None, seed=42
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    train: &PyDataset,
    val: &PyDataset,
    weighting: &str,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    max_epochs: Option<usize>,
    batch_size: Option<usize>,
    patience: Option<usize>,
    label_smoothing: Option<f64>,
    seed: u64,
) -> PyResult<(PyModel, Py<PyAny>)> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: learning_rate.unwrap_or(d.learning_rate),
        weight_decay: weight_decay.unwrap_or(d.weight_decay),
        max_epochs: max_epochs.unwrap_or(d.max_epochs),
        batch_size: batch_size.unwrap_or(d.batch_size),
        patience: patience.unwrap_or(d.patience),
        label_smoothing,
        seed,
        ..d
    };
    let mode: WeightingMode = weighting.parse().map_err(err)?;
    let (model, report) = py
        .detach(|| {
            polarcal::train(
                &train.inner,
                &val.inner,
                &cfg,
                &FeaturizerConfig::default(),
                mode,
            )
        })
        .map_err(err)?;
    Ok((PyModel { inner: model }, to_py(py, &report)?))
}

/// Tunes per-label thresholds on validation probabilities.
#[pyfunction]
#[pyo3(signature = (probs, gold, *, refine_passes=1, refine_mode="sequential"))]
fn tune(
    py: Python<'_>,
    probs: Vec<Vec<f64>>,
    gold: Vec<Vec<bool>>,
    refine_passes: usize,
    refine_mode: &str,
) -> PyResult<Py<PyAny>> {
    let pm = matrix(probs, None)?;
    let mode: RefineMode = refine_mode.parse().map_err(err)?;
    let opts = TuneOptions {
        passes: refine_passes,
        mode,
        ..Default::default()
    };
    let outcome = polarcal::tune_with(&pm, &gold, &opts).map_err(err)?;
    to_py(py, &outcome)
}

/// Exhaustive per-label optimum; returns `(thresholds, macro_f1)`.
#[pyfunction]
fn oracle_best_thresholds(probs: Vec<Vec<f64>>, gold: Vec<Vec<bool>>) -> PyResult<(Vec<f64>, f64)> {
    let pm = matrix(probs, None)?;
    let (tv, score) = polarcal::oracle_best_thresholds(&pm, &gold).map_err(err)?;
    Ok((tv.theta, score))
}

/// Macro-F1 with each label at its own threshold.
#[pyfunction]
fn macro_f1(probs: Vec<Vec<f64>>, gold: Vec<Vec<bool>>, thresholds: Vec<f64>) -> PyResult<f64> {
    let pm = matrix(probs, None)?;
    if thresholds.len() != pm.width() || gold.len() != pm.len() {
        return Err(PolarcalError::new_err(
            "probabilities, gold and thresholds disagree in shape",
        ));
    }
    Ok(macro_f1_at(&pm, &gold, &thresholds))
}

/// Scores probabilities against gold rows; thresholds default to 0.5.
#[pyfunction]
#[pyo3(signature = (probs, gold, thresholds=None, labels=None))]
fn evaluate(
    py: Python<'_>,
    probs: Vec<Vec<f64>>,
    gold: Vec<Vec<bool>>,
    thresholds: Option<Vec<f64>>,
    labels: Option<Vec<String>>,
) -> PyResult<Py<PyAny>> {
    let pm = matrix(probs, labels)?;
    let tv = match thresholds {
        Some(theta) => ThresholdVector {
            theta,
            ..ThresholdVector::uniform(pm.width(), 0.5)
        },
        None => ThresholdVector::uniform(pm.width(), 0.5),
    };
    let pred = apply_thresholds(&pm, &tv).map_err(err)?;
    let cc = confusion(&pred, &gold).map_err(err)?;
    let report = MetricsReport::from_counts(pm.schema.names().to_vec(), cc, tv.theta);
    to_py(py, &report)
}

/// Seeded corpus where each label is signaled by its own cue words.
#[pyfunction]
#[pyo3(signature = (rates, n_instances=3000, noise=0.1, seed=42, schema=None))]
fn synthesize(
    rates: Vec<f64>,
    n_instances: usize,
    noise: f64,
    seed: u64,
    schema: Option<&PyLabelSchema>,
) -> PyResult<PyDataset> {
    let schema = match schema {
        Some(s) => s.inner.clone(),
        None => LabelSchema::new((1..=rates.len()).map(|i| format!("label{i}"))).map_err(err)?,
    };
    let spec = SyntheticSpec {
        schema,
        n_instances,
        rates,
        noise,
        seed,
    };
    let inner = polarcal::generate_synthetic(&spec).map_err(err)?;
    Ok(PyDataset { inner })
}

#[pymodule]
#[pyo3(name = "polarcal")]
fn polarcal_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PolarcalError", m.py().get_type::<PolarcalError>())?;
    m.add_class::<PyLabelSchema>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(truncate, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(iterative_stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_merge, m)?)?;
    m.add_function(wrap_pyfunction!(class_weights, m)?)?;
    m.add_function(wrap_pyfunction!(pos_weights, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_best_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(macro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
