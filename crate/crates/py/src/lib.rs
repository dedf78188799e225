//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use maze_core::backend::{BackendSpec, RemoteConfig};
use maze_core::corpus::{self, SourceRecord};
use maze_core::dialoguegen;
use maze_core::infotheory::{self, DiscreteJoint};
use maze_core::metrics;
use maze_core::prompting;
use maze_core::protocol::{self, EpisodeTranscript, Mode, ProtocolConfig};
use maze_core::runner::{self, RunConfig};
use maze_core::taskgen::MazeTask;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(muddy_maze, MazeError, PyException);

fn err(e: impl ToString) -> PyErr {
    MazeError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn mode(name: &str) -> PyResult<Mode> {
    name.parse().map_err(PyValueError::new_err)
}

fn backend(spec: &str) -> PyResult<std::sync::Arc<dyn maze_core::backend::Backend>> {
    let spec: BackendSpec = spec.parse().map_err(PyValueError::new_err)?;
    spec.build(&RemoteConfig::default()).map_err(err)
}

/// One evidence-ranking task: background, question, answer and a shuffled pool.
#[pyclass(name = "Task", frozen)]
struct PyTask {
    inner: MazeTask,
}

#[pymethods]
impl PyTask {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(|inner| PyTask { inner }).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    #[getter]
    fn task_id(&self) -> &str {
        &self.inner.task_id
    }

    #[getter]
    fn source_id(&self) -> &str {
        &self.inner.source_id
    }

    #[getter]
    fn background(&self) -> &str {
        &self.inner.background
    }

    #[getter]
    fn question(&self) -> &str {
        &self.inner.question
    }

    #[getter]
    fn answer(&self) -> &str {
        &self.inner.answer
    }

    #[getter]
    fn noise_level(&self) -> usize {
        self.inner.noise_level
    }

    #[getter]
    fn tier(&self) -> String {
        self.inner.tier.to_string()
    }

    /// Pool sentences in display order.
    #[getter]
    fn pool(&self) -> Vec<String> {
        self.inner.pool.iter().map(|s| s.text.clone()).collect()
    }

    /// Pool indices of the evidence chain, in chain order.
    #[getter]
    fn gt_indices(&self) -> Vec<usize> {
        self.inner.gt_pool_indices()
    }

    fn __len__(&self) -> usize {
        self.inner.chain_len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Task({:?}, chain={}, pool={})",
            self.inner.task_id,
            self.inner.chain_len(),
            self.inner.pool.len()
        )
    }

    fn render_one_round(&self) -> PyResult<String> {
        prompting::render_one_round(&self.inner).map(|p| p.text).map_err(err)
    }

    #[pyo3(signature = (attempt, background=None))]
    fn render_multi_round(&self, attempt: usize, background: Option<&str>) -> PyResult<String> {
        let bg = background.unwrap_or(&self.inner.background);
        prompting::render_multi_round(&self.inner, bg, attempt).map(|p| p.text).map_err(err)
    }

    /// Runs one episode and returns the transcript as a dict.
    #[pyo3(signature = (mode="one", backend="oracle", retries=2))]
    fn run<'py>(&self, py: Python<'py>, mode: &str, backend: &str, retries: usize) -> PyResult<Bound<'py, PyAny>> {
        let b = self::backend(backend)?;
        let cfg = ProtocolConfig {
            retries,
            ..ProtocolConfig::default()
        };
        let t = protocol::run_episode(&self.inner, self::mode(mode)?, b.as_ref(), &cfg).map_err(err)?;
        to_py(py, &t)
    }

    /// Scores a transcript dict; returns `(multi_hop, single_wise)`.
    fn score(&self, transcript: &Bound<'_, PyAny>) -> PyResult<(f64, Option<f64>)> {
        let text: String = transcript.py().import("json")?.call_method1("dumps", (transcript,))?.extract()?;
        let t: EpisodeTranscript = serde_json::from_str(&text).map_err(err)?;
        let s = metrics::score_episode(&self.inner, &t, "python").map_err(err)?;
        Ok((s.multi_hop, s.single_wise))
    }
}

/// Record count, tier histogram and content digest of a corpus file.
#[pyfunction]
fn corpus_stats<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let records = corpus::load_corpus(&path, None).map_err(err)?;
    to_py(py, &corpus::manifest_for(&path, &records))
}

#[pyfunction]
#[pyo3(signature = (corpus_path, noise_levels=vec![0, 1, 3, 5], seed=0))]
fn build_tasks(corpus_path: PathBuf, noise_levels: Vec<usize>, seed: u64) -> PyResult<Vec<PyTask>> {
    let records = runner::load_records(&corpus_path, None).map_err(err)?;
    let tasks = runner::build_tasks(&records, &noise_levels, seed).map_err(err)?;
    Ok(tasks.into_iter().map(|inner| PyTask { inner }).collect())
}

/// Bracketed indices from a model response, or `None` when nothing usable.
#[pyfunction]
fn parse_selection(text: &str, limit: usize, pool_size: usize) -> Option<Vec<usize>> {
    protocol::parse_selection(text, limit, pool_size).ok()
}

#[pyfunction]
fn multi_hop_accuracy(gt: Vec<usize>, pred: Vec<Option<usize>>) -> PyResult<f64> {
    metrics::multi_hop_accuracy(&gt, &pred).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn single_wise_accuracy(gt: Vec<usize>, pred: Vec<Option<usize>>) -> PyResult<Option<f64>> {
    metrics::single_wise_accuracy(&gt, &pred).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs the full pipeline from TOML text; returns the final manifest.
#[pyfunction]
fn run_pipeline<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_toml(config_toml).map_err(err)?;
    let out = py.detach(|| runner::run_pipeline(&cfg)).map_err(err)?;
    to_py(py, &out.manifest)
}

/// Validates a generated dialogue against its source record (a dict).
#[pyfunction]
fn validate_dialogue<'py>(py: Python<'py>, record: &Bound<'py, PyAny>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let json: String = py.import("json")?.call_method1("dumps", (record,))?.extract()?;
    let rec: SourceRecord = serde_json::from_str(&json).map_err(err)?;
    rec.validate().map_err(|(field, msg)| PyValueError::new_err(format!("{field}: {msg}")))?;
    to_py(py, &dialoguegen::dialogue_from_text(&rec, text, 1))
}

/// `H(target | given)` in bits for a dense joint; the first variable is the diagnosis.
#[pyfunction]
fn conditional_entropy(names: Vec<String>, cards: Vec<usize>, probs: Vec<f64>, target: &str, given: Vec<String>) -> PyResult<f64> {
    let j = DiscreteJoint::new(names, cards, probs).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let given: Vec<&str> = given.iter().map(String::as_str).collect();
    infotheory::conditional_entropy(&j, target, &given).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// `(max |dH - I|, min dH)` over random joints.
#[pyfunction]
#[pyo3(signature = (seed=0, trials=200))]
fn entropy_demo(seed: u64, trials: usize) -> (f64, f64) {
    let s = infotheory::demo(seed, trials);
    (s.max_abs_gap, s.min_delta_h)
}

#[pymodule]
pub fn muddy_maze(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MazeError", m.py().get_type::<MazeError>())?;
    m.add_class::<PyTask>()?;
    m.add_function(wrap_pyfunction!(corpus_stats, m)?)?;
    m.add_function(wrap_pyfunction!(build_tasks, m)?)?;
    m.add_function(wrap_pyfunction!(parse_selection, m)?)?;
    m.add_function(wrap_pyfunction!(multi_hop_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(single_wise_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(validate_dialogue, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_demo, m)?)?;
    Ok(())
}
