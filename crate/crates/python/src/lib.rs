use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use scriptmend::config::Config;
use scriptmend::corrector::CorrectionRequest;
use scriptmend::edit::parse_edit as parse_edit_text;
use scriptmend::memory::{HashingEmbedder, LookupResult, DEFAULT_THRESHOLD};
use scriptmend::{engine, metrics, script, Script};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load(dot: &str) -> PyResult<Script> {
    Script::from_dot(dot).map_err(value_error)
}

/// Canonical DOT for a DOT script.
#[pyfunction]
fn parse_dot(dot: &str) -> PyResult<String> {
    Ok(load(dot)?.to_dot())
}

/// DOT for a numbered step list, read as a chain.
#[pyfunction]
#[pyo3(signature = (text, goal = ""))]
fn parse_steps(text: &str, goal: &str) -> PyResult<String> {
    Ok(script::parse_steps(goal, text).map_err(value_error)?.to_dot())
}

/// Step labels in canonical linear order.
#[pyfunction]
fn linearize(dot: &str) -> PyResult<Vec<String>> {
    Ok(load(dot)?.linearize().into_iter().map(|s| s.label).collect())
}

#[pyfunction]
fn equivalent(a: &str, b: &str) -> PyResult<bool> {
    Ok(load(a)?.equivalent(&load(b)?))
}

/// Canonical text of an edit command.
#[pyfunction]
fn parse_edit(text: &str) -> PyResult<String> {
    Ok(parse_edit_text(text).map_err(value_error)?.to_string())
}

#[pyfunction]
fn apply(dot: &str, edit: &str) -> PyResult<String> {
    let e = parse_edit_text(edit).map_err(value_error)?;
    Ok(engine::apply(&load(dot)?, &e).map_err(value_error)?.to_dot())
}

#[pyfunction]
fn diff(from_dot: &str, to_dot: &str) -> PyResult<String> {
    Ok(engine::diff(&load(from_dot)?, &load(to_dot)?)
        .map_err(value_error)?
        .to_string())
}

#[pyfunction]
fn exact_match(gold: &str, pred: &str) -> PyResult<u8> {
    let g = parse_edit_text(gold).map_err(value_error)?;
    let p = parse_edit_text(pred).map_err(value_error)?;
    Ok(metrics::exact_match(&g, &p))
}

#[pyfunction]
fn bleu(gold: &str, pred: &str) -> f64 {
    metrics::bleu(gold, pred)
}

#[pyfunction]
fn rouge_l(gold: &str, pred: &str) -> f64 {
    metrics::rouge_l(gold, pred)
}

/// Runs a local corrector and returns the edit, the repaired DOT and a note.
#[pyfunction]
#[pyo3(signature = (dot, feedback = None, corrector = "keyword"))]
fn correct(py: Python<'_>, dot: &str, feedback: Option<&str>, corrector: &str) -> PyResult<Py<PyDict>> {
    let s = load(dot)?;
    let request = match feedback {
        Some(f) if !f.trim().is_empty() => CorrectionRequest::with_user_feedback(s, f),
        _ => CorrectionRequest::without_feedback(s),
    };
    let c = Config::default().corrector(corrector).map_err(value_error)?;
    let result = c.correct(&request).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("edit", result.edit.to_string())?;
    d.set_item("repaired_dot", result.repaired.to_dot())?;
    d.set_item("corrector", result.corrector_name)?;
    d.set_item("note", result.note)?;
    Ok(d.unbind())
}

/// Feedback memory with the hashing embedder, in memory or backed by a
/// JSON-lines file.
#[pyclass(name = "Memory")]
struct PyMemory(scriptmend::memory::Memory);

fn hit_dict<'py>(py: Python<'py>, hit: &LookupResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("id", hit.record.id)?;
    d.set_item("similarity", hit.similarity)?;
    d.set_item("feedback", &hit.record.feedback)?;
    d.set_item("gold_edit", hit.record.gold_edit.as_ref().map(|e| e.to_string()))?;
    d.set_item("source_dot", hit.record.source_script.to_dot())?;
    Ok(d)
}

#[pymethods]
impl PyMemory {
    #[new]
    #[pyo3(signature = (path = None))]
    fn new(path: Option<std::path::PathBuf>) -> PyResult<Self> {
        let embedder = Arc::new(HashingEmbedder::new(HashingEmbedder::DEFAULT_DIMENSION));
        let memory = match path {
            Some(p) => scriptmend::memory::Memory::open(p, embedder).map_err(value_error)?,
            None => scriptmend::memory::Memory::in_memory(embedder),
        };
        Ok(PyMemory(memory))
    }

    #[pyo3(signature = (dot, feedback, gold_edit = None))]
    fn write(&self, dot: &str, feedback: &str, gold_edit: Option<&str>) -> PyResult<u64> {
        let gold = gold_edit.map(parse_edit_text).transpose().map_err(value_error)?;
        self.0.write(&load(dot)?, feedback, gold).map_err(value_error)
    }

    /// Best record at or above `threshold`, or None.
    #[pyo3(signature = (dot, threshold = DEFAULT_THRESHOLD))]
    fn lookup<'py>(&self, py: Python<'py>, dot: &str, threshold: f64) -> PyResult<Option<Bound<'py, PyDict>>> {
        match self.0.lookup(&load(dot)?, threshold).map_err(value_error)? {
            Some(hit) => Ok(Some(hit_dict(py, &hit)?)),
            None => Ok(None),
        }
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pymodule]
fn scriptmend_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_dot, m)?)?;
    m.add_function(wrap_pyfunction!(parse_steps, m)?)?;
    m.add_function(wrap_pyfunction!(linearize, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent, m)?)?;
    m.add_function(wrap_pyfunction!(parse_edit, m)?)?;
    m.add_function(wrap_pyfunction!(apply, m)?)?;
    m.add_function(wrap_pyfunction!(diff, m)?)?;
    m.add_function(wrap_pyfunction!(exact_match, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(correct, m)?)?;
    m.add_class::<PyMemory>()?;
    Ok(())
}
