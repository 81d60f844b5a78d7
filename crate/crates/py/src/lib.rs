//! Python bindings. Structured values cross the boundary as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use scenevote_core::ensemble::{self, VotePolicy};
use scenevote_core::metrics;
use scenevote_core::parsing::{self, CoercionMode, CoercionPolicy};
use scenevote_core::prompt;
use scenevote_core::schema::{self, attribute_registry, EvalLabel, SceneLabel};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

/// Attribute registry as a list of dicts, in registry order.
#[pyfunction]
fn schema_export(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &attribute_registry().export())
}

#[pyfunction]
fn attribute_keys() -> Vec<&'static str> {
    attribute_registry().keys().collect()
}

#[pyfunction]
fn build_prompt() -> PyResult<String> {
    Ok(prompt::build_prompt().map_err(value_err)?.as_str().to_string())
}

#[pyfunction]
fn prompt_sha256() -> PyResult<String> {
    Ok(prompt::build_prompt().map_err(value_err)?.sha256())
}

/// Diagnostics for a raw label dict; empty when the label is complete and in domain.
#[pyfunction]
fn validate_label<'py>(py: Python<'py>, label: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let label: SceneLabel = from_py(label)?;
    to_py(py, &schema::validate_label(&label, &attribute_registry()))
}

#[pyfunction]
fn binarize_label<'py>(py: Python<'py>, label: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let label: SceneLabel = from_py(label)?;
    let eval = schema::binarize_label(&label, &attribute_registry()).map_err(value_err)?;
    to_py(py, &eval)
}

/// The first JSON object in `text`, or None.
#[pyfunction]
fn extract_json<'py>(py: Python<'py>, text: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
    match parsing::extract_json(text) {
        Ok(e) => Ok(Some(to_py(py, &e.object)?)),
        Err(_) => Ok(None),
    }
}

#[pyfunction]
#[pyo3(signature = (text, strict = false, string_integers = true))]
fn parse_text<'py>(py: Python<'py>, text: &str, strict: bool, string_integers: bool) -> PyResult<Bound<'py, PyAny>> {
    let policy = CoercionPolicy {
        mode: if strict { CoercionMode::Strict } else { CoercionMode::CoerceZero },
        accept_string_integers: string_integers,
    };
    let parsed = parsing::parse_text(text, &attribute_registry(), policy);
    to_py(
        py,
        &json!({
            "label": parsed.label,
            "diagnostics": parsed.diagnostics,
            "fatal": parsed.fatal,
        }),
    )
}

#[pyfunction]
fn confusion_matrix<'py>(py: Python<'py>, truths: Vec<u8>, preds: Vec<u8>, domain: Vec<u8>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::confusion_matrix(&truths, &preds, &domain).map_err(value_err)?)
}

/// Support-weighted precision, recall and F1 for one attribute.
#[pyfunction]
fn weighted_prf<'py>(py: Python<'py>, truths: Vec<u8>, preds: Vec<u8>, domain: Vec<u8>) -> PyResult<Bound<'py, PyAny>> {
    let m = metrics::confusion_matrix(&truths, &preds, &domain).map_err(value_err)?;
    to_py(py, &metrics::weighted_prf(&m).map_err(value_err)?)
}

/// Scores aligned `[(frame_id, label_dict)]` lists. Labels are binarized first.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, truths: &Bound<'py, PyAny>, preds: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let schema = attribute_registry();
    let binarize = |rows: Vec<(String, SceneLabel)>| -> PyResult<Vec<(String, EvalLabel)>> {
        rows.into_iter()
            .map(|(id, l)| {
                let eval = schema::binarize_label(&l, &schema).map_err(|e| value_err(format!("{id}: {e}")))?;
                Ok((id, eval))
            })
            .collect()
    };
    let t = binarize(from_py(truths)?)?;
    let p = binarize(from_py(preds)?)?;
    to_py(py, &metrics::per_attribute_metrics(&t, &p, &schema).map_err(value_err)?)
}

/// Plurality vote over `[(provider, value)]`; ties follow `priority`.
#[pyfunction]
fn vote(votes: Vec<(String, u8)>, priority: Vec<String>) -> PyResult<u8> {
    let policy = VotePolicy::new(priority).map_err(value_err)?;
    ensemble::vote(votes.iter().map(|(p, v)| (p.as_str(), *v)), &policy).map_err(value_err)
}

/// Member lists of every ensemble of at least `min_size` providers.
#[pyfunction]
#[pyo3(signature = (providers, min_size = ensemble::MIN_ENSEMBLE_SIZE))]
fn enumerate_ensembles(providers: Vec<String>, min_size: usize) -> PyResult<Vec<Vec<String>>> {
    let specs = ensemble::enumerate_ensembles(&providers, min_size).map_err(value_err)?;
    Ok(specs.into_iter().map(|s| s.members).collect())
}

#[pymodule]
fn scenevote(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PROMPT_SHA256", prompt::PROMPT_SHA256)?;
    m.add("MIN_ENSEMBLE_SIZE", ensemble::MIN_ENSEMBLE_SIZE)?;
    m.add_function(wrap_pyfunction!(schema_export, m)?)?;
    m.add_function(wrap_pyfunction!(attribute_keys, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(prompt_sha256, m)?)?;
    m.add_function(wrap_pyfunction!(validate_label, m)?)?;
    m.add_function(wrap_pyfunction!(binarize_label, m)?)?;
    m.add_function(wrap_pyfunction!(extract_json, m)?)?;
    m.add_function(wrap_pyfunction!(parse_text, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_prf, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(vote, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_ensembles, m)?)?;
    Ok(())
}
