use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use super::{DatasetError, EvalTuple, Split};
use crate::edit::{parse_edit, EditCommand, ErrorType};
use crate::engine::{apply, diff};
use crate::script::{parse_steps, Script};

const ID_KEYS: &[&str] = &["id", "uid", "example_id", "qid"];
const GOAL_KEYS: &[&str] = &["goal", "scenario", "title"];
const X_KEYS: &[&str] = &["script_x_dot", "x_dot", "script_x", "x", "input", "noisy_script", "script"];
const Y_KEYS: &[&str] = &["script_y_dot", "y_dot", "script_y", "y", "output", "corrected_script"];
const FB_KEYS: &[&str] = &["feedbacks", "feedback", "fb"];
const EDIT_KEYS: &[&str] = &["edit", "edit_command", "y_e", "gold_edit"];
const TYPE_KEYS: &[&str] = &["error_type", "type"];

#[derive(Debug, Clone)]
pub struct ImportOptions {
    /// Split for records that carry none.
    pub default_split: Split,
    /// Side file receiving records that cannot be converted.
    pub quarantine_path: Option<PathBuf>,
}

impl Default for ImportOptions {
    fn default() -> Self {
        ImportOptions {
            default_split: Split::Test,
            quarantine_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuarantineEntry {
    pub line: usize,
    pub reason: String,
    pub record: Value,
}

#[derive(Debug, Clone, Default)]
pub struct ImportReport {
    pub tuples: Vec<EvalTuple>,
    /// Ids of records whose x and y are already equal (gold edit `NoOp`).
    pub flagged_noop: Vec<String>,
    pub quarantined: Vec<QuarantineEntry>,
}

/// Reads records in the released layout: JSON lines or a JSON array of
/// objects, with scripts as DOT, numbered step lists or arrays of steps.
/// An explicit edit is parsed when present, otherwise the edit is derived
/// with [`diff`]. Records that cannot be converted are quarantined.
pub fn import_published(path: impl AsRef<Path>, options: &ImportOptions) -> Result<ImportReport, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    let records = read_records(&text)?;
    if !records.is_empty()
        && !records
            .iter()
            .any(|(_, r)| field(r, X_KEYS).is_some() && field(r, FB_KEYS).is_some())
    {
        return Err(DatasetError::UnknownLayout(
            "no record carries both a script and feedback".into(),
        ));
    }
    let mut report = ImportReport::default();
    for (line, record) in records {
        match convert(line, &record, options.default_split) {
            Ok((tuple, flagged)) => {
                if flagged {
                    report.flagged_noop.push(tuple.id.clone());
                }
                report.tuples.push(tuple);
            }
            Err(reason) => report.quarantined.push(QuarantineEntry {
                line,
                reason,
                record: Value::Object(record),
            }),
        }
    }
    if let Some(path) = &options.quarantine_path {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for q in &report.quarantined {
            serde_json::to_writer(&mut out, q).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    Ok(report)
}

fn read_records(text: &str) -> Result<Vec<(usize, Map<String, Value>)>, DatasetError> {
    if text.trim_start().starts_with('[') {
        let values: Vec<Value> =
            serde_json::from_str(text).map_err(|e| DatasetError::UnknownLayout(e.to_string()))?;
        return values
            .into_iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Object(m) => Ok((i + 1, m)),
                _ => Err(DatasetError::UnknownLayout(format!("element {} is not an object", i + 1))),
            })
            .collect();
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(m)) => out.push((i + 1, m)),
            Ok(_) => return Err(DatasetError::UnknownLayout(format!("line {} is not an object", i + 1))),
            Err(e) => return Err(DatasetError::UnknownLayout(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

fn field<'a>(record: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| record.get(*k)).filter(|v| !v.is_null())
}

fn text_field(record: &Map<String, Value>, keys: &[&str]) -> Option<String> {
    match field(record, keys)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn script_from(value: &Value, goal: &str) -> Result<Script, String> {
    let script = match value {
        Value::String(s) if s.trim_start().starts_with("digraph") => Script::from_dot(s).map_err(|e| e.to_string())?,
        Value::String(s) => parse_steps(goal, s).map_err(|e| e.to_string())?,
        Value::Array(items) => {
            let steps: Option<Vec<&str>> = items.iter().map(Value::as_str).collect();
            Script::chain(goal, steps.ok_or("step array must contain strings")?).map_err(|e| e.to_string())?
        }
        _ => return Err("script must be a DOT string, a step list or an array of steps".into()),
    };
    Ok(script.with_goal(goal))
}

fn convert(line: usize, record: &Map<String, Value>, default_split: Split) -> Result<(EvalTuple, bool), String> {
    let id = text_field(record, ID_KEYS).unwrap_or_else(|| format!("import-{line}"));
    let goal = text_field(record, GOAL_KEYS).unwrap_or_default();
    let x = script_from(field(record, X_KEYS).ok_or("missing script x")?, &goal).map_err(|e| format!("script x: {e}"))?;
    let feedbacks: Vec<String> = match field(record, FB_KEYS).ok_or("missing feedback")? {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items.iter().filter_map(Value::as_str).map(str::to_owned).collect(),
        _ => return Err("feedback must be a string or a list of strings".into()),
    };
    let feedbacks: Vec<String> = feedbacks.into_iter().filter(|f| !f.trim().is_empty()).collect();
    if feedbacks.is_empty() {
        return Err("empty feedback".into());
    }
    let explicit = match text_field(record, EDIT_KEYS) {
        Some(text) => Some(parse_edit(&text).map_err(|e| format!("edit: {e}"))?),
        None => None,
    };
    let y = match field(record, Y_KEYS) {
        Some(v) => Some(script_from(v, &goal).map_err(|e| format!("script y: {e}"))?),
        None => None,
    };
    let (gold_edit, script_y) = match (explicit, y) {
        (Some(edit), Some(y)) => {
            let out = apply(&x, &edit).map_err(|e| format!("explicit edit does not apply: {e}"))?;
            if !out.equivalent(&y) {
                return Err("explicit edit does not reproduce script y".into());
            }
            (edit, y)
        }
        (Some(edit), None) => {
            let y = apply(&x, &edit).map_err(|e| format!("explicit edit does not apply: {e}"))?;
            (edit, y)
        }
        (None, Some(y)) => (diff(&x, &y).map_err(|e| e.to_string())?, y),
        (None, None) => return Err("neither an edit nor script y is present".into()),
    };
    let declared = match text_field(record, TYPE_KEYS) {
        Some(t) => Some(t.parse::<ErrorType>()?),
        None => None,
    };
    let error_type = declared
        .or_else(|| ErrorType::for_kind(gold_edit.kind()))
        .ok_or("no error type for a record whose scripts are equal")?;
    let split = match text_field(record, &["split"]) {
        Some(s) => s.parse()?,
        None => default_split,
    };
    let flagged = gold_edit == EditCommand::NoOp;
    let tuple = EvalTuple {
        id,
        goal,
        script_x: x,
        feedbacks,
        gold_edit,
        script_y,
        error_type,
        split,
        iset_source_id: text_field(record, &["iset_source_id"]),
    };
    tuple.validate()?;
    Ok((tuple, flagged))
}
