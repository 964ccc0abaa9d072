//! Feedback tuples: loading, validation, import of the released layout,
//! perturbation into an interaction-reuse set, and distractor pairing.

mod import;
mod iset;
pub mod synthetic;

pub use import::{import_published, ImportOptions, ImportReport, QuarantineEntry};
pub use iset::{build_iset, IsetReport, PerturbationKind, PerturbationTable, Substitution};

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::edit::{EditCommand, ErrorType};
use crate::engine::apply;
use crate::memory::{cosine, Embedder, EmbedError};
use crate::script::{Script, ScriptError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Iset,
    IsetSource,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Iset => "iset",
            Split::IsetSource => "iset_source",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "dev" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "iset" => Ok(Split::Iset),
            "iset_source" => Ok(Split::IsetSource),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// One `(x, fb, y, y^e)` record.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTuple {
    pub id: String,
    pub goal: String,
    pub script_x: Script,
    pub feedbacks: Vec<String>,
    pub gold_edit: EditCommand,
    pub script_y: Script,
    pub error_type: ErrorType,
    pub split: Split,
    pub iset_source_id: Option<String>,
}

impl EvalTuple {
    /// The first feedback string.
    pub fn feedback(&self) -> &str {
        &self.feedbacks[0]
    }

    /// Checks the tuple invariants: feedback present, error type consistent
    /// with the edit kind, and the gold edit reproducing `script_y`.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.feedbacks.is_empty() || self.feedbacks.iter().any(|f| f.trim().is_empty()) {
            return Err("feedbacks must be a non-empty list of non-empty strings".into());
        }
        if let Some(expected) = ErrorType::for_kind(self.gold_edit.kind()) {
            if expected != self.error_type {
                return Err(format!(
                    "error_type `{}` does not match edit kind `{}` (expected `{}`)",
                    self.error_type.as_str(),
                    self.gold_edit.kind().phrase(),
                    expected.as_str()
                ));
            }
        }
        let repaired = apply(&self.script_x, &self.gold_edit).map_err(|e| format!("gold edit does not apply: {e}"))?;
        if !repaired.equivalent(&self.script_y) {
            return Err("gold edit does not reproduce script_y".into());
        }
        Ok(())
    }
}

/// The JSON-lines wire form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TupleLine {
    id: String,
    goal: String,
    script_x_dot: String,
    feedbacks: Vec<String>,
    edit: String,
    script_y_dot: String,
    error_type: ErrorType,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    iset_source_id: Option<String>,
}

impl From<&EvalTuple> for TupleLine {
    fn from(t: &EvalTuple) -> Self {
        TupleLine {
            id: t.id.clone(),
            goal: t.goal.clone(),
            script_x_dot: t.script_x.to_dot(),
            feedbacks: t.feedbacks.clone(),
            edit: t.gold_edit.to_string(),
            script_y_dot: t.script_y.to_dot(),
            error_type: t.error_type,
            split: t.split,
            iset_source_id: t.iset_source_id.clone(),
        }
    }
}

impl TryFrom<TupleLine> for EvalTuple {
    type Error = String;

    fn try_from(line: TupleLine) -> Result<Self, String> {
        let parse = |field: &str, dot: &str| -> Result<Script, String> {
            Script::from_dot(dot)
                .map(|s| s.with_goal(&line.goal))
                .map_err(|e| format!("{field}: {e}"))
        };
        Ok(EvalTuple {
            script_x: parse("script_x_dot", &line.script_x_dot)?,
            script_y: parse("script_y_dot", &line.script_y_dot)?,
            gold_edit: crate::edit::parse_edit(&line.edit).map_err(|e| format!("edit: {e}"))?,
            id: line.id,
            goal: line.goal,
            feedbacks: line.feedbacks,
            error_type: line.error_type,
            split: line.split,
            iset_source_id: line.iset_source_id,
        })
    }
}

pub fn to_jsonl_line(tuple: &EvalTuple) -> String {
    serde_json::to_string(&TupleLine::from(tuple)).expect("tuple serializes")
}

pub fn to_jsonl(tuples: &[EvalTuple]) -> String {
    tuples.iter().map(|t| to_jsonl_line(t) + "\n").collect()
}

pub fn save(path: impl AsRef<Path>, tuples: &[EvalTuple]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(to_jsonl(tuples).as_bytes())?;
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Abort on the first invalid line.
    #[default]
    Strict,
    /// Skip invalid lines and report them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub tuples: Vec<EvalTuple>,
    pub rejected: Vec<Diagnostic>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(Diagnostic),
    #[error("unrecognized dataset layout: {0}")]
    UnknownLayout(String),
    #[error("need at least {needed} tuples, got {got}")]
    TooFewTuples { needed: usize, got: usize },
    #[error("no tuples to perturb")]
    NoSources,
    #[error("invalid perturbation table: {0}")]
    InvalidTable(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

pub fn load(path: impl AsRef<Path>, mode: LoadMode) -> Result<LoadReport, DatasetError> {
    let file = std::fs::File::open(path)?;
    load_from_reader(BufReader::new(file), mode)
}

pub fn load_str(text: &str, mode: LoadMode) -> Result<LoadReport, DatasetError> {
    load_from_reader(text.as_bytes(), mode)
}

fn load_from_reader(reader: impl BufRead, mode: LoadMode) -> Result<LoadReport, DatasetError> {
    let mut report = LoadReport::default();
    let mut ids = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = parse_line(&line).and_then(|t| {
            if ids.contains(&t.id) {
                Err((Some(t.id.clone()), format!("duplicate id `{}`", t.id)))
            } else {
                Ok(t)
            }
        });
        match outcome {
            Ok(t) => {
                ids.insert(t.id.clone());
                report.tuples.push(t);
            }
            Err((id, message)) => {
                let d = Diagnostic { line: i + 1, id, message };
                match mode {
                    LoadMode::Strict => return Err(DatasetError::Invalid(d)),
                    LoadMode::Lenient => report.rejected.push(d),
                }
            }
        }
    }
    Ok(report)
}

fn parse_line(line: &str) -> Result<EvalTuple, (Option<String>, String)> {
    let wire: TupleLine = serde_json::from_str(line).map_err(|e| (None, format!("schema: {e}")))?;
    let id = Some(wire.id.clone());
    let tuple = EvalTuple::try_from(wire).map_err(|e| (id.clone(), e))?;
    tuple.validate().map_err(|e| (id, e))?;
    Ok(tuple)
}

/// Pairs each tuple with the first feedback of its `k`-th most similar other
/// tuple by script embedding (k = 1 is the nearest). Candidates whose
/// feedback equals the tuple's own are passed over.
pub fn attach_distractors(
    tuples: &[EvalTuple],
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<(EvalTuple, String)>, DatasetError> {
    let k = k.max(1);
    if tuples.len() < k + 1 {
        return Err(DatasetError::TooFewTuples {
            needed: k + 1,
            got: tuples.len(),
        });
    }
    let vectors = tuples
        .iter()
        .map(|t| embedder.embed(&t.script_x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(tuples.len());
    for (i, t) in tuples.iter().enumerate() {
        let own = crate::text::normalize_label(t.feedback());
        let mut ranked: Vec<(usize, f64)> = (0..tuples.len())
            .filter(|&j| j != i)
            .map(|j| (j, cosine(&vectors[i], &vectors[j])))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let candidates: Vec<&str> = ranked
            .iter()
            .map(|(j, _)| tuples[*j].feedback())
            .filter(|f| crate::text::normalize_label(f) != own)
            .collect();
        let Some(pick) = candidates.get(k - 1).or(candidates.last()) else {
            continue;
        };
        out.push((t.clone(), (*pick).to_owned()));
    }
    Ok(out)
}

/// Ids that appear in more than one split.
pub fn overlapping_ids(tuples: &[EvalTuple]) -> Vec<String> {
    let mut seen: std::collections::BTreeMap<&str, Split> = std::collections::BTreeMap::new();
    let mut out = BTreeSet::new();
    for t in tuples {
        if let Some(prev) = seen.insert(&t.id, t.split) {
            if prev != t.split {
                out.insert(t.id.clone());
            }
        }
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(id: &str) -> EvalTuple {
        let x = Script::chain("make tea", ["boil water", "dance", "pour water"]).unwrap();
        let y = Script::chain("make tea", ["boil water", "pour water"]).unwrap();
        EvalTuple {
            id: id.into(),
            goal: "make tea".into(),
            script_x: x,
            feedbacks: vec!["you don't dance to make tea".into()],
            gold_edit: EditCommand::remove("dance"),
            script_y: y,
            error_type: ErrorType::WrongStep,
            split: Split::Test,
            iset_source_id: None,
        }
    }

    #[test]
    fn round_trip_through_jsonl() {
        let tuples = vec![tuple("a"), tuple("b"), tuple("c")];
        let loaded = load_str(&to_jsonl(&tuples), LoadMode::Strict).unwrap();
        assert_eq!(loaded.tuples, tuples);
    }

    #[test]
    fn rejects_edit_that_does_not_reproduce_y() {
        let mut bad = tuple("bad");
        bad.gold_edit = EditCommand::remove("boil water");
        let text = format!("{}\n{}\n", to_jsonl_line(&tuple("ok")), to_jsonl_line(&bad));
        let err = load_str(&text, LoadMode::Strict).unwrap_err();
        assert!(matches!(err, DatasetError::Invalid(Diagnostic { line: 2, .. })), "{err}");
        let report = load_str(&text, LoadMode::Lenient).unwrap();
        assert_eq!(report.tuples.len(), 1);
        assert_eq!(report.rejected[0].id.as_deref(), Some("bad"));
        assert!(report.rejected[0].message.contains("does not reproduce"));
    }

    #[test]
    fn rejects_mismatched_error_type_and_duplicates() {
        let mut bad = tuple("x");
        bad.error_type = ErrorType::MissingStep;
        assert!(bad.validate().unwrap_err().contains("does not match"));
        let text = to_jsonl(&[tuple("a"), tuple("a")]);
        let report = load_str(&text, LoadMode::Lenient).unwrap();
        assert_eq!(report.rejected[0].message, "duplicate id `a`");
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let report = load_str("\n{\"id\": 1}\n", LoadMode::Lenient).unwrap();
        assert_eq!(report.rejected[0].line, 2);
        assert!(report.rejected[0].message.starts_with("schema"));
    }

    #[test]
    fn split_names() {
        assert_eq!("validation".parse::<Split>(), Ok(Split::Val));
        assert_eq!(Split::IsetSource.to_string(), "iset_source");
    }
}
