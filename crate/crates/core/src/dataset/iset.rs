use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::{Captures, Regex};
use serde::{Deserialize, Deserializer, Serialize};

use super::{DatasetError, EvalTuple, Split};
use crate::text::normalize_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Lexical,
    Analogical,
}

/// Replaces a whole-word token sequence with one of several alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    #[serde(rename = "match")]
    pub match_text: String,
    #[serde(deserialize_with = "one_or_many")]
    pub replace: Vec<String>,
    pub kind: PerturbationKind,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerturbationTable {
    pub entries: Vec<Substitution>,
}

impl PerturbationTable {
    pub fn new(entries: Vec<Substitution>) -> Result<Self, DatasetError> {
        let table = PerturbationTable { entries };
        table.validate()?;
        Ok(table)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let table: PerturbationTable =
            serde_json::from_str(text).map_err(|e| DatasetError::InvalidTable(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for e in &self.entries {
            let m = normalize_label(&e.match_text);
            if m.is_empty() || e.replace.is_empty() {
                return Err(DatasetError::InvalidTable(format!("entry `{}` is empty", e.match_text)));
            }
            if let Some(r) = e.replace.iter().find(|r| normalize_label(r) == m || r.trim().is_empty()) {
                return Err(DatasetError::InvalidTable(format!(
                    "entry `{}` maps to `{r}`",
                    e.match_text
                )));
            }
        }
        Ok(())
    }

    fn pattern(&self) -> Option<Regex> {
        if self.entries.is_empty() {
            return None;
        }
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.entries[i].match_text.len()));
        let alternatives: Vec<String> = order
            .iter()
            .map(|&i| {
                let words: Vec<String> = self.entries[i].match_text.split_whitespace().map(regex::escape).collect();
                format!("(?P<e{i}>{})", words.join(r"\s+"))
            })
            .collect();
        Some(Regex::new(&format!(r"(?i)\b(?:{})\b", alternatives.join("|"))).expect("escaped pattern"))
    }
}

fn matched_entry(caps: &Captures<'_>, n: usize) -> usize {
    (0..n).find(|i| caps.name(&format!("e{i}")).is_some()).expect("one alternative matched")
}

fn with_case_of(original: &str, replacement: &str) -> String {
    match (original.chars().next(), replacement.chars().next()) {
        (Some(o), Some(r)) if o.is_uppercase() => r.to_uppercase().chain(replacement.chars().skip(1)).collect(),
        _ => replacement.to_owned(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct IsetReport {
    pub tuples: Vec<EvalTuple>,
    /// Number of sources considered.
    pub candidates: usize,
    /// Sources in which at least one substitution fired.
    pub perturbed: usize,
    /// `(source id, reason)` for twins that failed re-validation.
    pub skipped: Vec<(String, String)>,
}

/// Builds interaction-reuse twins. Each matching substitution is applied to
/// the labels, goal, feedback and gold edit of a source; when an entry has
/// several replacements, the seeded generator picks one per source. Twins
/// get id `{source}-iset`, split `iset` and a link to their source.
pub fn build_iset(sources: &[EvalTuple], table: &PerturbationTable, seed: u64) -> Result<IsetReport, DatasetError> {
    if sources.is_empty() {
        return Err(DatasetError::NoSources);
    }
    table.validate()?;
    let pattern = table.pattern();
    let n = table.entries.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IsetReport {
        candidates: sources.len(),
        ..Default::default()
    };
    for source in sources {
        let texts = source_texts(source);
        let mut choice = vec![None; n];
        if let Some(re) = &pattern {
            for text in &texts {
                for caps in re.captures_iter(text) {
                    let i = matched_entry(&caps, n);
                    if choice[i].is_none() {
                        choice[i] = Some(0);
                    }
                }
            }
            for (i, c) in choice.iter_mut().enumerate() {
                if c.is_some() {
                    *c = Some(rng.random_range(0..table.entries[i].replace.len()));
                }
            }
        }
        if choice.iter().any(Option::is_some) {
            report.perturbed += 1;
        }
        let substitute = |text: &str| -> String {
            match &pattern {
                Some(re) => re
                    .replace_all(text, |caps: &Captures<'_>| {
                        let i = matched_entry(caps, n);
                        let pick = choice[i].unwrap_or(0);
                        with_case_of(&caps[0], &table.entries[i].replace[pick])
                    })
                    .into_owned(),
                None => text.to_owned(),
            }
        };
        match perturb(source, substitute) {
            Ok(twin) => report.tuples.push(twin),
            Err(reason) => report.skipped.push((source.id.clone(), reason)),
        }
    }
    Ok(report)
}

fn source_texts(t: &EvalTuple) -> Vec<String> {
    let mut texts = vec![t.goal.clone()];
    texts.extend(t.script_x.labels().map(str::to_owned));
    texts.extend(t.script_y.labels().map(str::to_owned));
    texts.extend(t.feedbacks.iter().cloned());
    texts.push(t.gold_edit.to_string());
    texts
}

fn perturb(source: &EvalTuple, mut f: impl FnMut(&str) -> String) -> Result<EvalTuple, String> {
    let twin = EvalTuple {
        id: format!("{}-iset", source.id),
        goal: crate::text::collapse_whitespace(&f(&source.goal)),
        script_x: source.script_x.map_text(&mut f).map_err(|e| format!("script_x: {e}"))?,
        feedbacks: source.feedbacks.iter().map(|fb| f(fb)).collect(),
        gold_edit: source.gold_edit.map_text(&mut f),
        script_y: source.script_y.map_text(&mut f).map_err(|e| format!("script_y: {e}"))?,
        error_type: source.error_type,
        split: Split::Iset,
        iset_source_id: Some(source.id.clone()),
    };
    twin.validate()?;
    Ok(twin)
}
