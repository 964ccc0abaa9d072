//! Scoring of predicted edits against gold edits.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edit::{EditCommand, ErrorType};
use crate::engine::apply;
use crate::script::Script;
use crate::text::normalize_label;

/// Lowercased canonical edit string with collapsed whitespace.
pub fn normalized_edit_text(edit: &EditCommand) -> String {
    normalize_label(&edit.to_string())
}

pub fn exact_match(gold: &EditCommand, pred: &EditCommand) -> u8 {
    u8::from(normalized_edit_text(gold) == normalized_edit_text(pred))
}

/// `(em_loc, em_type)`.
pub fn component_match(gold: &EditCommand, pred: &EditCommand) -> (u8, u8) {
    let (g, p) = (gold.decompose(), pred.decompose());
    (
        u8::from(normalize_label(&g.loc_text) == normalize_label(&p.loc_text)),
        u8::from(g.type_text == p.type_text),
    )
}

fn tokens(text: &str) -> Vec<String> {
    normalize_label(text).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU-4 over whitespace tokens of the normalized strings.
///
/// Clipped n-gram precisions for n = 1..4 are combined by geometric mean. A
/// zero precision for n >= 2 is replaced by (m + 1) / (t + 1); a zero unigram
/// precision gives 0. The brevity penalty is exp(1 - r/c) when c < r.
pub fn bleu(gold: &str, pred: &str) -> f64 {
    let (reference, candidate) = (tokens(gold), tokens(pred));
    let (r, c) = (reference.len(), candidate.len());
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(&candidate, n);
        let refs = ngram_counts(&reference, n);
        let total = c.saturating_sub(n - 1);
        let matched: usize = cand
            .iter()
            .map(|(gram, count)| (*count).min(refs.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += precision.ln();
    }
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (log_sum / 4.0).exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence of normalized tokens.
pub fn rouge_l(gold: &str, pred: &str) -> f64 {
    let (reference, candidate) = (tokens(gold), tokens(pred));
    let lcs = lcs_len(&reference, &candidate);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub gold: EditCommand,
    pub pred: EditCommand,
    pub error_type: ErrorType,
}

/// Per-pair scores, each 0 or 1 except the soft metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub em: u8,
    pub em_loc: u8,
    pub em_type: u8,
    pub bleu: f64,
    pub rouge_l: f64,
}

pub fn score_pair(gold: &EditCommand, pred: &EditCommand) -> PairScore {
    let (em_loc, em_type) = component_match(gold, pred);
    let (g, p) = (gold.to_string(), pred.to_string());
    PairScore {
        em: exact_match(gold, pred),
        em_loc,
        em_type,
        bleu: bleu(&g, &p),
        rouge_l: rouge_l(&g, &p),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeBreakdown {
    pub em: f64,
    pub em_type: f64,
    pub n: usize,
}

/// Corpus averages, as percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub em: f64,
    pub em_loc: f64,
    pub em_type: f64,
    pub bleu: f64,
    pub rouge_l: f64,
    pub n: usize,
    pub by_error_type: BTreeMap<String, TypeBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
}

pub fn score_corpus(pairs: &[ScoredPair]) -> Result<MetricsReport, MetricsError> {
    let scores: Vec<PairScore> = pairs.par_iter().map(|p| score_pair(&p.gold, &p.pred)).collect();
    report_from_scores(pairs.iter().map(|p| p.error_type).zip(scores))
}

/// Aggregates already computed pair scores.
pub fn report_from_scores(
    scores: impl IntoIterator<Item = (ErrorType, PairScore)>,
) -> Result<MetricsReport, MetricsError> {
    let mut n = 0;
    let (mut em, mut em_loc, mut em_type, mut b, mut r) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut by_type: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for (error_type, s) in scores {
        n += 1;
        em += f64::from(s.em);
        em_loc += f64::from(s.em_loc);
        em_type += f64::from(s.em_type);
        b += s.bleu;
        r += s.rouge_l;
        let entry = by_type.entry(error_type.as_str().to_owned()).or_default();
        entry.0 += f64::from(s.em);
        entry.1 += f64::from(s.em_type);
        entry.2 += 1;
    }
    if n == 0 {
        return Err(MetricsError::EmptyCorpus);
    }
    let pct = |total: f64, count: usize| 100.0 * total / count as f64;
    Ok(MetricsReport {
        em: pct(em, n),
        em_loc: pct(em_loc, n),
        em_type: pct(em_type, n),
        bleu: pct(b, n),
        rouge_l: pct(r, n),
        n,
        by_error_type: by_type
            .into_iter()
            .map(|(k, (e, t, c))| {
                (
                    k,
                    TypeBreakdown {
                        em: pct(e, c),
                        em_type: pct(t, c),
                        n: c,
                    },
                )
            })
            .collect(),
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `error_type,em,em_type,n` rows, one per error type.
    pub fn by_error_type_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["error_type", "em", "em_type", "n"]).unwrap();
        for (k, t) in &self.by_error_type {
            w.write_record([k.clone(), t.em.to_string(), t.em_type.to_string(), t.n.to_string()])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Predictions made for one script under several feedback paraphrases.
#[derive(Debug, Clone)]
pub struct ConsistencyGroup {
    pub script: Script,
    pub predictions: Vec<EditCommand>,
}

/// Fraction of groups whose predictions all yield equivalent repaired scripts.
/// A prediction that does not apply makes its group inconsistent. Groups with
/// fewer than two predictions are ignored; `None` if no group qualifies.
pub fn consistency(groups: &[ConsistencyGroup]) -> Option<f64> {
    let eligible: Vec<&ConsistencyGroup> = groups.iter().filter(|g| g.predictions.len() >= 2).collect();
    if eligible.is_empty() {
        return None;
    }
    let consistent = eligible
        .iter()
        .filter(|g| {
            let repaired: Option<Vec<Script>> = g.predictions.iter().map(|e| apply(&g.script, e).ok()).collect();
            repaired.is_some_and(|r| r.windows(2).all(|w| w[0].equivalent(&w[1])))
        })
        .count();
    Some(consistent as f64 / eligible.len() as f64)
}
