//! Experiment drivers: corrector evaluation under different feedback
//! conditions, and the stream simulation with a growing memory.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::{CorrectionRequest, Corrector};
use crate::dataset::{attach_distractors, DatasetError, EvalTuple};
use crate::edit::EditCommand;
use crate::memory::{Embedder, HashingEmbedder, Memory, MemoryError};
use crate::metrics::{exact_match, report_from_scores, score_pair, MetricsError, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    TrueFb,
    NoFb,
    DistractorFb,
}

impl std::str::FromStr for FeedbackMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "true_fb" => Ok(FeedbackMode::TrueFb),
            "no_fb" => Ok(FeedbackMode::NoFb),
            "distractor_fb" => Ok(FeedbackMode::DistractorFb),
            other => Err(format!("unknown feedback mode `{other}`")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone)]
pub struct Rq1Options {
    /// Rank of the neighbor whose feedback becomes the distractor.
    pub distractor_k: usize,
    pub embedder: Arc<dyn Embedder>,
}

impl Default for Rq1Options {
    fn default() -> Self {
        Rq1Options {
            distractor_k: 4,
            embedder: Arc::new(HashingEmbedder::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub tuple_id: String,
    pub feedback: Option<String>,
    pub edit: EditCommand,
    pub em: u8,
    pub note: Option<String>,
    /// Infrastructure failure, scored as `NoOp`.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rq1Outcome {
    pub report: MetricsReport,
    pub predictions: Vec<Prediction>,
    pub infra_failures: usize,
}

/// Runs `corrector` over every tuple with true, no, or distractor feedback
/// and scores the predicted edits.
pub fn run_rq1(
    tuples: &[EvalTuple],
    corrector: &dyn Corrector,
    mode: FeedbackMode,
    options: &Rq1Options,
) -> Result<Rq1Outcome, HarnessError> {
    let feedback: Vec<Option<String>> = match mode {
        FeedbackMode::TrueFb => tuples.iter().map(|t| Some(t.feedback().to_owned())).collect(),
        FeedbackMode::NoFb => vec![None; tuples.len()],
        FeedbackMode::DistractorFb => {
            let pairs = attach_distractors(tuples, options.distractor_k, options.embedder.as_ref())?;
            let by_id: HashMap<&str, &str> = pairs.iter().map(|(t, d)| (t.id.as_str(), d.as_str())).collect();
            tuples.iter().map(|t| by_id.get(t.id.as_str()).map(|d| (*d).to_owned())).collect()
        }
    };
    let predictions: Vec<Prediction> = tuples
        .par_iter()
        .zip(feedback.into_par_iter())
        .map(|(t, fb)| {
            let request = match &fb {
                Some(f) => CorrectionRequest::with_user_feedback(t.script_x.clone(), f.clone()),
                None => CorrectionRequest::without_feedback(t.script_x.clone()),
            };
            let (edit, note, error) = match corrector.correct(&request) {
                Ok(r) => (r.edit, r.note, None),
                Err(e) => (EditCommand::NoOp, None, Some(e.to_string())),
            };
            Prediction {
                tuple_id: t.id.clone(),
                em: exact_match(&t.gold_edit, &edit),
                feedback: fb,
                edit,
                note,
                error,
            }
        })
        .collect();
    let report = report_from_scores(
        tuples
            .iter()
            .zip(&predictions)
            .map(|(t, p)| (t.error_type, score_pair(&t.gold_edit, &p.edit))),
    )?;
    Ok(Rq1Outcome {
        report,
        infra_failures: predictions.iter().filter(|p| p.error.is_some()).count(),
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub index: usize,
    pub tuple_id: String,
    pub retrieved_id: Option<u64>,
    pub similarity: Option<f64>,
    pub predicted_edit: EditCommand,
    pub em: u8,
    pub memory_size_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamOptions {
    /// Write each tuple's own feedback and gold edit after scoring it.
    pub write_gold: bool,
    pub threshold: f64,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            write_gold: true,
            threshold: crate::memory::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamOutcome {
    pub events: Vec<StreamEvent>,
    pub report: MetricsReport,
    pub infra_failures: usize,
}

/// Processes tuples in order: look up memory, correct with whatever
/// feedback was retrieved, score, then (optionally) write the tuple's own
/// feedback as the simulated user's response.
pub fn run_stream(
    tuples: &[EvalTuple],
    corrector: &dyn Corrector,
    memory: &Memory,
    options: StreamOptions,
) -> Result<StreamOutcome, HarnessError> {
    let mut events = Vec::with_capacity(tuples.len());
    let mut scores = Vec::with_capacity(tuples.len());
    let mut infra_failures = 0;
    for (index, t) in tuples.iter().enumerate() {
        let hit = memory.lookup(&t.script_x, options.threshold)?;
        let (retrieved_id, similarity) = hit
            .as_ref()
            .map_or((None, None), |h| (Some(h.record.id), Some(h.similarity)));
        let request = match hit {
            Some(h) => CorrectionRequest::from_memory(t.script_x.clone(), h),
            None => CorrectionRequest::without_feedback(t.script_x.clone()),
        };
        let edit = match corrector.correct(&request) {
            Ok(r) => r.edit,
            Err(_) => {
                infra_failures += 1;
                EditCommand::NoOp
            }
        };
        if options.write_gold {
            memory.write(&t.script_x, t.feedback(), Some(t.gold_edit.clone()))?;
        }
        scores.push((t.error_type, score_pair(&t.gold_edit, &edit)));
        events.push(StreamEvent {
            index,
            tuple_id: t.id.clone(),
            retrieved_id,
            similarity,
            em: exact_match(&t.gold_edit, &edit),
            predicted_edit: edit,
            memory_size_after: memory.len(),
        });
    }
    Ok(StreamOutcome {
        events,
        report: report_from_scores(scores)?,
        infra_failures,
    })
}

/// `memory_size,cumulative_correct,running_em`, one row per event.
pub fn emit_curve(events: &[StreamEvent]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["memory_size", "cumulative_correct", "running_em"]).unwrap();
    let mut correct = 0usize;
    for (i, e) in events.iter().enumerate() {
        correct += usize::from(e.em);
        let running = 100.0 * correct as f64 / (i + 1) as f64;
        w.write_record([e.memory_size_after.to_string(), correct.to_string(), running.to_string()])
            .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Shuffles tuples with `seed`, then moves every twin (a tuple with
/// `iset_source_id`) that would precede its source to just after it.
pub fn mix_stream(tuples: &[EvalTuple], seed: u64) -> Vec<EvalTuple> {
    let mut shuffled = tuples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let present: std::collections::HashSet<String> = shuffled.iter().map(|t| t.id.clone()).collect();
    let mut seen = std::collections::HashSet::new();
    let mut waiting: HashMap<String, Vec<EvalTuple>> = HashMap::new();
    let mut out = Vec::with_capacity(shuffled.len());
    for t in shuffled {
        match &t.iset_source_id {
            Some(src) if present.contains(src) && !seen.contains(src) => {
                waiting.entry(src.clone()).or_default().push(t);
            }
            _ => {
                seen.insert(t.id.clone());
                let id = t.id.clone();
                out.push(t);
                if let Some(twins) = waiting.remove(&id) {
                    for twin in twins {
                        seen.insert(twin.id.clone());
                        out.push(twin);
                    }
                }
            }
        }
    }
    out
}
