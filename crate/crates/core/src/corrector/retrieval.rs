use super::{CorrectionRequest, Corrector, CorrectorError, Proposal, DEFAULT_JACCARD_THRESHOLD};
use crate::script::{NodeRef, Script};
use crate::text::token_jaccard;

/// Reuses the gold edit stored with a retrieved memory record, re-targeting
/// each location onto the most similar step of the query script.
#[derive(Debug, Clone)]
pub struct RetrievalCorrector {
    pub threshold: f64,
}

impl Default for RetrievalCorrector {
    fn default() -> Self {
        RetrievalCorrector {
            threshold: DEFAULT_JACCARD_THRESHOLD,
        }
    }
}

impl RetrievalCorrector {
    /// The label in `script` with the highest token Jaccard similarity to
    /// `label`, if it reaches the threshold. Later steps win ties.
    pub fn retarget(&self, script: &Script, label: &str) -> Option<String> {
        let mut best: Option<(f64, &str)> = None;
        for id in script.topological_order() {
            let candidate = script.label(*id);
            let score = token_jaccard(label, candidate);
            if best.is_none_or(|(s, _)| score >= s) {
                best = Some((score, candidate));
            }
        }
        best.filter(|(s, _)| *s >= self.threshold).map(|(_, l)| l.to_owned())
    }
}

impl Corrector for RetrievalCorrector {
    fn name(&self) -> &str {
        "retrieval"
    }

    fn propose(&self, request: &CorrectionRequest) -> Result<Proposal, CorrectorError> {
        let Some(hit) = request.retrieved() else {
            return Ok(Proposal::noop("no memory record retrieved"));
        };
        let Some(stored) = &hit.record.gold_edit else {
            return Ok(Proposal::noop(format!("memory record {} has no stored edit", hit.record.id)));
        };
        let script = request.script();
        let mut missing = None;
        let edit = stored.map_locations(|r| match self.retarget(script, &r.label) {
            Some(label) => NodeRef {
                label,
                rule: r.rule,
            },
            None => {
                missing.get_or_insert_with(|| r.label.clone());
                r.clone()
            }
        });
        if let Some(label) = missing {
            return Ok(Proposal::noop(format!("no step similar to `{label}`")));
        }
        if edit.validate().is_err() {
            return Ok(Proposal::noop("both locations map to the same step"));
        }
        Ok(Proposal {
            note: (edit != *stored).then(|| format!("re-targeted from `{stored}`")),
            ..Proposal::edit(edit)
        })
    }
}
