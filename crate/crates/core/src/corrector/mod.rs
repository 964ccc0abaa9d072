//! Correctors turn a script plus feedback into a single edit.

mod external;
mod keyword;
mod retrieval;

pub use external::{ExternalConfig, ExternalModelCorrector};
pub use keyword::KeywordCorrector;
pub use retrieval::RetrievalCorrector;

use serde::{Deserialize, Serialize};

use crate::edit::EditCommand;
use crate::engine::apply;
use crate::memory::LookupResult;
use crate::script::Script;

pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    User,
    Memory,
    None,
}

/// Input to a corrector. The constructors keep `feedback`, `source` and
/// `retrieved` consistent.
#[derive(Debug, Clone)]
pub struct CorrectionRequest {
    script: Script,
    feedback: Option<String>,
    source: FeedbackSource,
    retrieved: Option<LookupResult>,
}

impl CorrectionRequest {
    pub fn with_user_feedback(script: Script, feedback: impl Into<String>) -> Self {
        CorrectionRequest {
            script,
            feedback: Some(feedback.into()),
            source: FeedbackSource::User,
            retrieved: None,
        }
    }

    pub fn from_memory(script: Script, hit: LookupResult) -> Self {
        CorrectionRequest {
            script,
            feedback: Some(hit.record.feedback.clone()),
            source: FeedbackSource::Memory,
            retrieved: Some(hit),
        }
    }

    pub fn without_feedback(script: Script) -> Self {
        CorrectionRequest {
            script,
            feedback: None,
            source: FeedbackSource::None,
            retrieved: None,
        }
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    pub fn feedback(&self) -> Option<&str> {
        self.feedback.as_deref()
    }

    pub fn source(&self) -> FeedbackSource {
        self.source
    }

    pub fn retrieved(&self) -> Option<&LookupResult> {
        self.retrieved.as_ref()
    }
}

/// What a corrector proposes before the applicability check.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Proposal {
    pub edit: EditCommand,
    pub raw_model_text: Option<String>,
    pub note: Option<String>,
}

impl Proposal {
    pub fn edit(edit: EditCommand) -> Self {
        Proposal {
            edit,
            ..Default::default()
        }
    }

    pub fn noop(reason: impl Into<String>) -> Self {
        Proposal {
            note: Some(reason.into()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionResult {
    pub edit: EditCommand,
    pub repaired: Script,
    pub corrector_name: String,
    pub raw_model_text: Option<String>,
    /// Why the edit is `NoOp`, when it is.
    pub note: Option<String>,
    /// A proposed edit that failed to apply and was replaced by `NoOp`.
    pub rejected_edit: Option<EditCommand>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorrectorError {
    #[error("corrector endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("corrector endpoint timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("corrector endpoint answered HTTP {0}")]
    Status(u16),
}

pub trait Corrector: Send + Sync {
    fn name(&self) -> &str;

    fn propose(&self, request: &CorrectionRequest) -> Result<Proposal, CorrectorError>;

    /// Proposes an edit and applies it. An edit that does not apply is
    /// replaced by `NoOp` and kept in `rejected_edit`.
    fn correct(&self, request: &CorrectionRequest) -> Result<CorrectionResult, CorrectorError> {
        let proposal = self.propose(request)?;
        let script = request.script();
        let (edit, repaired, note, rejected_edit) = match apply(script, &proposal.edit) {
            Ok(repaired) => (proposal.edit, repaired, proposal.note, None),
            Err(e) => (
                EditCommand::NoOp,
                script.clone(),
                Some(format!("proposed edit rejected: {e}")),
                Some(proposal.edit),
            ),
        };
        Ok(CorrectionResult {
            edit,
            repaired,
            corrector_name: self.name().to_owned(),
            raw_model_text: proposal.raw_model_text,
            note,
            rejected_edit,
        })
    }
}

/// Always proposes `NoOp`. The no-feedback baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoFeedbackCorrector;

impl Corrector for NoFeedbackCorrector {
    fn name(&self) -> &str {
        "noop"
    }

    fn propose(&self, _request: &CorrectionRequest) -> Result<Proposal, CorrectorError> {
        Ok(Proposal::noop("baseline ignores feedback"))
    }
}
