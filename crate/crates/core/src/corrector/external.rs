use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CorrectionRequest, Corrector, CorrectorError, Proposal};
use crate::edit::parse_edit;

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalConfig {
    /// Base URL; requests go to `{endpoint}/correct`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after a failed request.
    pub retries: u32,
    pub max_in_flight: usize,
}

impl ExternalConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        ExternalConfig {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            retries: 2,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    script_dot: String,
    feedback: Option<&'a str>,
}

#[derive(Deserialize)]
struct WireResponse {
    edit: String,
}

/// Client for a learned corrector behind
/// `POST /correct {"script_dot", "feedback"} -> {"edit"}`.
pub struct ExternalModelCorrector {
    config: ExternalConfig,
    url: String,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

impl ExternalModelCorrector {
    pub fn new(config: ExternalConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        ExternalModelCorrector {
            url: format!("{}/correct", config.endpoint.trim_end_matches('/')),
            config,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
        }
    }

    pub fn config(&self) -> &ExternalConfig {
        &self.config
    }

    fn acquire(&self) {
        let limit = self.config.max_in_flight.max(1);
        let mut n = self.in_flight.lock().unwrap();
        while *n >= limit {
            n = self.slot_freed.wait(n).unwrap();
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().unwrap() -= 1;
        self.slot_freed.notify_one();
    }

    fn send_once(&self, body: &WireRequest<'_>) -> Result<String, CorrectorError> {
        let mut response = self.agent.post(&self.url).send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => CorrectorError::Timeout { attempts: 1 },
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
                CorrectorError::Timeout { attempts: 1 }
            }
            other => CorrectorError::Unreachable(other.to_string()),
        })?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(CorrectorError::Status(status));
        }
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| CorrectorError::Unreachable(e.to_string()))
    }

    fn call(&self, body: &WireRequest<'_>) -> Result<String, CorrectorError> {
        let attempts = self.config.retries + 1;
        let mut last = None;
        for _ in 0..attempts {
            self.acquire();
            let outcome = self.send_once(body);
            self.release();
            match outcome {
                Ok(text) => return Ok(text),
                Err(CorrectorError::Status(code)) if code < 500 => return Err(CorrectorError::Status(code)),
                Err(e) => last = Some(e),
            }
        }
        Err(match last {
            Some(CorrectorError::Timeout { .. }) => CorrectorError::Timeout { attempts },
            Some(e) => e,
            None => CorrectorError::Unreachable("no attempt made".into()),
        })
    }
}

impl Corrector for ExternalModelCorrector {
    fn name(&self) -> &str {
        "external"
    }

    fn propose(&self, request: &CorrectionRequest) -> Result<Proposal, CorrectorError> {
        let body = WireRequest {
            script_dot: request.script().to_dot(),
            feedback: request.feedback(),
        };
        let raw = self.call(&body)?;
        let text = serde_json::from_str::<WireResponse>(&raw)
            .map(|r| r.edit)
            .unwrap_or_else(|_| raw.clone());
        Ok(match parse_edit(&text) {
            Ok(edit) => Proposal {
                raw_model_text: Some(text),
                ..Proposal::edit(edit)
            },
            Err(e) => Proposal {
                raw_model_text: Some(text),
                ..Proposal::noop(format!("model output is not an edit: {e}"))
            },
        })
    }
}
