//! Flat key-value configuration in TOML. Every key may be overridden by an
//! environment variable `SCRIPTMEND_<KEY>` (upper case).

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corrector::{
    Corrector, ExternalConfig, ExternalModelCorrector, KeywordCorrector, NoFeedbackCorrector, RetrievalCorrector,
};
use crate::memory::{Embedder, HashingEmbedder, HttpEmbedder, Memory, MemoryError};

pub const ENV_PREFIX: &str = "SCRIPTMEND_";

pub const CORRECTORS: [&str; 4] = ["noop", "keyword", "retrieval", "external"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// JSON-lines file backing the feedback memory.
    pub memory_path: PathBuf,
    /// Minimum cosine similarity for a memory hit.
    pub threshold: f64,
    /// `hashing` or `http`.
    pub embedding_backend: String,
    pub embedding_dim: usize,
    pub embedding_url: Option<String>,
    pub embedding_timeout_ms: u64,
    /// One of `noop`, `keyword`, `retrieval`, `external`.
    pub default_corrector: String,
    pub corrector_url: Option<String>,
    pub corrector_timeout_ms: u64,
    pub corrector_retries: u32,
    pub corrector_max_in_flight: usize,
    /// Step-matching threshold of the keyword and retrieval correctors.
    pub jaccard_threshold: f64,
    pub listen: String,
    /// Permissive CORS headers for a browser client on another origin.
    pub cors: bool,
    pub distractor_k: usize,
    /// Tuples served by `GET /dataset`; the bundled corpus when unset.
    pub dataset_path: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            memory_path: PathBuf::from("memory.jsonl"),
            threshold: crate::memory::DEFAULT_THRESHOLD,
            embedding_backend: "hashing".into(),
            embedding_dim: HashingEmbedder::DEFAULT_DIMENSION,
            embedding_url: None,
            embedding_timeout_ms: 10_000,
            default_corrector: "keyword".into(),
            corrector_url: None,
            corrector_timeout_ms: 30_000,
            corrector_retries: 2,
            corrector_max_in_flight: 4,
            jaccard_threshold: crate::corrector::DEFAULT_JACCARD_THRESHOLD,
            listen: "127.0.0.1:8080".into(),
            cors: false,
            distractor_k: 4,
            dataset_path: None,
        }
    }
}

const STRING_KEYS: &[&str] = &[
    "memory_path",
    "embedding_backend",
    "embedding_url",
    "default_corrector",
    "corrector_url",
    "listen",
    "dataset_path",
];

const KEYS: &[&str] = &[
    "memory_path",
    "threshold",
    "embedding_backend",
    "embedding_dim",
    "embedding_url",
    "embedding_timeout_ms",
    "default_corrector",
    "corrector_url",
    "corrector_timeout_ms",
    "corrector_retries",
    "corrector_max_in_flight",
    "jaccard_threshold",
    "listen",
    "cors",
    "distractor_k",
    "dataset_path",
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown corrector `{0}` (expected noop, keyword, retrieval or external)")]
    UnknownCorrector(String),
    #[error("`{0}` must be set")]
    Missing(&'static str),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl Config {
    /// Reads `path` (if any), then applies overrides from the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_sources(&text, std::env::vars())
    }

    /// `text` is TOML; `env` yields `(name, value)` pairs, of which only
    /// `SCRIPTMEND_<KEY>` for known keys are used.
    pub fn from_sources(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Config, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        for (name, raw) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX).map(str::to_ascii_lowercase) else {
                continue;
            };
            if !KEYS.contains(&key.as_str()) {
                continue;
            }
            let value = if STRING_KEYS.contains(&key.as_str()) {
                toml::Value::String(raw)
            } else {
                let parsed: toml::Table = format!("v = {raw}")
                    .parse()
                    .map_err(|_| ConfigError::Invalid(format!("{name}: cannot parse `{raw}`")))?;
                parsed["v"].clone()
            };
            table.insert(key, value);
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::Invalid(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.jaccard_threshold) {
            return Err(ConfigError::Invalid(format!(
                "jaccard_threshold {} is outside [0, 1]",
                self.jaccard_threshold
            )));
        }
        if self.embedding_dim == 0 {
            return Err(ConfigError::Invalid("embedding_dim must be positive".into()));
        }
        match self.embedding_backend.as_str() {
            "hashing" => {}
            "http" if self.embedding_url.is_none() => return Err(ConfigError::Missing("embedding_url")),
            "http" => {}
            other => return Err(ConfigError::Invalid(format!("unknown embedding_backend `{other}`"))),
        }
        if !CORRECTORS.contains(&self.default_corrector.as_str()) {
            return Err(ConfigError::UnknownCorrector(self.default_corrector.clone()));
        }
        if self.corrector_max_in_flight == 0 {
            return Err(ConfigError::Invalid("corrector_max_in_flight must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn embedder(&self) -> Arc<dyn Embedder> {
        match (self.embedding_backend.as_str(), &self.embedding_url) {
            ("http", Some(url)) => Arc::new(HttpEmbedder::new(
                url,
                self.embedding_dim,
                Duration::from_millis(self.embedding_timeout_ms),
            )),
            _ => Arc::new(HashingEmbedder::new(self.embedding_dim)),
        }
    }

    pub fn open_memory(&self) -> Result<Memory, ConfigError> {
        Ok(Memory::open(&self.memory_path, self.embedder())?)
    }

    pub fn corrector(&self, name: &str) -> Result<Box<dyn Corrector>, ConfigError> {
        Ok(match name {
            "noop" => Box::new(NoFeedbackCorrector),
            "keyword" => Box::new(KeywordCorrector {
                threshold: self.jaccard_threshold,
            }),
            "retrieval" => Box::new(RetrievalCorrector {
                threshold: self.jaccard_threshold,
            }),
            "external" => {
                let endpoint = self.corrector_url.clone().ok_or(ConfigError::Missing("corrector_url"))?;
                Box::new(ExternalModelCorrector::new(ExternalConfig {
                    endpoint,
                    timeout: Duration::from_millis(self.corrector_timeout_ms),
                    retries: self.corrector_retries,
                    max_in_flight: self.corrector_max_in_flight,
                }))
            }
            other => return Err(ConfigError::UnknownCorrector(other.to_owned())),
        })
    }
}
