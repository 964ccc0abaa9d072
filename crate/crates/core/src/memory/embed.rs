use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::script::Script;
use crate::text::word_tokens;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("nothing to embed: text has no word characters")]
    EmptyInput,
    #[error("embedding backend unreachable: {0}")]
    Unreachable(String),
    #[error("embedding backend returned a bad response: {0}")]
    BadResponse(String),
}

/// Maps text to unit-norm vectors of a fixed dimension.
pub trait Embedder: Send + Sync {
    /// Identifies the backend; records from different backends never mix.
    fn backend_id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;

    fn embed(&self, script: &Script) -> Result<Vec<f64>, EmbedError> {
        let mut out = self.embed_texts(&[script_text(script)])?;
        out.pop().ok_or_else(|| EmbedError::BadResponse("no vector returned".into()))
    }
}

/// Text form of a script used as the memory key: goal, then steps in order.
pub fn script_text(script: &Script) -> String {
    let mut parts = vec![script.goal().to_owned()];
    parts.extend(script.linearize().into_iter().map(|s| s.label));
    parts.join("\n")
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Bag of word unigrams and per-word character trigrams, feature-hashed with
/// a sign bit into `dimension` buckets and L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIMENSION: usize = 1024;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashingEmbedder { dimension }
    }

    /// The features of `text`, with repeats, before hashing.
    pub fn features(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in word_tokens(text) {
            out.push(format!("w:{word}"));
            let padded: Vec<char> = format!("#{word}#").chars().collect();
            for tri in padded.windows(3) {
                out.push(format!("c:{}", tri.iter().collect::<String>()));
            }
        }
        out
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let features = Self::features(text);
        if features.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let mut v = vec![0.0; self.dimension];
        for f in features {
            let h = fnv1a(f.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dimension as u64) as usize] += sign;
        }
        normalize(&mut v).ok_or(EmbedError::EmptyInput)?;
        Ok(v)
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(Self::DEFAULT_DIMENSION)
    }
}

impl Embedder for HashingEmbedder {
    fn backend_id(&self) -> String {
        format!("hashing-fnv1a-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}

/// Scales `v` to unit length. Returns `None` for the zero vector.
pub fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for an external embedding service speaking
/// `POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}`.
pub struct HttpEmbedder {
    url: String,
    dimension: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, dimension: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpEmbedder {
            url: format!("{}/embed", base_url.trim_end_matches('/')),
            dimension,
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Embedder for HttpEmbedder {
    fn backend_id(&self) -> String {
        format!("http:{}#{}", self.url, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let response: EmbedResponse = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) => EmbedError::BadResponse(format!("HTTP {code}")),
                other => EmbedError::Unreachable(other.to_string()),
            })?
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::BadResponse(e.to_string()))?;
        if response.vectors.len() != texts.len() {
            return Err(EmbedError::BadResponse(format!(
                "expected {} vectors, got {}",
                texts.len(),
                response.vectors.len()
            )));
        }
        response
            .vectors
            .into_iter()
            .map(|mut v| {
                if v.len() != self.dimension {
                    return Err(EmbedError::BadResponse(format!(
                        "expected dimension {}, got {}",
                        self.dimension,
                        v.len()
                    )));
                }
                normalize(&mut v).ok_or_else(|| EmbedError::BadResponse("zero vector".into()))?;
                Ok(v)
            })
            .collect()
    }
}
