//! The growing feedback memory: an append-only table of embedded script keys
//! with their feedback, searched by cosine similarity.

mod embed;

pub use embed::{cosine, normalize, script_text, EmbedError, Embedder, HashingEmbedder, HttpEmbedder};

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::edit::EditCommand;
use crate::script::Script;

pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: u64,
    pub key_vector: Vec<f64>,
    pub source_script: Script,
    pub feedback: String,
    #[serde(default)]
    pub gold_edit: Option<EditCommand>,
    pub created_at: DateTime<Utc>,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LookupResult {
    pub record: MemoryRecord,
    pub similarity: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("feedback must not be empty")]
    EmptyFeedback,
    #[error("vector has dimension {got}, store expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector is not unit length (norm {0})")]
    NotUnitNorm(f64),
    #[error("record {id} was written by backend `{found}`, store uses `{expected}`")]
    BackendMismatch { id: u64, expected: String, found: String },
    #[error("memory file line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Many readers, one writer. A write appends to the backing file (if any)
/// and the in-memory table under the same lock, so lookups see a record
/// entirely or not at all.
pub struct Memory {
    records: RwLock<Vec<MemoryRecord>>,
    file: Mutex<Option<File>>,
    path: Option<PathBuf>,
    embedder: Arc<dyn Embedder>,
}

impl std::fmt::Debug for Memory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Memory")
            .field("len", &self.len())
            .field("path", &self.path)
            .field("backend", &self.embedder.backend_id())
            .finish()
    }
}

impl Memory {
    pub fn in_memory(embedder: Arc<dyn Embedder>) -> Memory {
        Memory {
            records: RwLock::new(Vec::new()),
            file: Mutex::new(None),
            path: None,
            embedder,
        }
    }

    /// Opens (or creates) a JSON-lines store. Every later write is appended
    /// and flushed before it becomes visible.
    pub fn open(path: impl AsRef<Path>, embedder: Arc<dyn Embedder>) -> Result<Memory, MemoryError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() {
            read_records(&path)?
        } else {
            Vec::new()
        };
        let expected = embedder.backend_id();
        for r in &records {
            if r.backend != expected {
                return Err(MemoryError::BackendMismatch {
                    id: r.id,
                    expected,
                    found: r.backend.clone(),
                });
            }
            check_vector(&r.key_vector, embedder.dimension())?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Memory {
            records: RwLock::new(records),
            file: Mutex::new(Some(file)),
            path: Some(path),
            embedder,
        })
    }

    /// Writes every record to `path` as JSON lines, replacing its contents.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        let records = self.records.read().unwrap();
        let mut out = std::io::BufWriter::new(File::create(path)?);
        for r in records.iter() {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn backend(&self) -> String {
        self.embedder.backend_id()
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn embed(&self, script: &Script) -> Result<Vec<f64>, MemoryError> {
        Ok(self.embedder.embed(script)?)
    }

    pub fn write(&self, script: &Script, feedback: &str, gold_edit: Option<EditCommand>) -> Result<u64, MemoryError> {
        if feedback.trim().is_empty() {
            return Err(MemoryError::EmptyFeedback);
        }
        let vector = self.embed(script)?;
        self.write_with_vector(vector, script, feedback, gold_edit)
    }

    /// Writes a record whose key was computed elsewhere.
    pub fn write_with_vector(
        &self,
        vector: Vec<f64>,
        script: &Script,
        feedback: &str,
        gold_edit: Option<EditCommand>,
    ) -> Result<u64, MemoryError> {
        if feedback.trim().is_empty() {
            return Err(MemoryError::EmptyFeedback);
        }
        check_vector(&vector, self.dimension())?;
        let mut records = self.records.write().unwrap();
        let record = MemoryRecord {
            id: records.last().map_or(1, |r| r.id + 1),
            key_vector: vector,
            source_script: script.clone(),
            feedback: feedback.trim().to_owned(),
            gold_edit,
            created_at: Utc::now(),
            backend: self.backend(),
        };
        if let Some(file) = self.file.lock().unwrap().as_mut() {
            let mut line = serde_json::to_vec(&record).map_err(std::io::Error::from)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        let id = record.id;
        records.push(record);
        Ok(id)
    }

    pub fn get(&self, id: u64) -> Option<MemoryRecord> {
        let records = self.records.read().unwrap();
        records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| records[i].clone())
    }

    /// Records in id order, `offset` skipped, at most `limit` returned.
    pub fn records(&self, offset: usize, limit: usize) -> Vec<MemoryRecord> {
        let records = self.records.read().unwrap();
        records.iter().skip(offset).take(limit).cloned().collect()
    }

    /// The most similar record with similarity at least `threshold`. Ties go
    /// to the lowest id.
    pub fn lookup(&self, query: &Script, threshold: f64) -> Result<Option<LookupResult>, MemoryError> {
        if self.is_empty() {
            return Ok(None);
        }
        let v = self.embed(query)?;
        Ok(self.lookup_vector(&v, threshold))
    }

    pub fn lookup_vector(&self, query: &[f64], threshold: f64) -> Option<LookupResult> {
        let records = self.records.read().unwrap();
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in records.iter().enumerate() {
            let sim = cosine(query, &r.key_vector);
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((i, sim));
            }
        }
        best.filter(|&(_, s)| s >= threshold).map(|(i, similarity)| LookupResult {
            record: records[i].clone(),
            similarity,
        })
    }

    /// The `k` most similar records, no threshold, by descending similarity
    /// then ascending id.
    pub fn lookup_k(&self, query: &Script, k: usize) -> Result<Vec<LookupResult>, MemoryError> {
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let v = self.embed(query)?;
        Ok(self.lookup_k_vector(&v, k))
    }

    pub fn lookup_k_vector(&self, query: &[f64], k: usize) -> Vec<LookupResult> {
        let records = self.records.read().unwrap();
        let mut scored: Vec<(usize, f64)> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (i, cosine(query, &r.key_vector)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(i, similarity)| LookupResult {
                record: records[i].clone(),
                similarity,
            })
            .collect()
    }
}

fn check_vector(v: &[f64], dimension: usize) -> Result<(), MemoryError> {
    if v.len() != dimension {
        return Err(MemoryError::DimensionMismatch {
            expected: dimension,
            got: v.len(),
        });
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(MemoryError::NotUnitNorm(norm));
    }
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<MemoryRecord>, MemoryError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<MemoryRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MemoryRecord = serde_json::from_str(&line).map_err(|e| MemoryError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.last().is_some_and(|prev| prev.id >= record.id) {
            return Err(MemoryError::Corrupt {
                line: i + 1,
                message: format!("id {} is not increasing", record.id),
            });
        }
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn memory() -> Memory {
        Memory::in_memory(Arc::new(HashingEmbedder::default()))
    }

    fn script(labels: &[&str]) -> Script {
        Script::chain("g", labels).unwrap()
    }

    #[test]
    fn empty_memory_finds_nothing() {
        assert!(memory().lookup(&script(&["a"]), 0.9).unwrap().is_none());
    }

    #[test]
    fn write_then_self_lookup() {
        let m = memory();
        let s = script(&["open the door", "walk out"]);
        let id = m.write(&s, "close the door behind you", None).unwrap();
        let hit = m.lookup(&s, DEFAULT_THRESHOLD).unwrap().unwrap();
        assert_eq!(hit.record.id, id);
        assert!((hit.similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_writes_get_distinct_ids_and_oldest_wins() {
        let m = memory();
        let s = script(&["a b c"]);
        let first = m.write(&s, "fb", None).unwrap();
        let second = m.write(&s, "fb", None).unwrap();
        assert!(second > first);
        assert_eq!(m.lookup(&s, 0.9).unwrap().unwrap().record.id, first);
    }

    #[test]
    fn rejects_empty_feedback_and_bad_vectors() {
        let m = memory();
        let s = script(&["a"]);
        assert!(matches!(m.write(&s, "  ", None), Err(MemoryError::EmptyFeedback)));
        assert!(matches!(
            m.write_with_vector(vec![1.0; 3], &s, "fb", None),
            Err(MemoryError::DimensionMismatch { expected: 1024, got: 3 })
        ));
        let mut v = vec![0.0; 1024];
        v[0] = 2.0;
        assert!(matches!(
            m.write_with_vector(v, &s, "fb", None),
            Err(MemoryError::NotUnitNorm(_))
        ));
        assert!(m.is_empty());
    }

    #[test]
    fn lookup_k_orders_and_truncates() {
        let m = memory();
        m.write(&script(&["buy milk"]), "x", None).unwrap();
        m.write(&script(&["buy milk", "pay"]), "y", None).unwrap();
        m.write(&script(&["swim laps"]), "z", None).unwrap();
        let hits = m.lookup_k(&script(&["buy milk"]), 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].record.id, 1);
        assert!(hits.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        assert_eq!(m.lookup_k(&script(&["buy milk"]), 1).unwrap().len(), 1);
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
        let s = script(&["plant the seed", "water it"]);
        {
            let m = Memory::open(&path, embedder.clone()).unwrap();
            m.write(&s, "water after planting", Some(EditCommand::remove("water it"))).unwrap();
        }
        let m = Memory::open(&path, embedder).unwrap();
        assert_eq!(m.len(), 1);
        let r = m.get(1).unwrap();
        assert_eq!(r.gold_edit, Some(EditCommand::remove("water it")));
        assert!(r.source_script.equivalent(&s));
        assert_eq!(m.lookup(&s, 0.9).unwrap().unwrap().similarity, 1.0);
    }

    #[test]
    fn open_rejects_other_backend() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        Memory::open(&path, Arc::new(HashingEmbedder::new(64)))
            .unwrap()
            .write(&script(&["a"]), "fb", None)
            .unwrap();
        assert!(matches!(
            Memory::open(&path, Arc::new(HashingEmbedder::default())),
            Err(MemoryError::BackendMismatch { .. })
        ));
    }
}
