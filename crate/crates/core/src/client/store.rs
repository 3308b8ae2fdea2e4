//! Append-only sample log.
//!
//! One JSON object per line. Records are flushed and synced before the
//! writer reports success; completeness is always recomputed by scanning the
//! file.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::letter::Letter;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub question_id: String,
    pub model_name: String,
    pub sample_index: u32,
    pub raw_text: String,
    pub parsed: Option<Letter>,
    pub prompt_hash: String,
    pub timestamp: DateTime<Utc>,
}

impl SampleRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            question_id: self.question_id.clone(),
            model_name: self.model_name.clone(),
            sample_index: self.sample_index,
            prompt_hash: self.prompt_hash.clone(),
        }
    }
}

/// Uniqueness key of a record within a store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub question_id: String,
    pub model_name: String,
    pub sample_index: u32,
    pub prompt_hash: String,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("sample store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sample store {path}, line {line}: corrupt record: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("sample store {path}, line {line}: duplicate record for question {question_id} sample {sample_index}")]
    Duplicate {
        path: PathBuf,
        line: usize,
        question_id: String,
        sample_index: u32,
    },
}

#[derive(Debug, Clone)]
pub struct SampleStore {
    path: PathBuf,
}

impl SampleStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Sidecar file holding the latest campaign manifest.
    pub fn manifest_path(&self) -> PathBuf {
        sidecar(&self.path, "manifest.json")
    }

    /// Sidecar file holding the stats table emitted by the latest campaign.
    pub fn stats_path(&self) -> PathBuf {
        sidecar(&self.path, "stats.csv")
    }

    fn io_err(&self, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.clone(),
            source,
        }
    }

    /// All records in file order. A missing file is an empty store.
    pub fn load(&self) -> Result<Vec<SampleRecord>, StoreError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io_err(e)),
        };
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| self.io_err(e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord =
                serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: self.path.clone(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            if !seen.insert(rec.key()) {
                return Err(StoreError::Duplicate {
                    path: self.path.clone(),
                    line: line_no,
                    question_id: rec.question_id,
                    sample_index: rec.sample_index,
                });
            }
            records.push(rec);
        }
        Ok(records)
    }

    pub fn writer(&self) -> Result<StoreWriter, StoreError> {
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| self.io_err(e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io_err(e))?;
        Ok(StoreWriter {
            file,
            path: self.path.clone(),
        })
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

/// Single writer for a store; appends are durable once `append` returns.
pub struct StoreWriter {
    file: File,
    path: PathBuf,
}

impl StoreWriter {
    pub fn append(&mut self, record: &SampleRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("record serialises");
        line.push(b'\n');
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        self.file.flush().map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RecordFilter {
    pub model_name: Option<String>,
    pub question_ids: Option<HashSet<String>>,
    pub prompt_hash: Option<String>,
}

impl RecordFilter {
    pub fn model(name: impl Into<String>) -> Self {
        Self {
            model_name: Some(name.into()),
            ..Self::default()
        }
    }

    pub fn question(mut self, id: impl Into<String>) -> Self {
        self.question_ids.get_or_insert_with(HashSet::new).insert(id.into());
        self
    }

    pub fn matches(&self, r: &SampleRecord) -> bool {
        self.model_name.as_ref().is_none_or(|m| *m == r.model_name)
            && self.question_ids.as_ref().is_none_or(|ids| ids.contains(&r.question_id))
            && self.prompt_hash.as_ref().is_none_or(|h| *h == r.prompt_hash)
    }
}

/// Matching records ordered by `(question_id, sample_index)`.
pub fn load_sample_records(
    store: &SampleStore,
    filter: &RecordFilter,
) -> Result<Vec<SampleRecord>, StoreError> {
    let mut records: Vec<SampleRecord> =
        store.load()?.into_iter().filter(|r| filter.matches(r)).collect();
    records.sort_by(|a, b| {
        (&a.question_id, a.sample_index, &a.model_name, &a.prompt_hash).cmp(&(
            &b.question_id,
            b.sample_index,
            &b.model_name,
            &b.prompt_hash,
        ))
    });
    Ok(records)
}

/// Model names present in a store with their record counts.
pub fn models_in_store(records: &[SampleRecord]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.model_name.clone()).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(q: &str, i: u32) -> SampleRecord {
        SampleRecord {
            question_id: q.into(),
            model_name: "m".into(),
            sample_index: i,
            raw_text: "B".into(),
            parsed: Some(Letter::B),
            prompt_hash: "h".into(),
            timestamp: DateTime::<Utc>::default(),
        }
    }

    #[test]
    fn empty_and_missing_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = SampleStore::new(dir.path().join("none.jsonl"));
        assert!(load_sample_records(&store, &RecordFilter::default()).unwrap().is_empty());
    }

    #[test]
    fn append_filter_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = SampleStore::new(dir.path().join("s.jsonl"));
        let mut w = store.writer().unwrap();
        for (q, i) in [("q2", 1), ("q1", 1), ("q2", 0), ("q1", 0)] {
            w.append(&rec(q, i)).unwrap();
        }
        let all = load_sample_records(&store, &RecordFilter::default()).unwrap();
        let keys: Vec<(&str, u32)> = all.iter().map(|r| (r.question_id.as_str(), r.sample_index)).collect();
        assert_eq!(keys, vec![("q1", 0), ("q1", 1), ("q2", 0), ("q2", 1)]);
        let q1 = load_sample_records(&store, &RecordFilter::model("m").question("q1")).unwrap();
        assert_eq!(q1.len(), 2);
        assert!(load_sample_records(&store, &RecordFilter::model("x")).unwrap().is_empty());
    }

    #[test]
    fn truncated_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let store = SampleStore::new(dir.path().join("s.jsonl"));
        store.writer().unwrap().append(&rec("q1", 0)).unwrap();
        let mut text = std::fs::read_to_string(store.path()).unwrap();
        let line = serde_json::to_string(&rec("q1", 1)).unwrap();
        text.push_str(&line[..line.len() / 2]);
        std::fs::write(store.path(), text).unwrap();
        match store.load() {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_key_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let store = SampleStore::new(dir.path().join("s.jsonl"));
        let mut w = store.writer().unwrap();
        w.append(&rec("q1", 0)).unwrap();
        w.append(&rec("q1", 0)).unwrap();
        assert!(matches!(store.load(), Err(StoreError::Duplicate { line: 2, .. })));
    }

    #[test]
    fn sidecar_paths() {
        let store = SampleStore::new("/tmp/x/run.jsonl");
        assert_eq!(store.manifest_path(), PathBuf::from("/tmp/x/run.jsonl.manifest.json"));
        assert_eq!(store.stats_path(), PathBuf::from("/tmp/x/run.jsonl.stats.csv"));
    }
}
