//! Append-only JSONL stores shared by caching and replay.
//!
//! Every store is a flat file of one JSON object per line, loaded into a
//! map at open and appended on write. The same file doubles as a live-run
//! cache and a replay fixture set, so recorded runs replay from exactly
//! what a live run wrote.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use kbprobe_core::disambig::Candidate;
use kbprobe_core::relation::RelationId;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cannot access store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad record at {path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("conflicting fixture for digest {digest}: recorded text differs")]
    Conflict { digest: String },
}

fn read_records<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, StoreError> {
    let file = File::open(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: R = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: index + 1,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn append_record<R: Serialize>(path: &Path, record: &R) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| StoreError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
    let line = serde_json::to_string(record).expect("store records serialize");
    writeln!(file, "{line}").map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRecord {
    digest: String,
    response_text: String,
}

/// Content-addressed map from request digest to recorded reply text.
/// Serves as both the live-run response cache and the replay fixture set.
#[derive(Debug, Default)]
pub struct FixtureStore {
    path: Option<PathBuf>,
    entries: BTreeMap<String, String>,
}

impl FixtureStore {
    pub fn in_memory() -> Self {
        FixtureStore::default()
    }

    /// Load an existing fixture file; the file must exist.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut entries = BTreeMap::new();
        for record in read_records::<FixtureRecord>(path)? {
            entries.insert(record.digest, record.response_text);
        }
        Ok(FixtureStore { path: Some(path.to_path_buf()), entries })
    }

    /// Open a cache file, creating an empty store when the file is absent.
    pub fn open_or_create(path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            FixtureStore::load(path)
        } else {
            Ok(FixtureStore { path: Some(path.to_path_buf()), entries: BTreeMap::new() })
        }
    }

    pub fn get(&self, digest: &str) -> Option<&str> {
        self.entries.get(digest).map(String::as_str)
    }

    /// Idempotent append. Re-recording an identical pair is a no-op;
    /// different text for a known digest is a conflict, fixtures are
    /// append-only truth.
    pub fn record(&mut self, digest: &str, text: &str) -> Result<(), StoreError> {
        if let Some(existing) = self.entries.get(digest) {
            if existing == text {
                return Ok(());
            }
            return Err(StoreError::Conflict { digest: digest.to_string() });
        }
        if let Some(path) = &self.path {
            append_record(
                path,
                &FixtureRecord {
                    digest: digest.to_string(),
                    response_text: text.to_string(),
                },
            )?;
        }
        self.entries.insert(digest.to_string(), text.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRecord {
    label: String,
    limit: usize,
    candidates: Vec<Candidate>,
}

/// Candidate lists keyed by (search label, limit).
#[derive(Debug, Default)]
pub struct CandidateStore {
    path: Option<PathBuf>,
    entries: BTreeMap<(String, usize), Vec<Candidate>>,
}

impl CandidateStore {
    pub fn in_memory() -> Self {
        CandidateStore::default()
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut entries = BTreeMap::new();
        for record in read_records::<CandidateRecord>(path)? {
            entries.insert((record.label, record.limit), record.candidates);
        }
        Ok(CandidateStore { path: Some(path.to_path_buf()), entries })
    }

    pub fn open_or_create(path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            CandidateStore::load(path)
        } else {
            Ok(CandidateStore { path: Some(path.to_path_buf()), entries: BTreeMap::new() })
        }
    }

    pub fn get(&self, label: &str, limit: usize) -> Option<&[Candidate]> {
        self.entries.get(&(label.to_string(), limit)).map(Vec::as_slice)
    }

    pub fn record(
        &mut self,
        label: &str,
        limit: usize,
        candidates: &[Candidate],
    ) -> Result<(), StoreError> {
        let key = (label.to_string(), limit);
        if self.entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            append_record(
                path,
                &CandidateRecord {
                    label: label.to_string(),
                    limit,
                    candidates: candidates.to_vec(),
                },
            )?;
        }
        self.entries.insert(key, candidates.to_vec());
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PageRecord {
    kind: String,
    title: String,
    text: String,
}

/// Fetched page pieces keyed by (kind, title); kinds are `intro` and
/// `infobox`.
#[derive(Debug, Default)]
pub struct PageStore {
    path: Option<PathBuf>,
    entries: BTreeMap<(String, String), String>,
}

impl PageStore {
    pub fn in_memory() -> Self {
        PageStore::default()
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut entries = BTreeMap::new();
        for record in read_records::<PageRecord>(path)? {
            entries.insert((record.kind, record.title), record.text);
        }
        Ok(PageStore { path: Some(path.to_path_buf()), entries })
    }

    pub fn open_or_create(path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            PageStore::load(path)
        } else {
            Ok(PageStore { path: Some(path.to_path_buf()), entries: BTreeMap::new() })
        }
    }

    pub fn get(&self, kind: &str, title: &str) -> Option<&str> {
        self.entries
            .get(&(kind.to_string(), title.to_string()))
            .map(String::as_str)
    }

    pub fn record(&mut self, kind: &str, title: &str, text: &str) -> Result<(), StoreError> {
        let key = (kind.to_string(), title.to_string());
        if self.entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            append_record(
                path,
                &PageRecord {
                    kind: kind.to_string(),
                    title: title.to_string(),
                    text: text.to_string(),
                },
            )?;
        }
        self.entries.insert(key, text.to_string());
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SparqlRecord {
    subject_qid: String,
    relation: RelationId,
    object_ids: Vec<String>,
    #[serde(default)]
    fetched_at: Option<u64>,
}

/// Query results keyed by (subject QID, relation), with a fetch timestamp
/// for staleness audits.
#[derive(Debug, Default)]
pub struct SparqlStore {
    path: Option<PathBuf>,
    entries: BTreeMap<(String, RelationId), Vec<String>>,
}

impl SparqlStore {
    pub fn in_memory() -> Self {
        SparqlStore::default()
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut entries = BTreeMap::new();
        for record in read_records::<SparqlRecord>(path)? {
            entries.insert((record.subject_qid, record.relation), record.object_ids);
        }
        Ok(SparqlStore { path: Some(path.to_path_buf()), entries })
    }

    pub fn open_or_create(path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            SparqlStore::load(path)
        } else {
            Ok(SparqlStore { path: Some(path.to_path_buf()), entries: BTreeMap::new() })
        }
    }

    pub fn get(&self, subject_qid: &str, relation: RelationId) -> Option<&[String]> {
        self.entries
            .get(&(subject_qid.to_string(), relation))
            .map(Vec::as_slice)
    }

    pub fn record(
        &mut self,
        subject_qid: &str,
        relation: RelationId,
        object_ids: &[String],
        fetched_at: u64,
    ) -> Result<(), StoreError> {
        let key = (subject_qid.to_string(), relation);
        if self.entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            append_record(
                path,
                &SparqlRecord {
                    subject_qid: subject_qid.to_string(),
                    relation,
                    object_ids: object_ids.to_vec(),
                    fetched_at: Some(fetched_at),
                },
            )?;
        }
        self.entries.insert(key, object_ids.to_vec());
        Ok(())
    }
}
