//! Wikidata candidate search for entity linking.
//!
//! Live searches go through the MediaWiki Action API's `wbsearchentities`
//! (label and alias matching), with `wbgetentities` backfilling missing
//! descriptions. Replay runs read the same on-disk candidate store a live
//! run writes.

use std::sync::{Arc, Mutex};

use kbprobe_core::disambig::Candidate;

use crate::http::{HttpError, HttpTransport};
use crate::store::{CandidateStore, StoreError};

pub const DEFAULT_API_URL: &str = "https://www.wikidata.org/w/api.php";
pub const DEFAULT_LIMIT: usize = 10;
pub const DEFAULT_LANGUAGE: &str = "en";

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("candidate search requires a non-empty label")]
    EmptyLabel,
    #[error("no recorded candidates for label `{label}` (limit {limit})")]
    MissingSnapshot { label: String, limit: usize },
    #[error("malformed search payload: {detail}")]
    Malformed { detail: String },
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub trait CandidateSource: Send + Sync {
    /// Candidates for a label in API order, rank assigned. An empty result
    /// is a valid outcome, not an error.
    fn search(&self, label: &str) -> Result<Vec<Candidate>, SearchError>;
}

/// Live `wbsearchentities` client with an optional write-through cache.
pub struct LiveSearch {
    transport: Arc<dyn HttpTransport>,
    api_url: String,
    language: String,
    limit: usize,
    cache: Option<Mutex<CandidateStore>>,
}

impl LiveSearch {
    pub fn new(transport: Arc<dyn HttpTransport>, api_url: &str, cache: Option<CandidateStore>) -> Self {
        LiveSearch {
            transport,
            api_url: api_url.to_string(),
            language: DEFAULT_LANGUAGE.to_string(),
            limit: DEFAULT_LIMIT,
            cache: cache.map(Mutex::new),
        }
    }

    fn fetch(&self, label: &str) -> Result<Vec<Candidate>, SearchError> {
        let limit = self.limit.to_string();
        let response = self.transport.get(
            &self.api_url,
            &[
                ("action", "wbsearchentities"),
                ("search", label),
                ("language", &self.language),
                ("limit", &limit),
                ("format", "json"),
            ],
        )?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| SearchError::Malformed {
                detail: format!("search response is not JSON: {e}"),
            })?;
        let hits = parsed["search"].as_array().ok_or_else(|| SearchError::Malformed {
            detail: "missing `search` array".into(),
        })?;

        let mut candidates = Vec::with_capacity(hits.len());
        let mut needs_backfill = Vec::new();
        for (rank, hit) in hits.iter().enumerate() {
            let qid = hit["id"].as_str().ok_or_else(|| SearchError::Malformed {
                detail: "candidate without id".into(),
            })?;
            let description = hit["description"].as_str().unwrap_or_default();
            if description.is_empty() {
                needs_backfill.push(qid.to_string());
            }
            candidates.push(Candidate {
                qid: qid.to_string(),
                label: hit["label"].as_str().unwrap_or(label).to_string(),
                description: description.to_string(),
                aliases: hit["aliases"]
                    .as_array()
                    .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
                    .unwrap_or_default(),
                rank,
            });
        }
        if !needs_backfill.is_empty() {
            self.backfill(&mut candidates, &needs_backfill)?;
        }
        Ok(candidates)
    }

    /// `wbsearchentities` sometimes omits descriptions; pull them (and
    /// aliases) via `wbgetentities` for the affected QIDs.
    fn backfill(&self, candidates: &mut [Candidate], qids: &[String]) -> Result<(), SearchError> {
        let ids = qids.join("|");
        let response = self.transport.get(
            &self.api_url,
            &[
                ("action", "wbgetentities"),
                ("ids", &ids),
                ("props", "descriptions|aliases"),
                ("languages", &self.language),
                ("format", "json"),
            ],
        )?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| SearchError::Malformed {
                detail: format!("backfill response is not JSON: {e}"),
            })?;
        for candidate in candidates.iter_mut() {
            let entity = &parsed["entities"][&candidate.qid];
            if candidate.description.is_empty() {
                if let Some(description) =
                    entity["descriptions"][&self.language]["value"].as_str()
                {
                    candidate.description = description.to_string();
                }
            }
            if candidate.aliases.is_empty() {
                if let Some(aliases) = entity["aliases"][&self.language].as_array() {
                    candidate.aliases = aliases
                        .iter()
                        .filter_map(|a| a["value"].as_str().map(String::from))
                        .collect();
                }
            }
        }
        Ok(())
    }
}

impl CandidateSource for LiveSearch {
    fn search(&self, label: &str) -> Result<Vec<Candidate>, SearchError> {
        if label.trim().is_empty() {
            return Err(SearchError::EmptyLabel);
        }
        if let Some(cache) = &self.cache {
            let store = cache.lock().expect("candidate cache poisoned");
            if let Some(hit) = store.get(label, self.limit) {
                return Ok(hit.to_vec());
            }
        }
        let candidates = self.fetch(label)?;
        if let Some(cache) = &self.cache {
            let mut store = cache.lock().expect("candidate cache poisoned");
            store.record(label, self.limit, &candidates)?;
        }
        Ok(candidates)
    }
}

/// Replay source: every label must already be in the store. A recorded
/// empty list is a valid result; an absent label is a loud failure.
pub struct SnapshotSearch {
    store: CandidateStore,
    limit: usize,
}

impl SnapshotSearch {
    pub fn new(store: CandidateStore) -> Self {
        SnapshotSearch { store, limit: DEFAULT_LIMIT }
    }
}

impl CandidateSource for SnapshotSearch {
    fn search(&self, label: &str) -> Result<Vec<Candidate>, SearchError> {
        if label.trim().is_empty() {
            return Err(SearchError::EmptyLabel);
        }
        match self.store.get(label, self.limit) {
            Some(candidates) => Ok(candidates.to_vec()),
            None => Err(SearchError::MissingSnapshot {
                label: label.to_string(),
                limit: self.limit,
            }),
        }
    }
}
