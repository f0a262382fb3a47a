//! Ground-truth regeneration from live Wikidata via SPARQL.
//!
//! The relation-to-property table is configuration, not code: each entry
//! carries the property ID, its expected value datatype, and a provenance
//! note. Loading validates the datatype against the relation's value kind
//! so a numeric relation can never be queried through an item property.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use kbprobe_core::parse::normalize_numeric;
use kbprobe_core::record::is_valid_qid;
use kbprobe_core::relation::{ProfileTable, RelationId, ValueKind};

use crate::http::{HttpError, HttpTransport};
use crate::store::{SparqlStore, StoreError};

pub const DEFAULT_ENDPOINT: &str = "https://query.wikidata.org/sparql";

/// Query template asset; `{qid}` and `{pid}` are substituted per call.
pub const OBJECT_QUERY_TEMPLATE: &str = include_str!("../assets/object_query.rq");

/// Default relation-to-PID table compiled into the crate.
pub const BUILTIN_PIDS_JSON: &str = include_str!("../assets/pids.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PidDatatype {
    #[serde(rename = "wikibase-item")]
    WikibaseItem,
    #[serde(rename = "quantity")]
    Quantity,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PidEntry {
    pub pid: Option<String>,
    pub datatype: PidDatatype,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SparqlError {
    #[error("PID table is not valid JSON: {0}")]
    Json(String),
    #[error("PID table has unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("PID table is missing relation `{0}`")]
    MissingRelation(RelationId),
    #[error("no Wikidata property configured for relation `{0}`")]
    MissingPid(RelationId),
    #[error("PID table datatype for `{relation}` is {datatype:?} but the relation value kind is {value_kind:?}")]
    DatatypeMismatch {
        relation: RelationId,
        datatype: PidDatatype,
        value_kind: ValueKind,
    },
    #[error("malformed SPARQL payload: {detail}")]
    Malformed { detail: String },
    #[error("truth snapshot has no entry for subject {subject_qid} relation {relation}")]
    MissingSnapshot {
        subject_qid: String,
        relation: RelationId,
    },
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Relation → Wikidata property table (21 entries; entries without a
/// forward property carry `pid: null` and fail per-fetch, not at load).
#[derive(Debug, Clone)]
pub struct PidTable {
    by_relation: BTreeMap<RelationId, PidEntry>,
}

impl PidTable {
    pub fn from_json(text: &str) -> Result<PidTable, SparqlError> {
        let raw: BTreeMap<String, PidEntry> =
            serde_json::from_str(text).map_err(|e| SparqlError::Json(e.to_string()))?;
        let mut by_relation = BTreeMap::new();
        for (name, entry) in raw {
            let relation =
                RelationId::parse(&name).map_err(|e| SparqlError::UnknownRelation(e.name))?;
            by_relation.insert(relation, entry);
        }
        for relation in RelationId::ALL {
            if !by_relation.contains_key(&relation) {
                return Err(SparqlError::MissingRelation(relation));
            }
        }
        Ok(PidTable { by_relation })
    }

    pub fn builtin() -> PidTable {
        PidTable::from_json(BUILTIN_PIDS_JSON).expect("builtin PID table must validate")
    }

    /// Cross-check every entry's datatype against the relation's value
    /// kind: quantity properties for numeric relations, item properties for
    /// entity relations.
    pub fn validate_against(&self, profiles: &ProfileTable) -> Result<(), SparqlError> {
        for (relation, entry) in &self.by_relation {
            let value_kind = profiles.profile(*relation).value_kind;
            let expected = match value_kind {
                ValueKind::Numeric => PidDatatype::Quantity,
                ValueKind::Entity => PidDatatype::WikibaseItem,
            };
            if entry.datatype != expected {
                return Err(SparqlError::DatatypeMismatch {
                    relation: *relation,
                    datatype: entry.datatype,
                    value_kind,
                });
            }
        }
        Ok(())
    }

    pub fn entry(&self, relation: RelationId) -> &PidEntry {
        self.by_relation
            .get(&relation)
            .expect("table validated total at construction")
    }

    pub fn pid(&self, relation: RelationId) -> Result<&str, SparqlError> {
        self.entry(relation)
            .pid
            .as_deref()
            .ok_or(SparqlError::MissingPid(relation))
    }
}

pub trait TruthSource: Send + Sync {
    /// Current truthy object IDs for (subject, relation): QIDs for entity
    /// relations, normalized numeric strings for numeric ones.
    fn fetch(
        &self,
        subject_qid: &str,
        relation: RelationId,
    ) -> Result<BTreeSet<String>, SparqlError>;
}

/// Live SPARQL client with an on-disk result cache carrying fetch
/// timestamps.
pub struct LiveSparql {
    transport: Arc<dyn HttpTransport>,
    endpoint: String,
    pids: PidTable,
    cache: Option<Mutex<SparqlStore>>,
}

impl LiveSparql {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        endpoint: &str,
        pids: PidTable,
        cache: Option<SparqlStore>,
    ) -> Self {
        LiveSparql {
            transport,
            endpoint: endpoint.to_string(),
            pids,
            cache: cache.map(Mutex::new),
        }
    }

    fn query_text(subject_qid: &str, pid: &str) -> String {
        OBJECT_QUERY_TEMPLATE
            .replace("{qid}", subject_qid)
            .replace("{pid}", pid)
            .trim()
            .to_string()
    }
}

impl TruthSource for LiveSparql {
    fn fetch(
        &self,
        subject_qid: &str,
        relation: RelationId,
    ) -> Result<BTreeSet<String>, SparqlError> {
        if let Some(cache) = &self.cache {
            let store = cache.lock().expect("sparql cache poisoned");
            if let Some(ids) = store.get(subject_qid, relation) {
                return Ok(ids.iter().cloned().collect());
            }
        }
        let pid = self.pids.pid(relation)?;
        let query = Self::query_text(subject_qid, pid);
        let response = self
            .transport
            .get(&self.endpoint, &[("query", &query), ("format", "json")])?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| SparqlError::Malformed {
                detail: format!("SPARQL response is not JSON: {e}"),
            })?;
        let bindings = parsed["results"]["bindings"]
            .as_array()
            .ok_or_else(|| SparqlError::Malformed {
                detail: "missing results.bindings".into(),
            })?;

        let numeric = self.pids.entry(relation).datatype == PidDatatype::Quantity;
        let mut ids = BTreeSet::new();
        for binding in bindings {
            let value = binding["o"]["value"].as_str().unwrap_or_default();
            if value.is_empty() {
                continue;
            }
            if numeric {
                if let Some(normalized) = normalize_numeric(value) {
                    ids.insert(normalized);
                }
            } else {
                let qid = value.rsplit('/').next().unwrap_or(value);
                if is_valid_qid(qid) {
                    ids.insert(qid.to_string());
                }
            }
        }
        if let Some(cache) = &self.cache {
            let fetched_at = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or_default();
            let id_vec: Vec<String> = ids.iter().cloned().collect();
            let mut store = cache.lock().expect("sparql cache poisoned");
            store.record(subject_qid, relation, &id_vec, fetched_at)?;
        }
        Ok(ids)
    }
}

/// Snapshot truth for offline audits. Snapshots are expected to be
/// complete: rows with genuinely empty truth must be recorded as empty, so
/// a missing key is an error rather than an empty set.
pub struct SnapshotTruth {
    store: SparqlStore,
}

impl SnapshotTruth {
    pub fn new(store: SparqlStore) -> Self {
        SnapshotTruth { store }
    }
}

impl TruthSource for SnapshotTruth {
    fn fetch(
        &self,
        subject_qid: &str,
        relation: RelationId,
    ) -> Result<BTreeSet<String>, SparqlError> {
        match self.store.get(subject_qid, relation) {
            Some(ids) => Ok(ids.iter().cloned().collect()),
            None => Err(SparqlError::MissingSnapshot {
                subject_qid: subject_qid.to_string(),
                relation,
            }),
        }
    }
}
