//! Task rows: the (subject, relation) query and its ground-truth objects.
//!
//! Wire keys follow the challenge JSONL schema (`SubjectEntity`,
//! `SubjectEntityID`, `Relation`, `ObjectEntities`, `ObjectEntitiesID`).
//! Field order on the structs is the stable serialization order.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::relation::RelationId;

/// `Q` followed by one or more ASCII digits.
pub fn is_valid_qid(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next() == Some('Q') && {
        let rest = chars.as_str();
        !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
    }
}

/// One (subject label, subject QID, relation) task row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    #[serde(rename = "SubjectEntity")]
    pub subject_label: String,
    #[serde(rename = "SubjectEntityID")]
    pub subject_qid: String,
    #[serde(rename = "Relation")]
    pub relation: RelationId,
}

/// A query row together with its object labels and IDs.
///
/// The two object lists are parallel (equal length, index-aligned). An empty
/// answer is a pair of zero-length lists; loaders normalize the `[""]`
/// encoding into that shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    #[serde(rename = "SubjectEntity")]
    pub subject_label: String,
    #[serde(rename = "SubjectEntityID")]
    pub subject_qid: String,
    #[serde(rename = "Relation")]
    pub relation: RelationId,
    #[serde(rename = "ObjectEntities")]
    pub object_labels: Vec<String>,
    #[serde(rename = "ObjectEntitiesID")]
    pub object_ids: Vec<String>,
}

impl GroundTruthRecord {
    pub fn query(&self) -> QueryRecord {
        QueryRecord {
            subject_label: self.subject_label.clone(),
            subject_qid: self.subject_qid.clone(),
            relation: self.relation,
        }
    }

    pub fn key(&self) -> (String, RelationId) {
        (self.subject_qid.clone(), self.relation)
    }
}
