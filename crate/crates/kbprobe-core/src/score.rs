//! Set-overlap scoring: per-row P/R/F1, per-relation macro averages, the
//! overall macro average, and the zero-object subset row.
//!
//! The metric convention is the single most consequential compatibility
//! decision in the crate and is isolated here: precision and recall are
//! intersection over own-side size, 0/0 is defined as 1 (an empty prediction
//! for an empty truth is perfect), and an empty side against a non-empty one
//! scores 0. F1 is 0 when p + r = 0, else 2pr/(p+r). Macro aggregation is
//! the unweighted mean: over rows within a relation, then over relations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::record::{is_valid_qid, GroundTruthRecord};
use crate::relation::RelationId;

/// P/R/F1 for a single row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub is_zero_object_truth: bool,
}

/// Unweighted mean P/R/F1 over some group of rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-relation aggregate plus how many rows contributed to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub row_count: usize,
}

/// The full evaluation output: one aggregate per relation present in the
/// truth, the zero-object subset row, and the overall macro average over
/// the relation rows (the zero-object row is reported separately and does
/// not enter the average).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_relation: BTreeMap<RelationId, RelationScore>,
    pub zero_object: Option<MacroScore>,
    pub overall: MacroScore,
}

/// Score one row from normalized ID (or label) sets.
pub fn row_scores(pred: &BTreeSet<String>, truth: &BTreeSet<String>) -> RowScore {
    let intersection = pred.intersection(truth).count() as f64;
    let precision = if pred.is_empty() {
        if truth.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        intersection / pred.len() as f64
    };
    let recall = if truth.is_empty() {
        if pred.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        intersection / truth.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    RowScore {
        precision,
        recall,
        f1,
        is_zero_object_truth: truth.is_empty(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("cannot aggregate an empty row list")]
    EmptyRows,
    #[error("duplicate {side} row for subject {subject_qid} relation {relation}")]
    DuplicateKey {
        side: &'static str,
        subject_qid: String,
        relation: RelationId,
    },
}

/// Unweighted mean of per-row precision, recall, and F1.
pub fn relation_macro(rows: &[RowScore]) -> Result<MacroScore, ScoreError> {
    if rows.is_empty() {
        return Err(ScoreError::EmptyRows);
    }
    let n = rows.len() as f64;
    Ok(MacroScore {
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
    })
}

/// Which field of the records the score sets are built from.
///
/// IDs are the headline mode; label scoring exists to debug whether a miss
/// is a knowledge failure or a linking failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreOn {
    Ids,
    Labels,
}

impl core::str::FromStr for ScoreOn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ids" => Ok(ScoreOn::Ids),
            "labels" => Ok(ScoreOn::Labels),
            other => Err(alloc::format!("unknown scoring mode `{other}`")),
        }
    }
}

/// Canonical form of one object ID: QIDs uppercased, all-digit strings
/// stripped of leading zeros, anything else trimmed verbatim. Empty slots
/// (unresolved labels) normalize to `None` and stay out of the score sets.
pub fn normalize_object_id(raw: &str) -> Option<String> {
    let t = raw.trim();
    if t.is_empty() {
        return None;
    }
    let upper_first = t.to_uppercase();
    if is_valid_qid(&upper_first) {
        return Some(upper_first);
    }
    if t.bytes().all(|b| b.is_ascii_digit()) {
        let stripped = t.trim_start_matches('0');
        return Some(if stripped.is_empty() { "0".to_string() } else { stripped.to_string() });
    }
    Some(t.to_string())
}

/// The score set for one record under a scoring mode.
pub fn score_set(record: &GroundTruthRecord, on: ScoreOn) -> BTreeSet<String> {
    match on {
        ScoreOn::Ids => record.object_ids.iter().filter_map(|s| normalize_object_id(s)).collect(),
        ScoreOn::Labels => record
            .object_labels
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    }
}

/// Alignment bookkeeping from [`overall_report`]: truth rows with no
/// prediction (scored as empty, to be logged by the caller) and prediction
/// rows with no truth (ignored, likewise logged).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentStats {
    pub missing_predictions: Vec<(String, RelationId)>,
    pub extra_predictions: Vec<(String, RelationId)>,
}

/// Align predictions to truth on (subject QID, relation) keys and build the
/// full report. Duplicate keys on either side are an error; a truth row
/// without a prediction scores as an empty prediction.
pub fn overall_report(
    preds: &[GroundTruthRecord],
    truth: &[GroundTruthRecord],
    on: ScoreOn,
) -> Result<(EvaluationReport, AlignmentStats), ScoreError> {
    let mut pred_by_key: BTreeMap<(String, RelationId), &GroundTruthRecord> = BTreeMap::new();
    for record in preds {
        if pred_by_key.insert(record.key(), record).is_some() {
            return Err(ScoreError::DuplicateKey {
                side: "prediction",
                subject_qid: record.subject_qid.clone(),
                relation: record.relation,
            });
        }
    }
    let mut truth_keys: BTreeSet<(String, RelationId)> = BTreeSet::new();
    for record in truth {
        if !truth_keys.insert(record.key()) {
            return Err(ScoreError::DuplicateKey {
                side: "truth",
                subject_qid: record.subject_qid.clone(),
                relation: record.relation,
            });
        }
    }

    let mut stats = AlignmentStats::default();
    let empty_set = BTreeSet::new();
    let mut rows_by_relation: BTreeMap<RelationId, Vec<RowScore>> = BTreeMap::new();
    let mut zero_object_rows: Vec<RowScore> = Vec::new();
    for truth_row in truth {
        let truth_set = score_set(truth_row, on);
        let pred_set = match pred_by_key.get(&truth_row.key()) {
            Some(pred_row) => score_set(pred_row, on),
            None => {
                stats
                    .missing_predictions
                    .push((truth_row.subject_qid.clone(), truth_row.relation));
                empty_set.clone()
            }
        };
        let score = row_scores(&pred_set, &truth_set);
        if score.is_zero_object_truth {
            zero_object_rows.push(score);
        }
        rows_by_relation.entry(truth_row.relation).or_default().push(score);
    }
    for (key, _) in pred_by_key {
        if !truth_keys.contains(&key) {
            stats.extra_predictions.push(key);
        }
    }

    let mut per_relation = BTreeMap::new();
    let mut relation_triples: Vec<MacroScore> = Vec::new();
    for (relation, rows) in &rows_by_relation {
        let agg = relation_macro(rows)?;
        relation_triples.push(agg);
        per_relation.insert(
            *relation,
            RelationScore {
                precision: agg.precision,
                recall: agg.recall,
                f1: agg.f1,
                row_count: rows.len(),
            },
        );
    }
    if relation_triples.is_empty() {
        return Err(ScoreError::EmptyRows);
    }
    let n = relation_triples.len() as f64;
    let overall = MacroScore {
        precision: relation_triples.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: relation_triples.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: relation_triples.iter().map(|m| m.f1).sum::<f64>() / n,
    };
    let zero_object = if zero_object_rows.is_empty() {
        None
    } else {
        Some(relation_macro(&zero_object_rows)?)
    };

    Ok((EvaluationReport { per_relation, zero_object, overall }, stats))
}
