//! Knowledge-gap classification: rank rows whose predictions diverge from
//! the knowledge base and triage them into model gaps versus candidates for
//! knowledge-base staleness.
//!
//! Divergence is 1 − row F1 over the same sets the evaluator scores, so the
//! two modules can never disagree. The corroboration signal (did the
//! retrieved context actually mention every predicted label?) is a triage
//! heuristic, not a verdict; findings are meant for human review.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::relation::RelationId;
use crate::score::row_scores;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapClass {
    Aligned,
    ModelGap,
    KbGapCandidate,
}

impl GapClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            GapClass::Aligned => "aligned",
            GapClass::ModelGap => "model_gap",
            GapClass::KbGapCandidate => "kb_gap_candidate",
        }
    }
}

/// Classification thresholds; both configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapThresholds {
    /// Divergence strictly below this is `aligned`.
    pub aligned_below: f64,
    /// Divergence at or above this, with corroborated predictions, is
    /// `kb_gap_candidate`.
    pub kb_gap_at_least: f64,
}

impl Default for GapThresholds {
    fn default() -> Self {
        GapThresholds { aligned_below: 0.25, kb_gap_at_least: 0.75 }
    }
}

/// Input row for the audit: predicted IDs, live knowledge-base IDs, and
/// whether the retrieved context corroborated every predicted label.
#[derive(Debug, Clone)]
pub struct GapRow {
    pub subject_qid: String,
    pub relation: RelationId,
    pub predicted_ids: BTreeSet<String>,
    pub wikidata_ids: BTreeSet<String>,
    pub corroborated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFinding {
    pub subject_qid: String,
    pub relation: RelationId,
    pub predicted_ids: BTreeSet<String>,
    pub wikidata_ids: BTreeSet<String>,
    /// 1 − row F1 over the two ID sets.
    pub divergence: f64,
    pub classification: GapClass,
}

pub fn classify(divergence: f64, corroborated: bool, thresholds: &GapThresholds) -> GapClass {
    if divergence < thresholds.aligned_below {
        GapClass::Aligned
    } else if divergence >= thresholds.kb_gap_at_least && corroborated {
        GapClass::KbGapCandidate
    } else {
        GapClass::ModelGap
    }
}

/// Score and classify every row, returning findings sorted by divergence
/// descending (ties broken by relation then subject for determinism).
pub fn audit_gaps(rows: Vec<GapRow>, thresholds: &GapThresholds) -> Vec<GapFinding> {
    let mut findings: Vec<GapFinding> = rows
        .into_iter()
        .map(|row| {
            let divergence = 1.0 - row_scores(&row.predicted_ids, &row.wikidata_ids).f1;
            let classification = classify(divergence, row.corroborated, thresholds);
            GapFinding {
                subject_qid: row.subject_qid,
                relation: row.relation,
                predicted_ids: row.predicted_ids,
                wikidata_ids: row.wikidata_ids,
                divergence,
                classification,
            }
        })
        .collect();
    findings.sort_by(|a, b| {
        b.divergence
            .partial_cmp(&a.divergence)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| a.relation.cmp(&b.relation))
            .then_with(|| a.subject_qid.cmp(&b.subject_qid))
    });
    findings
}
