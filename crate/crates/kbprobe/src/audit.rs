//! Knowledge-gap audit: regenerate ground truth for predicted rows, diff,
//! and rank the divergent subjects for human review.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kbprobe_core::gap::{audit_gaps, GapClass, GapFinding, GapRow, GapThresholds};
use kbprobe_core::relation::RelationId;
use kbprobe_core::score::score_set;
use kbprobe_core::score::ScoreOn;

use crate::dataset::{self, DatasetError};
use crate::sparql::{SparqlError, TruthSource};

pub const FINDINGS_JSONL_FILE: &str = "findings.jsonl";
pub const FINDINGS_TEXT_FILE: &str = "findings.txt";

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sparql(#[from] SparqlError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub findings: Vec<GapFinding>,
    pub skipped_relations: Vec<RelationId>,
    pub aligned: usize,
    pub model_gaps: usize,
    pub kb_gap_candidates: usize,
}

/// Context texts per (subject, relation), read from a run's contexts file.
pub fn load_contexts(path: &Path) -> Result<BTreeMap<(String, RelationId), String>, AuditError> {
    #[derive(serde::Deserialize)]
    struct ContextRow {
        subject_qid: String,
        relation: RelationId,
        text: String,
    }
    let text = std::fs::read_to_string(path).map_err(|source| AuditError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: ContextRow = serde_json::from_str(line).map_err(|e| AuditError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
        })?;
        map.insert((row.subject_qid, row.relation), row.text);
    }
    Ok(map)
}

/// Plain substring corroboration: every predicted label appears in the
/// retrieved context, case-insensitively. An empty prediction corroborates
/// nothing.
fn corroborated(labels: &[String], context: Option<&String>) -> bool {
    let Some(context) = context else { return false };
    if labels.is_empty() {
        return false;
    }
    let haystack = context.to_lowercase();
    labels
        .iter()
        .filter(|l| !l.trim().is_empty())
        .all(|label| haystack.contains(&label.trim().to_lowercase()))
}

/// Diff predictions against a truth source and rank the divergence.
///
/// Relations with no configured Wikidata property cannot be audited; their
/// rows are skipped and reported, not failed.
pub fn run_audit(
    predictions_path: &Path,
    truth: &dyn TruthSource,
    auditable: impl Fn(RelationId) -> bool,
    contexts: &BTreeMap<(String, RelationId), String>,
    thresholds: &GapThresholds,
    out_dir: &Path,
) -> Result<AuditOutcome, AuditError> {
    let predictions = dataset::load_prediction_rows(predictions_path)?;

    let mut rows = Vec::new();
    let mut skipped_relations = Vec::new();
    for prediction in &predictions {
        if !auditable(prediction.relation) {
            if !skipped_relations.contains(&prediction.relation) {
                log::warn!(
                    "relation {} has no Wikidata property configured; skipping its rows",
                    prediction.relation
                );
                skipped_relations.push(prediction.relation);
            }
            continue;
        }
        let wikidata_ids = truth.fetch(&prediction.subject_qid, prediction.relation)?;
        let key = (prediction.subject_qid.clone(), prediction.relation);
        rows.push(GapRow {
            subject_qid: prediction.subject_qid.clone(),
            relation: prediction.relation,
            predicted_ids: score_set(prediction, ScoreOn::Ids),
            wikidata_ids,
            corroborated: corroborated(&prediction.object_labels, contexts.get(&key)),
        });
    }

    let findings = audit_gaps(rows, thresholds);

    std::fs::create_dir_all(out_dir).map_err(|source| AuditError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let jsonl_path = out_dir.join(FINDINGS_JSONL_FILE);
    let mut jsonl = String::new();
    for finding in &findings {
        jsonl.push_str(&serde_json::to_string(finding).expect("findings serialize"));
        jsonl.push('\n');
    }
    std::fs::write(&jsonl_path, jsonl).map_err(|source| AuditError::Io {
        path: jsonl_path.clone(),
        source,
    })?;

    let text_path = out_dir.join(FINDINGS_TEXT_FILE);
    std::fs::write(&text_path, render_findings(&findings, &skipped_relations)).map_err(
        |source| AuditError::Io { path: text_path, source },
    )?;

    let count = |class: GapClass| findings.iter().filter(|f| f.classification == class).count();
    Ok(AuditOutcome {
        aligned: count(GapClass::Aligned),
        model_gaps: count(GapClass::ModelGap),
        kb_gap_candidates: count(GapClass::KbGapCandidate),
        findings,
        skipped_relations,
    })
}

fn render_findings(findings: &[GapFinding], skipped: &[RelationId]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<30} {:>10}  {:<17} {}\n",
        "Subject", "Relation", "Divergence", "Class", "Predicted vs Wikidata"
    ));
    out.push_str(&format!("{}\n", "-".repeat(100)));
    for finding in findings {
        let predicted: Vec<&str> = finding.predicted_ids.iter().map(String::as_str).collect();
        let wikidata: Vec<&str> = finding.wikidata_ids.iter().map(String::as_str).collect();
        out.push_str(&format!(
            "{:<12} {:<30} {:>10.3}  {:<17} [{}] vs [{}]\n",
            finding.subject_qid,
            finding.relation.as_str(),
            finding.divergence,
            finding.classification.as_str(),
            predicted.join(", "),
            wikidata.join(", ")
        ));
    }
    if !skipped.is_empty() {
        out.push('\n');
        let names: Vec<&str> = skipped.iter().map(|r| r.as_str()).collect();
        out.push_str(&format!(
            "Skipped (no Wikidata property configured): {}\n",
            names.join(", ")
        ));
    }
    out
}
