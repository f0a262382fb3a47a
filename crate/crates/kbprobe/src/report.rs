//! Report rendering: the per-relation text table (columns P, R, F1), the
//! machine-readable JSON report, and run-vs-run comparisons.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use kbprobe_core::relation::RelationId;
use kbprobe_core::score::EvaluationReport;

const NAME_WIDTH: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write report {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read report {path}: {detail}")]
    Read { path: PathBuf, detail: String },
    #[error("reports cover different relations: left has {left_only:?}, right has {right_only:?}")]
    KeyMismatch {
        left_only: Vec<RelationId>,
        right_only: Vec<RelationId>,
    },
}

/// Plain-text table with one row per relation, the zero-object subset row,
/// and the overall macro average.
pub fn render_text_table(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<NAME_WIDTH$} {:>6} {:>6} {:>6} {:>6}\n",
        "Relation", "P", "R", "F1", "Rows"
    ));
    out.push_str(&format!("{}\n", "-".repeat(NAME_WIDTH + 28)));
    for (relation, score) in &report.per_relation {
        out.push_str(&format!(
            "{:<NAME_WIDTH$} {:>6.3} {:>6.3} {:>6.3} {:>6}\n",
            relation.as_str(),
            score.precision,
            score.recall,
            score.f1,
            score.row_count
        ));
    }
    out.push_str(&format!("{}\n", "-".repeat(NAME_WIDTH + 28)));
    match &report.zero_object {
        Some(zero) => out.push_str(&format!(
            "{:<NAME_WIDTH$} {:>6.3} {:>6.3} {:>6.3} {:>6}\n",
            "Zero-object cases", zero.precision, zero.recall, zero.f1, "-"
        )),
        None => out.push_str(&format!(
            "{:<NAME_WIDTH$} {:>6} {:>6} {:>6} {:>6}\n",
            "Zero-object cases", "-", "-", "-", "-"
        )),
    }
    out.push_str(&format!(
        "{:<NAME_WIDTH$} {:>6.3} {:>6.3} {:>6.3} {:>6}\n",
        "Average", report.overall.precision, report.overall.recall, report.overall.f1, "-"
    ));
    out
}

pub fn write_report_json(path: &Path, report: &EvaluationReport) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_report_json(path: &Path) -> Result<EvaluationReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::Read {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| ReportError::Read {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Signed per-relation F1 deltas between two reports over the same keys.
pub fn render_compare_table(
    left: &EvaluationReport,
    right: &EvaluationReport,
    left_name: &str,
    right_name: &str,
) -> Result<String, ReportError> {
    let left_keys: BTreeSet<RelationId> = left.per_relation.keys().copied().collect();
    let right_keys: BTreeSet<RelationId> = right.per_relation.keys().copied().collect();
    if left_keys != right_keys {
        return Err(ReportError::KeyMismatch {
            left_only: left_keys.difference(&right_keys).copied().collect(),
            right_only: right_keys.difference(&left_keys).copied().collect(),
        });
    }

    let mut out = String::new();
    out.push_str(&format!(
        "{:<NAME_WIDTH$} {:>10} {:>10} {:>8}\n",
        "Relation",
        truncate(left_name, 10),
        truncate(right_name, 10),
        "dF1"
    ));
    out.push_str(&format!("{}\n", "-".repeat(NAME_WIDTH + 31)));
    for relation in &left_keys {
        let l = left.per_relation[relation].f1;
        let r = right.per_relation[relation].f1;
        out.push_str(&format!(
            "{:<NAME_WIDTH$} {:>10.3} {:>10.3} {:>+8.3}\n",
            relation.as_str(),
            l,
            r,
            r - l
        ));
    }
    out.push_str(&format!("{}\n", "-".repeat(NAME_WIDTH + 31)));
    out.push_str(&format!(
        "{:<NAME_WIDTH$} {:>10.3} {:>10.3} {:>+8.3}\n",
        "Average",
        left.overall.f1,
        right.overall.f1,
        right.overall.f1 - left.overall.f1
    ));
    Ok(out)
}

fn truncate(s: &str, width: usize) -> String {
    s.chars().take(width).collect()
}
