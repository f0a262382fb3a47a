//! Loading and writing challenge-format JSONL files.
//!
//! One JSON object per line, UTF-8, `\n` line endings. Loaders validate
//! per line and report failures with the line number; writers emit keys in
//! a stable order so identical rows always produce identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use kbprobe_core::record::{is_valid_qid, GroundTruthRecord, QueryRecord};

/// Objects per row admitted by the dataset shape.
pub const MAX_OBJECTS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Line {
        path: PathBuf,
        line: usize,
        detail: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

fn line_err(path: &Path, line: usize, detail: impl Into<String>) -> DatasetError {
    DatasetError::Line { path: path.to_path_buf(), line, detail: detail.into() }
}

fn for_each_line<T, F>(path: &Path, mut parse: F) -> Result<Vec<T>, DatasetError>
where
    F: FnMut(usize, &str) -> Result<T, DatasetError>,
{
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse(index + 1, &line)?);
    }
    Ok(rows)
}

fn check_subject(path: &Path, line: usize, qid: &str) -> Result<(), DatasetError> {
    if !is_valid_qid(qid) {
        return Err(line_err(
            path,
            line,
            format!("SubjectEntityID `{qid}` does not match Q[0-9]+"),
        ));
    }
    Ok(())
}

/// The `[""]` encoding of "no objects" normalized to empty lists.
fn normalize_empty(record: &mut GroundTruthRecord) {
    let labels_empty =
        !record.object_labels.is_empty() && record.object_labels.iter().all(|l| l.is_empty());
    let ids_empty = record.object_ids.iter().all(|l| l.is_empty());
    if labels_empty && ids_empty {
        record.object_labels.clear();
        record.object_ids.clear();
    }
}

/// Load query rows (no object columns expected, extra columns ignored).
pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>, DatasetError> {
    for_each_line(path, |line_no, line| {
        let record: QueryRecord = serde_json::from_str(line)
            .map_err(|e| line_err(path, line_no, e.to_string()))?;
        check_subject(path, line_no, &record.subject_qid)?;
        Ok(record)
    })
}

/// Load ground-truth rows with full invariant checking: parallel object
/// lists, at most [`MAX_OBJECTS`] objects, and subject QID shape. `[""]`
/// and `[]` both load as zero objects.
pub fn load_truth(path: &Path) -> Result<Vec<GroundTruthRecord>, DatasetError> {
    for_each_line(path, |line_no, line| {
        let mut record: GroundTruthRecord = serde_json::from_str(line)
            .map_err(|e| line_err(path, line_no, e.to_string()))?;
        check_subject(path, line_no, &record.subject_qid)?;
        if record.object_labels.len() != record.object_ids.len() {
            return Err(line_err(
                path,
                line_no,
                format!(
                    "object lists are not parallel ({} labels vs {} ids)",
                    record.object_labels.len(),
                    record.object_ids.len()
                ),
            ));
        }
        normalize_empty(&mut record);
        if record.object_labels.len() > MAX_OBJECTS {
            return Err(line_err(
                path,
                line_no,
                format!(
                    "{} objects exceed the 0-{MAX_OBJECTS} range",
                    record.object_labels.len()
                ),
            ));
        }
        Ok(record)
    })
}

/// Load prediction rows: same shape as truth but without the cardinality
/// cap, since a model may over-predict.
pub fn load_prediction_rows(path: &Path) -> Result<Vec<GroundTruthRecord>, DatasetError> {
    for_each_line(path, |line_no, line| {
        let mut record: GroundTruthRecord = serde_json::from_str(line)
            .map_err(|e| line_err(path, line_no, e.to_string()))?;
        check_subject(path, line_no, &record.subject_qid)?;
        if record.object_labels.len() != record.object_ids.len() {
            return Err(line_err(
                path,
                line_no,
                format!(
                    "object lists are not parallel ({} labels vs {} ids)",
                    record.object_labels.len(),
                    record.object_ids.len()
                ),
            ));
        }
        normalize_empty(&mut record);
        Ok(record)
    })
}

/// Write rows in input order with stable key order; empty answers are
/// written as `[]`. Byte-identical output for identical rows.
pub fn write_prediction_rows(
    path: &Path,
    rows: &[GroundTruthRecord],
) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("records serialize");
        writeln!(writer, "{line}").map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}
