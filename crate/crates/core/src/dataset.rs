//! Dataset record model, JSONL ingestion/emission, and content hashing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file not found: {0}")]
    MissingFile(String),
    #[error("line {line}: {cause}")]
    MalformedLine { line: usize, cause: String },
    #[error("duplicate record_id {id} at line {line}")]
    DuplicateRecordId { id: String, line: usize },
    #[error("dataset contains no valid records")]
    EmptyDataset,
    #[error("refusing to write an empty dataset")]
    EmptyInput,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

fn default_split() -> Split {
    Split::Train
}

/// One question/schema/Cypher instance. Unknown input fields are kept in
/// `extra` so write-after-read preserves them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(rename = "instance_id", default, skip_serializing_if = "String::is_empty")]
    pub record_id: String,
    pub question: String,
    #[serde(rename = "schema", default)]
    pub schema_text: String,
    pub cypher: String,
    #[serde(default)]
    pub data_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub database_ref: Option<String>,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl DatasetRecord {
    /// Field-level validity check shared by strict and lenient loading.
    fn validity_error(&self) -> Option<String> {
        if self.question.trim().is_empty() {
            return Some("empty \"question\" field".into());
        }
        if self.cypher.trim().is_empty() {
            return Some("empty \"cypher\" field".into());
        }
        None
    }
}

/// Deterministic content hash used when the input carries no instance_id.
/// Identical (question, cypher, data_source, split) always map to the same id.
pub fn derive_record_id(record: &DatasetRecord) -> String {
    let mut hasher = Sha256::new();
    for part in [
        record.question.as_str(),
        record.cypher.as_str(),
        record.data_source.as_str(),
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher.update(match record.split {
        Split::Train => [0u8],
        Split::Test => [1u8],
    });
    let digest = hasher.finalize();
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub total: usize,
    pub per_split: BTreeMap<String, usize>,
    pub per_data_source: BTreeMap<String, usize>,
    pub per_database_ref: BTreeMap<String, usize>,
}

impl DatasetCounts {
    pub fn from_records(records: &[DatasetRecord]) -> Self {
        let mut counts = DatasetCounts {
            total: records.len(),
            ..Default::default()
        };
        for r in records {
            *counts.per_split.entry(r.split.to_string()).or_default() += 1;
            *counts
                .per_data_source
                .entry(r.data_source.clone())
                .or_default() += 1;
            if let Some(db) = &r.database_ref {
                *counts.per_database_ref.entry(db.clone()).or_default() += 1;
            }
        }
        counts
    }
}

/// Immutable after construction; counts always match the record sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    records: Vec<DatasetRecord>,
    counts: DatasetCounts,
}

impl DatasetFile {
    pub fn new(records: Vec<DatasetRecord>) -> Self {
        let counts = DatasetCounts::from_records(&records);
        DatasetFile { records, counts }
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn counts(&self) -> &DatasetCounts {
        &self.counts
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn record_by_id(&self, id: &str) -> Option<&DatasetRecord> {
        self.records.iter().find(|r| r.record_id == id)
    }

    /// Hash over the serialized record sequence; order-sensitive so any
    /// field or ordering change yields a new manifest hash.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for r in &self.records {
            let line = serde_json::to_string(r).expect("record serializes");
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineIssue {
    pub line: usize,
    pub cause: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    pub errors: Vec<LineIssue>,
}

#[derive(Debug)]
pub struct LoadedDataset {
    pub file: DatasetFile,
    pub report: ValidationReport,
}

/// Reads a JSONL dataset. Strict mode aborts on the first bad line; lenient
/// mode keeps valid lines and reports the rest.
pub fn load_dataset(path: &Path, strict: bool) -> Result<LoadedDataset, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.display().to_string()));
    }
    let contents = fs::read_to_string(path)?;
    let mut records: Vec<DatasetRecord> = Vec::new();
    let mut seen_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut report = ValidationReport::default();

    for (idx, raw) in contents.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        report.total += 1;
        let parsed: Result<DatasetRecord, _> = serde_json::from_str(raw);
        let mut record = match parsed {
            Ok(r) => r,
            Err(e) => {
                let cause = format!("invalid record: {e}");
                if strict {
                    return Err(DatasetError::MalformedLine { line: line_no, cause });
                }
                report.invalid += 1;
                report.errors.push(LineIssue { line: line_no, cause });
                continue;
            }
        };
        if let Some(cause) = record.validity_error() {
            if strict {
                return Err(DatasetError::MalformedLine { line: line_no, cause });
            }
            report.invalid += 1;
            report.errors.push(LineIssue { line: line_no, cause });
            continue;
        }
        if record.record_id.is_empty() {
            record.record_id = derive_record_id(&record);
        }
        if let Some(&first) = seen_ids.get(&record.record_id) {
            if strict {
                return Err(DatasetError::DuplicateRecordId {
                    id: record.record_id,
                    line: line_no,
                });
            }
            report.invalid += 1;
            report.errors.push(LineIssue {
                line: line_no,
                cause: format!(
                    "duplicate record_id {} (first seen at line {first})",
                    record.record_id
                ),
            });
            continue;
        }
        seen_ids.insert(record.record_id.clone(), line_no);
        report.valid += 1;
        records.push(record);
    }

    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(LoadedDataset {
        file: DatasetFile::new(records),
        report,
    })
}

/// Emits one JSON object per line in the given order; a subsequent
/// `load_dataset` reproduces the records field-for-field.
pub fn write_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, question: &str, cypher: &str, source: &str) -> DatasetRecord {
        DatasetRecord {
            record_id: id.to_string(),
            question: question.to_string(),
            schema_text: String::new(),
            cypher: cypher.to_string(),
            data_source: source.to_string(),
            database_ref: None,
            split: Split::Train,
            extra: BTreeMap::new(),
        }
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_three_valid_lines() {
        let f = write_lines(&[
            r#"{"question":"q1","schema":"","cypher":"MATCH (n) RETURN n","data_source":"a"}"#,
            r#"{"question":"q2","schema":"","cypher":"RETURN 1","data_source":"a"}"#,
            r#"{"question":"q3","schema":"","cypher":"RETURN 2","data_source":"b"}"#,
        ]);
        let loaded = load_dataset(f.path(), true).unwrap();
        assert_eq!(loaded.file.len(), 3);
        assert_eq!(loaded.file.counts().per_data_source["a"], 2);
        assert_eq!(
            *loaded.file.counts(),
            DatasetCounts::from_records(loaded.file.records())
        );
    }

    #[test]
    fn strict_rejects_empty_cypher() {
        let f = write_lines(&[
            r#"{"question":"q1","schema":"","cypher":"RETURN 1","data_source":"a"}"#,
            r#"{"question":"q2","schema":"","cypher":"  ","data_source":"a"}"#,
        ]);
        match load_dataset(f.path(), true) {
            Err(DatasetError::MalformedLine { line, cause }) => {
                assert_eq!(line, 2);
                assert!(cause.contains("cypher"));
            }
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn lenient_keeps_valid_lines() {
        let f = write_lines(&[
            r#"{"question":"q1","schema":"","cypher":"RETURN 1","data_source":"a"}"#,
            r#"not json"#,
            r#"{"question":"q3","schema":"","cypher":"RETURN 3","data_source":"a"}"#,
        ]);
        let loaded = load_dataset(f.path(), false).unwrap();
        assert_eq!(loaded.file.len(), 2);
        assert_eq!(loaded.report.invalid, 1);
        assert_eq!(loaded.report.errors[0].line, 2);
    }

    #[test]
    fn per_source_counts_over_forty_lines() {
        let mut lines = Vec::new();
        for i in 0..40 {
            let source = ["s0", "s1", "s2", "s3"][i % 4];
            lines.push(format!(
                r#"{{"question":"q{i}","schema":"","cypher":"RETURN {i}","data_source":"{source}"}}"#
            ));
        }
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let f = write_lines(&refs);
        let loaded = load_dataset(f.path(), true).unwrap();
        for s in ["s0", "s1", "s2", "s3"] {
            assert_eq!(loaded.file.counts().per_data_source[s], 10);
        }
    }

    #[test]
    fn round_trip_preserves_order_and_fields() {
        let records: Vec<DatasetRecord> = (0..5)
            .map(|i| {
                let mut r = record(&format!("id{i}"), &format!("q{i}"), "RETURN 1", "src");
                r.extra
                    .insert("note".into(), serde_json::json!(format!("extra-{i}")));
                r
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        write_dataset(&records, &path).unwrap();
        let loaded = load_dataset(&path, true).unwrap();
        assert_eq!(loaded.file.records(), &records[..]);
    }

    #[test]
    fn round_trip_embedded_newlines() {
        let mut r = record("id0", "line one\nline two\ttab", "RETURN 1\nLIMIT 1", "src");
        r.schema_text = "a\nb".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        write_dataset(std::slice::from_ref(&r), &path).unwrap();
        let loaded = load_dataset(&path, true).unwrap();
        assert_eq!(loaded.file.records()[0], r);
    }

    #[test]
    fn write_empty_input_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_dataset(&[], &dir.path().join("out.jsonl")),
            Err(DatasetError::EmptyInput)
        ));
    }

    #[test]
    fn write_to_unwritable_path_fails() {
        let r = record("id0", "q", "RETURN 1", "src");
        let err = write_dataset(
            std::slice::from_ref(&r),
            Path::new("/nonexistent-dir/out.jsonl"),
        );
        assert!(matches!(err, Err(DatasetError::Io(_))));
    }

    #[test]
    fn derived_id_is_deterministic_and_content_sensitive() {
        let a = record("", "q", "MATCH (n) RETURN n", "src");
        let b = record("", "q", "MATCH (m) RETURN n", "src");
        assert_eq!(derive_record_id(&a), derive_record_id(&a));
        assert_ne!(derive_record_id(&a), derive_record_id(&b));
        let empty_source = record("", "q", "RETURN 1", "");
        assert!(!derive_record_id(&empty_source).is_empty());
    }

    #[test]
    fn duplicate_id_rejected_in_strict_mode() {
        let f = write_lines(&[
            r#"{"instance_id":"dup","question":"q1","schema":"","cypher":"RETURN 1","data_source":"a"}"#,
            r#"{"instance_id":"dup","question":"q2","schema":"","cypher":"RETURN 2","data_source":"a"}"#,
        ]);
        assert!(matches!(
            load_dataset(f.path(), true),
            Err(DatasetError::DuplicateRecordId { .. })
        ));
        let lenient = load_dataset(f.path(), false).unwrap();
        assert_eq!(lenient.file.len(), 1);
        assert_eq!(lenient.report.invalid, 1);
    }
}
