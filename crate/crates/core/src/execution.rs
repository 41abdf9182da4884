//! Execution-based evaluation: runs generated and ground-truth queries
//! against a live graph database or a recorded fixture, canonicalizes the
//! outputs, and scores them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetFile;
use crate::lexer::{lex, TokenKind};
use crate::metrics::{gleu_from_tokens, postprocess, EvalPair, LexicalScores, MetricsError};
use crate::profile::normalize_whitespace;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("failed to connect to {uri}: {detail}")]
    ConnectionFailure { uri: String, detail: String },
    #[error("fixture file error: {0}")]
    FixtureIo(#[from] std::io::Error),
    #[error("fixture line {line}: {cause}")]
    FixtureMalformed { line: usize, cause: String },
    #[error("no record had a usable database_ref")]
    AllSkipped,
    #[error("no dataset record for prediction id {0}")]
    UnknownRecordId(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecStatus {
    Ok,
    Error,
    Timeout,
    Skipped,
}

pub type Row = serde_json::Map<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Row>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
}

impl ExecutionOutcome {
    pub fn ok(rows: Vec<Row>) -> Self {
        let canonical = canonicalize(&rows);
        ExecutionOutcome {
            status: ExecStatus::Ok,
            rows: Some(rows),
            canonical: Some(canonical),
            error_detail: None,
        }
    }

    pub fn error(detail: impl Into<String>) -> Self {
        ExecutionOutcome {
            status: ExecStatus::Error,
            rows: None,
            canonical: None,
            error_detail: Some(detail.into()),
        }
    }

    pub fn timeout(detail: impl Into<String>) -> Self {
        ExecutionOutcome {
            status: ExecStatus::Timeout,
            rows: None,
            canonical: None,
            error_detail: Some(detail.into()),
        }
    }

    pub fn skipped() -> Self {
        ExecutionOutcome {
            status: ExecStatus::Skipped,
            rows: None,
            canonical: None,
            error_detail: None,
        }
    }
}

/// Keywords that must never reach a live database. DETACH DELETE is covered
/// by DELETE; DROP guards schema statements.
const WRITE_KEYWORDS: &[&str] = &["CREATE", "MERGE", "DELETE", "SET", "REMOVE", "DROP", "FOREACH"];

/// True when the query carries a write-clause keyword outside strings and
/// comments.
pub fn is_write_query(query: &str) -> bool {
    lex(query).tokens.iter().any(|t| {
        t.kind == TokenKind::Keyword
            && WRITE_KEYWORDS
                .iter()
                .any(|kw| t.text.eq_ignore_ascii_case(kw))
    })
}

/// Renders rows order-insensitively: keys sorted within each row, floats at
/// 10 significant digits, rendered rows sorted lexicographically and joined
/// with newlines.
pub fn canonicalize(rows: &[Row]) -> String {
    let mut rendered: Vec<String> = rows.iter().map(render_row).collect();
    rendered.sort();
    rendered.join("\n")
}

fn render_row(row: &Row) -> String {
    let mut parts: Vec<String> = row
        .iter()
        .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).expect("key"), render_value(v)))
        .collect();
    parts.sort();
    format!("{{{}}}", parts.join(","))
}

fn render_value(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Null => "null".to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.to_string()
            } else if let Some(u) = n.as_u64() {
                u.to_string()
            } else {
                // 10 significant digits collapses float representation noise
                format!("{:.9e}", n.as_f64().unwrap_or(f64::NAN))
            }
        }
        Value::String(s) => serde_json::to_string(s).expect("string"),
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(render_value).collect();
            format!("[{}]", inner.join(","))
        }
        Value::Object(map) => {
            let mut parts: Vec<String> = map
                .iter()
                .map(|(k, v)| {
                    format!("{}:{}", serde_json::to_string(k).expect("key"), render_value(v))
                })
                .collect();
            parts.sort();
            format!("{{{}}}", parts.join(","))
        }
    }
}

/// One backend contract for both the live adapter and the replay fixture.
pub trait QueryExecutor {
    fn execute(&self, database_ref: &str, query: &str) -> ExecutionOutcome;
}

/// Dispatches with the write-clause guard applied before any backend sees
/// the query.
pub fn execute(executor: &dyn QueryExecutor, database_ref: &str, query: &str) -> ExecutionOutcome {
    if is_write_query(query) {
        return ExecutionOutcome::error("write query refused");
    }
    executor.execute(database_ref, normalize_whitespace(query).as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BindingKind {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorBinding {
    pub kind: BindingKind,
    /// connection URI for live, fixture path for replay
    pub target: String,
    #[serde(default)]
    pub user: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_timeout_secs() -> u64 {
    30
}
fn default_max_in_flight() -> usize {
    4
}
fn default_retries() -> usize {
    2
}

impl ExecutorBinding {
    pub fn replay(fixture: impl Into<String>) -> Self {
        ExecutorBinding {
            kind: BindingKind::Replay,
            target: fixture.into(),
            user: None,
            password: None,
            timeout_secs: default_timeout_secs(),
            max_in_flight: default_max_in_flight(),
            retries: default_retries(),
        }
    }

    pub fn open(&self) -> Result<Box<dyn QueryExecutor>, ExecError> {
        match self.kind {
            BindingKind::Replay => Ok(Box::new(ReplayExecutor::load(Path::new(&self.target))?)),
            BindingKind::Live => Ok(Box::new(HttpExecutor::new(self.clone()))),
        }
    }
}

/// One recorded fixture entry, keyed by (database_ref, normalized query).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub database_ref: String,
    pub query_normalized: String,
    #[serde(flatten)]
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Default)]
pub struct ReplayExecutor {
    entries: BTreeMap<(String, String), ExecutionOutcome>,
}

impl ReplayExecutor {
    pub fn load(path: &Path) -> Result<Self, ExecError> {
        let contents = fs::read_to_string(path)?;
        let mut entries = BTreeMap::new();
        for (idx, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry =
                serde_json::from_str(line).map_err(|e| ExecError::FixtureMalformed {
                    line: idx + 1,
                    cause: e.to_string(),
                })?;
            let mut outcome = entry.outcome;
            // canonical is derivable; recompute so hand-edited fixtures stay consistent
            if let Some(rows) = &outcome.rows {
                outcome.canonical = Some(canonicalize(rows));
            }
            entries.insert((entry.database_ref, entry.query_normalized), outcome);
        }
        Ok(ReplayExecutor { entries })
    }
}

impl QueryExecutor for ReplayExecutor {
    fn execute(&self, database_ref: &str, query: &str) -> ExecutionOutcome {
        let key = (database_ref.to_string(), normalize_whitespace(query));
        match self.entries.get(&key) {
            Some(outcome) => outcome.clone(),
            None => ExecutionOutcome::skipped(),
        }
    }
}

/// Live adapter speaking the Neo4j HTTP transaction API
/// (`POST {uri}/db/{database}/tx/commit`).
pub struct HttpExecutor {
    binding: ExecutorBinding,
    client: reqwest::blocking::Client,
}

impl HttpExecutor {
    pub fn new(binding: ExecutorBinding) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(binding.timeout_secs))
            .build()
            .expect("http client");
        HttpExecutor { binding, client }
    }

    fn execute_once(&self, database_ref: &str, query: &str) -> Result<ExecutionOutcome, reqwest::Error> {
        let url = format!(
            "{}/db/{}/tx/commit",
            self.binding.target.trim_end_matches('/'),
            database_ref
        );
        let body = serde_json::json!({ "statements": [{ "statement": query }] });
        let mut request = self.client.post(&url).json(&body);
        if let Some(user) = &self.binding.user {
            request = request.basic_auth(user, self.binding.password.as_deref());
        }
        let response: serde_json::Value = request.send()?.error_for_status()?.json()?;
        Ok(parse_http_response(&response))
    }
}

fn parse_http_response(response: &serde_json::Value) -> ExecutionOutcome {
    if let Some(errors) = response.get("errors").and_then(|e| e.as_array()) {
        if let Some(first) = errors.first() {
            let detail = first
                .get("message")
                .and_then(|m| m.as_str())
                .unwrap_or("query error")
                .to_string();
            return ExecutionOutcome::error(detail);
        }
    }
    let Some(result) = response
        .get("results")
        .and_then(|r| r.as_array())
        .and_then(|r| r.first())
    else {
        return ExecutionOutcome::error("malformed response: no results");
    };
    let columns: Vec<String> = result
        .get("columns")
        .and_then(|c| c.as_array())
        .map(|cols| {
            cols.iter()
                .map(|c| c.as_str().unwrap_or_default().to_string())
                .collect()
        })
        .unwrap_or_default();
    let mut rows = Vec::new();
    if let Some(data) = result.get("data").and_then(|d| d.as_array()) {
        for item in data {
            let mut row = Row::new();
            if let Some(values) = item.get("row").and_then(|r| r.as_array()) {
                for (col, value) in columns.iter().zip(values) {
                    row.insert(col.clone(), value.clone());
                }
            }
            rows.push(row);
        }
    }
    ExecutionOutcome::ok(rows)
}

impl QueryExecutor for HttpExecutor {
    fn execute(&self, database_ref: &str, query: &str) -> ExecutionOutcome {
        let mut last_err = None;
        for _ in 0..=self.binding.retries {
            match self.execute_once(database_ref, query) {
                Ok(outcome) => return outcome,
                Err(e) if e.is_timeout() => return ExecutionOutcome::timeout(e.to_string()),
                Err(e) if e.is_connect() => last_err = Some(e),
                Err(e) => return ExecutionOutcome::error(e.to_string()),
            }
        }
        ExecutionOutcome::error(format!(
            "connection failed after {} attempts: {}",
            self.binding.retries + 1,
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageStats {
    /// pairs scored (reference executed successfully)
    pub evaluated: usize,
    /// records with no database_ref
    pub skipped_no_database: usize,
    /// reference query failed or was absent from the fixture
    pub reference_invalid: usize,
    /// generated side failed while the reference succeeded
    pub generated_failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub scores: LexicalScores,
    pub coverage: CoverageStats,
}

/// Scores pairs by executing both sides and comparing canonical outputs.
/// Reference failures exclude the pair; generated failures score 0 and
/// contribute an empty hypothesis to GLEU.
pub fn execution_scores(
    pairs: &[EvalPair],
    executor: &dyn QueryExecutor,
    dataset: &DatasetFile,
) -> Result<ExecutionReport, ExecError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput.into());
    }
    let by_id: BTreeMap<&str, &crate::dataset::DatasetRecord> = dataset
        .records()
        .iter()
        .map(|r| (r.record_id.as_str(), r))
        .collect();

    let mut coverage = CoverageStats::default();
    let mut exact_hits = 0usize;
    let mut gleu_pairs: Vec<(Vec<String>, Vec<String>)> = Vec::new();

    for pair in pairs {
        let record = by_id
            .get(pair.record_id.as_str())
            .ok_or_else(|| ExecError::UnknownRecordId(pair.record_id.clone()))?;
        let Some(database_ref) = record.database_ref.as_deref() else {
            coverage.skipped_no_database += 1;
            continue;
        };
        let reference_outcome = execute(executor, database_ref, &pair.reference);
        let Some(reference_canonical) = reference_outcome.canonical else {
            coverage.reference_invalid += 1;
            continue;
        };
        coverage.evaluated += 1;
        let reference_lines = to_lines(&reference_canonical);

        let generated_outcome = execute(executor, database_ref, &postprocess(&pair.generated));
        match generated_outcome.canonical {
            Some(generated_canonical) => {
                if generated_canonical == reference_canonical {
                    exact_hits += 1;
                }
                gleu_pairs.push((to_lines(&generated_canonical), reference_lines));
            }
            None => {
                coverage.generated_failed += 1;
                gleu_pairs.push((Vec::new(), reference_lines));
            }
        }
    }

    if coverage.evaluated == 0 {
        return Err(ExecError::AllSkipped);
    }
    Ok(ExecutionReport {
        scores: LexicalScores {
            google_bleu: gleu_from_tokens(&gleu_pairs, 4),
            exact_match: exact_hits as f64 / coverage.evaluated as f64,
            n: coverage.evaluated,
        },
        coverage,
    })
}

// GLEU over canonical outputs treats each rendered row line as one token
fn to_lines(canonical: &str) -> Vec<String> {
    if canonical.is_empty() {
        return Vec::new();
    }
    canonical.lines().map(String::from).collect()
}

/// Executes each (database_ref, query) once against a live binding and
/// stores the outcomes keyed by normalized query text.
pub fn record_fixture(
    queries: &[(String, String)],
    executor: &dyn QueryExecutor,
    out: &Path,
) -> Result<PathBuf, ExecError> {
    let mut seen: BTreeMap<(String, String), ExecutionOutcome> = BTreeMap::new();
    for (database_ref, query) in queries {
        let key = (database_ref.clone(), normalize_whitespace(query));
        seen.entry(key.clone())
            .or_insert_with(|| execute(executor, database_ref, query));
    }
    let file = fs::File::create(out)?;
    let mut writer = std::io::BufWriter::new(file);
    for ((database_ref, query_normalized), outcome) in seen {
        let entry = FixtureEntry {
            database_ref,
            query_normalized,
            outcome,
        };
        serde_json::to_writer(&mut writer, &entry).map_err(std::io::Error::other)?;
        writeln!(writer)?;
    }
    Ok(out.to_path_buf())
}
