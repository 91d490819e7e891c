//! Record and query types shared by every stage of the pipeline.
//!
//! A record travels the wire as one JSON object per line. `validate_record`
//! is the single admission gate: everything downstream (matching, segment
//! encoding, query execution) may assume its invariants hold.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rules::VersionTag;

/// Content fields a record may carry and a rule may target.
pub const CONTENT_FIELDS: [&str; 5] = ["content1", "content2", "content3", "content4", "content5"];

/// Bounds on how many content fields a valid record carries.
pub const MIN_CONTENT_FIELDS: usize = 2;
pub const MAX_CONTENT_FIELDS: usize = 5;

/// Returns true if `name` is one of the recognized content field names.
pub fn is_content_field(name: &str) -> bool {
    CONTENT_FIELDS.contains(&name)
}

/// A validated log record.
///
/// Invariants (enforced by `validate_record`, assumed everywhere else):
/// - `timestamp` is milliseconds since the epoch, non-negative
/// - `contents` holds between 2 and 5 entries, keyed by recognized content
///   field names, every value non-empty
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub timestamp: i64,
    pub status: String,
    pub event_type: String,
    pub contents: BTreeMap<String, String>,
}

impl LogRecord {
    /// Serializes to the one-line JSON wire form.
    pub fn to_wire_json(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert("timestamp".into(), serde_json::json!(self.timestamp));
        map.insert("status".into(), serde_json::json!(self.status));
        map.insert("event_type".into(), serde_json::json!(self.event_type));
        for (k, v) in &self.contents {
            map.insert(k.clone(), serde_json::json!(v));
        }
        serde_json::Value::Object(map).to_string()
    }

    /// Field accessor covering both fixed and content fields; None for
    /// unknown names.
    pub fn field(&self, name: &str) -> Option<&str> {
        match name {
            "status" => Some(&self.status),
            "event_type" => Some(&self.event_type),
            _ => self.contents.get(name).map(String::as_str),
        }
    }
}

/// Why a raw record was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("line is not a JSON object: {0}")]
    NotAnObject(String),
    #[error("missing required field {0}")]
    MissingField(&'static str),
    #[error("field {field} has wrong type, expected {expected}")]
    WrongType { field: String, expected: &'static str },
    #[error("bad timestamp {0}: must be a non-negative integer of milliseconds")]
    BadTimestamp(String),
    #[error("record carries {0} content fields, expected between 2 and 5")]
    ContentCountOutOfRange(usize),
    #[error("content field {0} is empty")]
    EmptyContent(String),
    #[error("unknown field {0}")]
    UnknownField(String),
}

/// Parses one wire line and validates it.
pub fn parse_wire_line(line: &str) -> Result<LogRecord, RecordError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| RecordError::NotAnObject(e.to_string()))?;
    validate_record(&value)
}

/// Admission gate: checks every record invariant and names the violated one.
pub fn validate_record(raw: &serde_json::Value) -> Result<LogRecord, RecordError> {
    let obj = raw
        .as_object()
        .ok_or_else(|| RecordError::NotAnObject(format!("got {}", type_name(raw))))?;

    let ts_value = obj
        .get("timestamp")
        .ok_or(RecordError::MissingField("timestamp"))?;
    let timestamp = ts_value
        .as_i64()
        .filter(|t| *t >= 0)
        .ok_or_else(|| RecordError::BadTimestamp(ts_value.to_string()))?;

    let status = required_string(obj, "status")?;
    let event_type = required_string(obj, "event_type")?;

    let mut contents = BTreeMap::new();
    for (key, value) in obj {
        if matches!(key.as_str(), "timestamp" | "status" | "event_type") {
            continue;
        }
        if !is_content_field(key) {
            return Err(RecordError::UnknownField(key.clone()));
        }
        let text = value.as_str().ok_or_else(|| RecordError::WrongType {
            field: key.clone(),
            expected: "string",
        })?;
        if text.is_empty() {
            return Err(RecordError::EmptyContent(key.clone()));
        }
        contents.insert(key.clone(), text.to_string());
    }
    if contents.len() < MIN_CONTENT_FIELDS || contents.len() > MAX_CONTENT_FIELDS {
        return Err(RecordError::ContentCountOutOfRange(contents.len()));
    }

    Ok(LogRecord {
        timestamp,
        status,
        event_type,
        contents,
    })
}

fn required_string(
    obj: &serde_json::Map<String, serde_json::Value>,
    field: &'static str,
) -> Result<String, RecordError> {
    let value = obj.get(field).ok_or(RecordError::MissingField(field))?;
    value
        .as_str()
        .map(str::to_string)
        .ok_or(RecordError::WrongType {
            field: field.to_string(),
            expected: "string",
        })
}

fn type_name(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "bool",
        serde_json::Value::Number(_) => "number",
        serde_json::Value::String(_) => "string",
        serde_json::Value::Array(_) => "array",
        serde_json::Value::Object(_) => "object",
    }
}

/// How match results are laid out in segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnrichmentMode {
    /// One variable-length list of matched rule ids per record.
    SparseList,
    /// One boolean column per rule id in `1..=width`.
    DenseBoolean { width: u32 },
}

/// A record plus the rule ids that matched it.
///
/// `matched_rule_ids` is strictly increasing; the constructor sorts and
/// deduplicates so downstream consumers can binary-search it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrichedRecord {
    pub base: LogRecord,
    matched_rule_ids: Vec<u32>,
    pub engine_version: VersionTag,
}

impl EnrichedRecord {
    pub fn new(base: LogRecord, mut matched: Vec<u32>, engine_version: VersionTag) -> Self {
        matched.sort_unstable();
        matched.dedup();
        EnrichedRecord {
            base,
            matched_rule_ids: matched,
            engine_version,
        }
    }

    pub fn matched_rule_ids(&self) -> &[u32] {
        &self.matched_rule_ids
    }

    pub fn matched(&self, rule_id: u32) -> bool {
        self.matched_rule_ids.binary_search(&rule_id).is_ok()
    }

    /// Dense projection: true for each rule id in `1..=width` that matched.
    pub fn dense_row(&self, width: u32) -> impl Iterator<Item = bool> + '_ {
        (1..=width).map(|id| self.matched(id))
    }
}

/// Whether a query returns matching rows or just their count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    ReturnRows,
    Count,
}

/// One contains-term condition on a single field.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryPredicate {
    pub field: String,
    pub term: String,
}

/// A validated query: 1 or 2 conjunctive contains-term predicates, an output
/// mode, and an optional closed time range on `timestamp`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub predicates: Vec<QueryPredicate>,
    pub mode: QueryMode,
    pub time_range: Option<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryValidationError {
    #[error("query must carry 1 or 2 predicates, got {0}")]
    PredicateCountOutOfRange(usize),
    #[error("predicate term is empty")]
    EmptyTerm,
    #[error("unknown query field {0}")]
    UnknownField(String),
    #[error("empty time range {0}..{1}")]
    EmptyTimeRange(i64, i64),
}

impl Query {
    pub fn validate(&self) -> Result<(), QueryValidationError> {
        if self.predicates.is_empty() || self.predicates.len() > 2 {
            return Err(QueryValidationError::PredicateCountOutOfRange(
                self.predicates.len(),
            ));
        }
        for p in &self.predicates {
            if p.term.is_empty() {
                return Err(QueryValidationError::EmptyTerm);
            }
            if !is_content_field(&p.field) && p.field != "status" && p.field != "event_type" {
                return Err(QueryValidationError::UnknownField(p.field.clone()));
            }
        }
        if let Some((lo, hi)) = self.time_range {
            if lo > hi {
                return Err(QueryValidationError::EmptyTimeRange(lo, hi));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                write!(f, " AND ")?;
            }
            write!(f, "{} CONTAINS {:?}", p.field, p.term)?;
        }
        if let Some((lo, hi)) = self.time_range {
            write!(f, " RANGE {lo}..{hi}")?;
        }
        if self.mode == QueryMode::Count {
            write!(f, " | COUNT")?;
        }
        Ok(())
    }
}

/// Stable identity of a query shape: covers the predicate set (order
/// independent) and the output mode, deliberately not the time range, so
/// repeated dashboards over sliding windows collapse to one profile entry.
pub fn query_fingerprint(q: &Query) -> String {
    let mut predicates: Vec<&QueryPredicate> = q.predicates.iter().collect();
    predicates.sort();
    let mut hasher = Sha256::new();
    hasher.update(match q.mode {
        QueryMode::ReturnRows => [0u8],
        QueryMode::Count => [1u8],
    });
    for p in predicates {
        hasher.update((p.field.len() as u32).to_le_bytes());
        hasher.update(p.field.as_bytes());
        hasher.update((p.term.len() as u32).to_le_bytes());
        hasher.update(p.term.as_bytes());
    }
    hex(&hasher.finalize())
}

/// Lowercase hex of a digest.
pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
