//! Filter rules, rule sets, and engine version tags.
//!
//! A `RuleSet` owns a validated, id-sorted collection of rules and defines
//! the canonical byte encoding that rule-set checksums and engine artifacts
//! are built on. Canonical bytes cover rule content only: two rule sets with
//! the same rules encode identically no matter how they were assembled or
//! which version tag they were later published under.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::is_content_field;

/// How a rule's expression is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RuleKind {
    /// Substring match of the expression against the target field.
    Literal,
    /// Regular-expression search against the target field.
    Regex,
}

/// One filtering rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterRule {
    pub rule_id: u32,
    pub target_field: String,
    pub kind: RuleKind,
    pub expression: String,
    pub case_sensitive: bool,
}

impl FilterRule {
    pub fn literal(rule_id: u32, target_field: &str, expression: &str) -> Self {
        FilterRule {
            rule_id,
            target_field: target_field.to_string(),
            kind: RuleKind::Literal,
            expression: expression.to_string(),
            case_sensitive: true,
        }
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if self.rule_id == 0 {
            return Err(RuleError::BadRuleId);
        }
        if !is_content_field(&self.target_field) {
            return Err(RuleError::BadTargetField {
                rule_id: self.rule_id,
                field: self.target_field.clone(),
            });
        }
        match self.kind {
            RuleKind::Literal => {
                if self.expression.is_empty() {
                    return Err(RuleError::EmptyLiteral {
                        rule_id: self.rule_id,
                    });
                }
            }
            RuleKind::Regex => {
                regex::Regex::new(&self.expression).map_err(|e| RuleError::InvalidRegex {
                    rule_id: self.rule_id,
                    reason: e.to_string(),
                })?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule id must be positive")]
    BadRuleId,
    #[error("rule {rule_id} targets unknown field {field}")]
    BadTargetField { rule_id: u32, field: String },
    #[error("rule {rule_id} has an empty literal expression")]
    EmptyLiteral { rule_id: u32 },
    #[error("rule {rule_id} has an invalid regex: {reason}")]
    InvalidRegex { rule_id: u32, reason: String },
    #[error("duplicate rule id {0}")]
    DuplicateRuleId(u32),
    #[error("rule file line {line}: {reason}")]
    ParseLine { line: usize, reason: String },
    #[error("corrupt canonical rule bytes: {0}")]
    CorruptCanonical(String),
}

/// A validated set of rules, unique and sorted by `rule_id`.
///
/// `version_tag` and `created_at` are publication metadata assigned by the
/// control plane; they take no part in canonical encoding or rule equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<FilterRule>,
    pub version_tag: Option<VersionTag>,
    pub created_at: i64,
}

const CANONICAL_MAGIC: &[u8; 4] = b"FSRS";
const CANONICAL_VERSION: u16 = 1;

impl RuleSet {
    pub fn empty() -> Self {
        RuleSet {
            rules: Vec::new(),
            version_tag: None,
            created_at: 0,
        }
    }

    pub fn new(mut rules: Vec<FilterRule>) -> Result<Self, RuleError> {
        for rule in &rules {
            rule.validate()?;
        }
        rules.sort_by_key(|r| r.rule_id);
        for pair in rules.windows(2) {
            if pair[0].rule_id == pair[1].rule_id {
                return Err(RuleError::DuplicateRuleId(pair[0].rule_id));
            }
        }
        Ok(RuleSet {
            rules,
            version_tag: None,
            created_at: 0,
        })
    }

    /// Rules in ascending `rule_id` order.
    pub fn rules(&self) -> &[FilterRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, rule_id: u32) -> Option<&FilterRule> {
        self.rules
            .binary_search_by_key(&rule_id, |r| r.rule_id)
            .ok()
            .map(|i| &self.rules[i])
    }

    pub fn max_rule_id(&self) -> u32 {
        self.rules.last().map_or(0, |r| r.rule_id)
    }

    /// True if both sets hold the same rules, ignoring publication metadata.
    pub fn same_rules(&self, other: &RuleSet) -> bool {
        self.rules == other.rules
    }

    /// Deterministic binary encoding of the rule content.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.rules.len() * 32);
        out.extend_from_slice(CANONICAL_MAGIC);
        out.extend_from_slice(&CANONICAL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rules.len() as u32).to_le_bytes());
        for rule in &self.rules {
            out.extend_from_slice(&rule.rule_id.to_le_bytes());
            out.push(match rule.kind {
                RuleKind::Literal => 0,
                RuleKind::Regex => 1,
            });
            out.push(rule.case_sensitive as u8);
            out.extend_from_slice(&(rule.target_field.len() as u16).to_le_bytes());
            out.extend_from_slice(rule.target_field.as_bytes());
            out.extend_from_slice(&(rule.expression.len() as u32).to_le_bytes());
            out.extend_from_slice(rule.expression.as_bytes());
        }
        out
    }

    /// Decodes `canonical_bytes` output; the result carries no publication
    /// metadata.
    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, RuleError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != CANONICAL_MAGIC {
            return Err(RuleError::CorruptCanonical("bad magic".into()));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != CANONICAL_VERSION {
            return Err(RuleError::CorruptCanonical(format!(
                "unsupported encoding version {version}"
            )));
        }
        let count = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let mut rules = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let rule_id = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
            let kind = match cur.take(1)?[0] {
                0 => RuleKind::Literal,
                1 => RuleKind::Regex,
                k => {
                    return Err(RuleError::CorruptCanonical(format!("unknown rule kind {k}")));
                }
            };
            let case_sensitive = match cur.take(1)?[0] {
                0 => false,
                1 => true,
                b => {
                    return Err(RuleError::CorruptCanonical(format!(
                        "bad case_sensitive byte {b}"
                    )));
                }
            };
            let field_len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
            let target_field = cur.take_str(field_len)?;
            let expr_len = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
            let expression = cur.take_str(expr_len)?;
            rules.push(FilterRule {
                rule_id,
                target_field,
                kind,
                expression,
                case_sensitive,
            });
        }
        if cur.pos != bytes.len() {
            return Err(RuleError::CorruptCanonical("trailing bytes".into()));
        }
        RuleSet::new(rules)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RuleError> {
        if self.pos + n > self.bytes.len() {
            return Err(RuleError::CorruptCanonical("truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn take_str(&mut self, n: usize) -> Result<String, RuleError> {
        let raw = self.take(n)?;
        std::str::from_utf8(raw)
            .map(str::to_string)
            .map_err(|_| RuleError::CorruptCanonical("invalid utf-8".into()))
    }
}

/// Engine version identity: a per-updater run nonce plus a sequence number
/// that increases with every published version in that run.
///
/// Renders as `run-<nonce>-<seq>`, e.g. `run-9f3ac1d2-000042`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VersionTag {
    run: String,
    seq: u64,
}

impl VersionTag {
    pub fn new(run: &str, seq: u64) -> Self {
        VersionTag {
            run: run.to_string(),
            seq,
        }
    }

    pub fn run(&self) -> &str {
        &self.run
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Next tag in the same run.
    pub fn next(&self) -> VersionTag {
        VersionTag {
            run: self.run.clone(),
            seq: self.seq + 1,
        }
    }
}

/// Random nonce for a fresh updater run.
pub fn fresh_run_nonce() -> String {
    format!("{:08x}", rand::random::<u32>())
}

impl fmt::Display for VersionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run-{}-{:06}", self.run, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad version tag {0:?}, expected run-<nonce>-<seq>")]
pub struct VersionTagParseError(pub String);

impl FromStr for VersionTag {
    type Err = VersionTagParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix("run-")
            .ok_or_else(|| VersionTagParseError(s.to_string()))?;
        let (run, seq) = rest
            .rsplit_once('-')
            .ok_or_else(|| VersionTagParseError(s.to_string()))?;
        if run.is_empty() || run.contains('-') {
            return Err(VersionTagParseError(s.to_string()));
        }
        let seq = seq
            .parse::<u64>()
            .map_err(|_| VersionTagParseError(s.to_string()))?;
        Ok(VersionTag {
            run: run.to_string(),
            seq,
        })
    }
}

impl Serialize for VersionTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for VersionTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses the line-oriented rule file format:
/// `rule_id<TAB>target_field<TAB>LITERAL|REGEX<TAB>true|false<TAB>expression`
/// with `\t`, `\n`, `\r`, `\\` escapes inside the expression. Blank lines and
/// `#` comments are skipped.
pub fn parse_rule_file(text: &str) -> Result<RuleSet, RuleError> {
    let mut rules = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(5, '\t');
        let mut next = |what: &str| {
            parts.next().ok_or_else(|| RuleError::ParseLine {
                line: line_no,
                reason: format!("missing {what} column"),
            })
        };
        let rule_id = next("rule_id")?
            .parse::<u32>()
            .map_err(|e| RuleError::ParseLine {
                line: line_no,
                reason: format!("bad rule_id: {e}"),
            })?;
        let target_field = next("target_field")?.to_string();
        let kind = match next("kind")? {
            "LITERAL" => RuleKind::Literal,
            "REGEX" => RuleKind::Regex,
            other => {
                return Err(RuleError::ParseLine {
                    line: line_no,
                    reason: format!("unknown kind {other:?}"),
                });
            }
        };
        let case_sensitive = match next("case_sensitive")? {
            "true" => true,
            "false" => false,
            other => {
                return Err(RuleError::ParseLine {
                    line: line_no,
                    reason: format!("bad case_sensitive {other:?}"),
                });
            }
        };
        let expression = unescape_expression(next("expression")?).map_err(|reason| {
            RuleError::ParseLine {
                line: line_no,
                reason,
            }
        })?;
        rules.push(FilterRule {
            rule_id,
            target_field,
            kind,
            expression,
            case_sensitive,
        });
    }
    RuleSet::new(rules)
}

/// Writes the rule file format parsed by `parse_rule_file`.
pub fn write_rule_file(rules: &RuleSet) -> String {
    let mut out = String::new();
    for rule in rules.rules() {
        let kind = match rule.kind {
            RuleKind::Literal => "LITERAL",
            RuleKind::Regex => "REGEX",
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            rule.rule_id,
            rule.target_field,
            kind,
            rule.case_sensitive,
            escape_expression(&rule.expression)
        ));
    }
    out
}

fn escape_expression(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_expression(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}
