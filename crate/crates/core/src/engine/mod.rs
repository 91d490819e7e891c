//! Compiled matching engines: per-field multi-pattern matchers built from a
//! `RuleSet`, rule-set deltas, and the checksummed artifact format engines
//! travel in.
//!
//! An artifact embeds the canonical rule bytes rather than compiled tables;
//! loading recompiles, which is deterministic, keeps artifacts small and
//! portable, and lets one integrity checksum cover everything that defines
//! the engine's behavior.

mod automaton;

pub use automaton::Automaton;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{hex, LogRecord};
use crate::rules::{FilterRule, RuleKind, RuleSet, VersionTag};

/// SHA-256 digest of an artifact payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EngineChecksum(pub [u8; 32]);

impl EngineChecksum {
    pub fn of(bytes: &[u8]) -> Self {
        EngineChecksum(Sha256::digest(bytes).into())
    }
}

impl fmt::Display for EngineChecksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex(&self.0))
    }
}

impl FromStr for EngineChecksum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 {
            return Err(format!("checksum must be 64 hex chars, got {}", s.len()));
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16).ok_or("non-hex digit")?;
            let lo = (chunk[1] as char).to_digit(16).ok_or("non-hex digit")?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Ok(EngineChecksum(out))
    }
}

impl Serialize for EngineChecksum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EngineChecksum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("rule {rule_id} failed to compile: {reason}")]
    InvalidPattern { rule_id: u32, reason: String },
}

/// Matchers covering all rules that target one field.
struct FieldMatchers {
    case_sensitive: Option<(Automaton, Vec<u32>)>,
    case_folded: Option<(Automaton, Vec<u32>)>,
    regexes: Option<(regex::RegexSet, Vec<u32>)>,
}

impl FieldMatchers {
    fn match_into(&self, text: &str, hits: &mut Vec<u32>) {
        if let Some((automaton, ids)) = &self.case_sensitive {
            automaton.for_each_match(text.as_bytes(), |p| hits.push(ids[p as usize]));
        }
        if let Some((automaton, ids)) = &self.case_folded {
            automaton.for_each_match(text.as_bytes(), |p| hits.push(ids[p as usize]));
        }
        if let Some((set, ids)) = &self.regexes {
            for p in set.matches(text) {
                hits.push(ids[p]);
            }
        }
    }
}

/// An immutable engine compiled from one rule set version.
pub struct CompiledEngine {
    version: VersionTag,
    ruleset: RuleSet,
    fields: BTreeMap<String, FieldMatchers>,
    checksum: EngineChecksum,
}

impl CompiledEngine {
    /// Compiles `rules` under `version`. Deterministic: equal rules and
    /// version always produce an engine with identical behavior, checksum,
    /// and artifact bytes.
    pub fn compile(rules: &RuleSet, version: VersionTag) -> Result<CompiledEngine, CompileError> {
        let mut fields: BTreeMap<String, FieldMatchers> = BTreeMap::new();
        let mut grouped: BTreeMap<&str, Vec<&FilterRule>> = BTreeMap::new();
        for rule in rules.rules() {
            grouped.entry(&rule.target_field).or_default().push(rule);
        }
        for (field, field_rules) in grouped {
            let mut cs: Vec<(&[u8], u32)> = Vec::new();
            let mut ci: Vec<(&[u8], u32)> = Vec::new();
            let mut regex_sources: Vec<String> = Vec::new();
            let mut regex_ids: Vec<u32> = Vec::new();
            for rule in field_rules {
                match rule.kind {
                    RuleKind::Literal if rule.case_sensitive => {
                        cs.push((rule.expression.as_bytes(), rule.rule_id));
                    }
                    RuleKind::Literal => {
                        ci.push((rule.expression.as_bytes(), rule.rule_id));
                    }
                    RuleKind::Regex => {
                        let source = if rule.case_sensitive {
                            rule.expression.clone()
                        } else {
                            format!("(?i:{})", rule.expression)
                        };
                        regex_sources.push(source);
                        regex_ids.push(rule.rule_id);
                    }
                }
            }
            let build = |pairs: &[(&[u8], u32)], fold: bool| {
                let patterns: Vec<&[u8]> = pairs.iter().map(|(p, _)| *p).collect();
                let ids: Vec<u32> = pairs.iter().map(|(_, id)| *id).collect();
                (Automaton::build(&patterns, fold), ids)
            };
            let regexes = if regex_sources.is_empty() {
                None
            } else {
                let set = regex::RegexSet::new(&regex_sources).map_err(|e| {
                    CompileError::InvalidPattern {
                        rule_id: regex_ids[0],
                        reason: e.to_string(),
                    }
                })?;
                Some((set, regex_ids))
            };
            fields.insert(
                field.to_string(),
                FieldMatchers {
                    case_sensitive: (!cs.is_empty()).then(|| build(&cs, false)),
                    case_folded: (!ci.is_empty()).then(|| build(&ci, true)),
                    regexes,
                },
            );
        }
        let checksum = EngineChecksum::of(&rules.canonical_bytes());
        Ok(CompiledEngine {
            version,
            ruleset: rules.clone(),
            fields,
            checksum,
        })
    }

    pub fn version(&self) -> &VersionTag {
        &self.version
    }

    pub fn checksum(&self) -> &EngineChecksum {
        &self.checksum
    }

    pub fn ruleset(&self) -> &RuleSet {
        &self.ruleset
    }

    pub fn rule_count(&self) -> u32 {
        self.ruleset.len() as u32
    }

    /// All rule ids matching `record`, ascending, each at most once.
    pub fn match_all(&self, record: &LogRecord) -> Vec<u32> {
        let mut hits = Vec::new();
        for (field, text) in &record.contents {
            if let Some(matchers) = self.fields.get(field) {
                matchers.match_into(text, &mut hits);
            }
        }
        hits.sort_unstable();
        hits.dedup();
        hits
    }
}

/// Difference between two rule sets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RuleSetDelta {
    pub added: Vec<FilterRule>,
    pub removed: Vec<u32>,
    pub modified: Vec<FilterRule>,
}

impl RuleSetDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }
}

/// Computes the delta that turns `current` into `target`. A rule counts as
/// modified when its id survives but any other attribute changes.
pub fn compute_delta(current: &RuleSet, target: &RuleSet) -> RuleSetDelta {
    let mut delta = RuleSetDelta::default();
    let mut cur = current.rules().iter().peekable();
    let mut tgt = target.rules().iter().peekable();
    loop {
        match (cur.peek(), tgt.peek()) {
            (None, None) => break,
            (Some(c), None) => {
                delta.removed.push(c.rule_id);
                cur.next();
            }
            (None, Some(t)) => {
                delta.added.push((*t).clone());
                tgt.next();
            }
            (Some(c), Some(t)) => match c.rule_id.cmp(&t.rule_id) {
                std::cmp::Ordering::Less => {
                    delta.removed.push(c.rule_id);
                    cur.next();
                }
                std::cmp::Ordering::Greater => {
                    delta.added.push((*t).clone());
                    tgt.next();
                }
                std::cmp::Ordering::Equal => {
                    if c != t {
                        delta.modified.push((*t).clone());
                    }
                    cur.next();
                    tgt.next();
                }
            },
        }
    }
    delta
}

/// Applies a delta produced by `compute_delta`; the inverse direction of the
/// soundness property `apply_delta(current, compute_delta(current, target))
/// == target`.
pub fn apply_delta(current: &RuleSet, delta: &RuleSetDelta) -> Result<RuleSet, crate::rules::RuleError> {
    let mut rules: Vec<FilterRule> = current
        .rules()
        .iter()
        .filter(|r| !delta.removed.contains(&r.rule_id))
        .cloned()
        .collect();
    for m in &delta.modified {
        if let Some(slot) = rules.iter_mut().find(|r| r.rule_id == m.rule_id) {
            *slot = m.clone();
        }
    }
    rules.extend(delta.added.iter().cloned());
    RuleSet::new(rules)
}

const ARTIFACT_MAGIC: &[u8; 4] = b"FSE1";
const ARTIFACT_VERSION: u16 = 1;
const DIGEST_ALGORITHM: &str = "sha-256";

/// Artifact self-description, stored as a JSON header inside the artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineManifest {
    pub version_tag: VersionTag,
    pub rule_count: u32,
    pub digest_algorithm: String,
    pub checksum: EngineChecksum,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArtifactError {
    #[error("artifact checksum mismatch: expected {expected}, computed {computed}")]
    ChecksumMismatch { expected: String, computed: String },
    #[error("artifact version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
}

/// Serializes the engine into its distributable artifact form.
///
/// Layout: magic, format version, length-prefixed JSON manifest, then the
/// length-prefixed canonical rule payload the checksum covers.
pub fn serialize_engine(engine: &CompiledEngine) -> Vec<u8> {
    let payload = engine.ruleset.canonical_bytes();
    let manifest = EngineManifest {
        version_tag: engine.version.clone(),
        rule_count: engine.rule_count(),
        digest_algorithm: DIGEST_ALGORITHM.into(),
        checksum: engine.checksum,
    };
    let manifest_json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(payload.len() + manifest_json.len() + 32);
    out.extend_from_slice(ARTIFACT_MAGIC);
    out.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Parses just the manifest from artifact bytes.
pub fn read_manifest(bytes: &[u8]) -> Result<EngineManifest, ArtifactError> {
    split_artifact(bytes).map(|(m, _)| m)
}

fn split_artifact(bytes: &[u8]) -> Result<(EngineManifest, &[u8]), ArtifactError> {
    let corrupt = |why: &str| ArtifactError::CorruptArtifact(why.to_string());
    if bytes.len() < 10 || &bytes[..4] != ARTIFACT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let format = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if format != ARTIFACT_VERSION {
        return Err(corrupt(&format!("unsupported artifact format {format}")));
    }
    let manifest_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let manifest_end = 10usize
        .checked_add(manifest_len)
        .filter(|&e| e + 8 <= bytes.len())
        .ok_or_else(|| corrupt("truncated manifest"))?;
    let manifest: EngineManifest = serde_json::from_slice(&bytes[10..manifest_end])
        .map_err(|e| corrupt(&format!("bad manifest: {e}")))?;
    let payload_len =
        u64::from_le_bytes(bytes[manifest_end..manifest_end + 8].try_into().unwrap()) as usize;
    let payload_start = manifest_end + 8;
    if payload_start + payload_len != bytes.len() {
        return Err(corrupt("payload length disagrees with artifact size"));
    }
    Ok((manifest, &bytes[payload_start..]))
}

/// Validates and loads an artifact. The caller states which version and
/// checksum it expects (from the update notification); integrity is checked
/// before the version label, and nothing is compiled unless both pass.
pub fn deserialize_engine(
    bytes: &[u8],
    expected_version: &VersionTag,
    expected_checksum: &EngineChecksum,
) -> Result<CompiledEngine, ArtifactError> {
    let (manifest, payload) = split_artifact(bytes)?;
    let computed = EngineChecksum::of(payload);
    if computed != *expected_checksum || manifest.checksum != *expected_checksum {
        return Err(ArtifactError::ChecksumMismatch {
            expected: expected_checksum.to_string(),
            computed: computed.to_string(),
        });
    }
    if manifest.digest_algorithm != DIGEST_ALGORITHM {
        return Err(ArtifactError::CorruptArtifact(format!(
            "unknown digest algorithm {:?}",
            manifest.digest_algorithm
        )));
    }
    if manifest.version_tag != *expected_version {
        return Err(ArtifactError::VersionMismatch {
            expected: expected_version.to_string(),
            found: manifest.version_tag.to_string(),
        });
    }
    let rules = RuleSet::from_canonical_bytes(payload)
        .map_err(|e| ArtifactError::CorruptArtifact(e.to_string()))?;
    if rules.len() as u32 != manifest.rule_count {
        return Err(ArtifactError::CorruptArtifact(format!(
            "manifest claims {} rules, payload holds {}",
            manifest.rule_count,
            rules.len()
        )));
    }
    CompiledEngine::compile(&rules, manifest.version_tag)
        .map_err(|e| ArtifactError::CorruptArtifact(e.to_string()))
}
