//! Independent oracles the integration suites check the real
//! implementations against. Nothing here shares code with the engine, the
//! statistics module, or the query plane beyond the public data types.
//!
//! Shared by several test binaries, each using its own subset.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fluxsieve_core::model::LogRecord;
use fluxsieve_core::rules::{FilterRule, RuleKind, RuleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

enum NaiveTest {
    LiteralExact(String),
    LiteralFolded(String),
    Pattern(regex::Regex),
}

/// One-rule-at-a-time matcher: each rule is applied alone to its target
/// field with the most direct implementation available.
pub struct NaiveMatcher {
    rules: Vec<(u32, String, NaiveTest)>,
}

impl NaiveMatcher {
    pub fn new(rules: &RuleSet) -> NaiveMatcher {
        let compiled = rules
            .rules()
            .iter()
            .map(|rule| {
                let test = match (rule.kind, rule.case_sensitive) {
                    (RuleKind::Literal, true) => NaiveTest::LiteralExact(rule.expression.clone()),
                    (RuleKind::Literal, false) => NaiveTest::LiteralFolded(rule.expression.clone()),
                    (RuleKind::Regex, case_sensitive) => NaiveTest::Pattern(
                        regex::RegexBuilder::new(&rule.expression)
                            .case_insensitive(!case_sensitive)
                            .build()
                            .expect("oracle rules hold valid patterns"),
                    ),
                };
                (rule.rule_id, rule.target_field.clone(), test)
            })
            .collect();
        NaiveMatcher { rules: compiled }
    }

    /// Sorted ids of every rule whose target field contains its pattern.
    pub fn matches(&self, record: &LogRecord) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .rules
            .iter()
            .filter(|(_, field, test)| {
                record
                    .contents
                    .get(field)
                    .is_some_and(|text| match test {
                        NaiveTest::LiteralExact(lit) => text.contains(lit.as_str()),
                        NaiveTest::LiteralFolded(lit) => ascii_folded_contains(text, lit),
                        NaiveTest::Pattern(re) => re.is_match(text),
                    })
            })
            .map(|(id, _, _)| *id)
            .collect();
        out.sort_unstable();
        out
    }
}

/// Byte-window substring search under ASCII case folding.
fn ascii_folded_contains(haystack: &str, needle: &str) -> bool {
    let haystack = haystack.as_bytes();
    let needle = needle.as_bytes();
    if needle.is_empty() {
        return true;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.eq_ignore_ascii_case(needle))
}

/// A record whose named content fields hold the given text.
pub fn record_with(timestamp: i64, fields: &[(&str, &str)]) -> LogRecord {
    let contents: BTreeMap<String, String> = fields
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    LogRecord {
        timestamp,
        status: "ok".into(),
        event_type: "app".into(),
        contents,
    }
}

/// Applies `delta`-style edits by hand: a removed id disappears, an added
/// or modified rule replaces any rule with its id.
pub fn apply_edits_naively(
    base: &RuleSet,
    added: &[FilterRule],
    removed: &[u32],
    modified: &[FilterRule],
) -> Vec<FilterRule> {
    let mut by_id: BTreeMap<u32, FilterRule> = base
        .rules()
        .iter()
        .map(|r| (r.rule_id, r.clone()))
        .collect();
    for id in removed {
        by_id.remove(id);
    }
    for rule in added.iter().chain(modified) {
        by_id.insert(rule.rule_id, rule.clone());
    }
    by_id.into_values().collect()
}

/// The resampled-median distribution, drawn with the pinned procedure
/// (sequential `random_range(0..n)` from a seeded ChaCha12 stream) but
/// summarized with this module's own median code. Returned sorted.
pub fn naive_resampled_medians(samples: &[f64], resamples: u32, seed: u64) -> Vec<f64> {
    let n = samples.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut medians = Vec::with_capacity(resamples as usize);
    for _ in 0..resamples {
        let draw: Vec<f64> = (0..n).map(|_| samples[rng.random_range(0..n)]).collect();
        medians.push(naive_median(&draw));
    }
    medians.sort_by(|a, b| a.partial_cmp(b).unwrap());
    medians
}

/// Sorts and averages the middle pair; written without reference to the
/// implementation under test.
pub fn naive_median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

/// Index of percentile `p` in a sorted distribution under the oracle's own
/// convention (`ceil` rank, one-based, clamped).
pub fn naive_rank(p: f64, len: usize) -> usize {
    let rank = (p * len as f64).ceil() as isize - 1;
    rank.clamp(0, len as isize - 1) as usize
}

/// `(lo, hi)` of a level-`level` interval over a sorted distribution.
pub fn naive_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    (
        sorted[naive_rank(alpha / 2.0, sorted.len())],
        sorted[naive_rank(1.0 - alpha / 2.0, sorted.len())],
    )
}

/// True when `value` sits within one grid step of percentile `p` in the
/// sorted distribution: it equals the value at the oracle's rank or at a
/// directly neighboring rank.
pub fn within_one_grid_step(sorted: &[f64], p: f64, value: f64) -> bool {
    let rank = naive_rank(p, sorted.len());
    let lo = rank.saturating_sub(1);
    let hi = (rank + 1).min(sorted.len() - 1);
    sorted[lo..=hi].iter().any(|&v| v == value)
}
