//! Property suites: the compiled matcher against a one-rule-at-a-time
//! oracle, delta computation against naive edit application, canonical
//! bytes as ruleset identity, artifact and segment round trips, query text
//! round trips, and confidence intervals against a brute-force resampler.

mod common;

use std::collections::BTreeMap;

use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

use fluxsieve_core::engine::{
    apply_delta, compute_delta, deserialize_engine, serialize_engine, CompiledEngine,
};
use fluxsieve_core::model::{EnrichedRecord, EnrichmentMode, LogRecord, Query, QueryMode, QueryPredicate};
use fluxsieve_core::rules::{FilterRule, RuleKind, RuleSet, VersionTag};
use fluxsieve_core::segment::{write_segment, SegmentReader};
use fluxsieve_core::stats::bootstrap_ci;

use common::{
    apply_edits_naively, naive_resampled_medians, record_with, within_one_grid_step, NaiveMatcher,
};

fn field() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("content1".to_string()),
        Just("content2".to_string()),
        Just("content3".to_string()),
        Just("content4".to_string()),
        Just("content5".to_string()),
    ]
}

/// Valid patterns only; rule validation rejects malformed ones up front.
fn regex_expr() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("ab+a".to_string()),
        Just("err(or)?".to_string()),
        Just("[0-9]{2}".to_string()),
        Just("cab|bac".to_string()),
        Just("d.d".to_string()),
        Just("^aa".to_string()),
        Just("bb$".to_string()),
    ]
}

fn rule_body() -> impl Strategy<Value = (String, RuleKind, String, bool)> {
    let literal =
        ("[a-e]{1,6}", any::<bool>()).prop_map(|(expr, cs)| (RuleKind::Literal, expr, cs));
    let pattern =
        (regex_expr(), any::<bool>()).prop_map(|(expr, cs)| (RuleKind::Regex, expr, cs));
    // Weighted toward literals, the dominant production rule kind.
    prop_oneof![4 => literal, 1 => pattern].prop_flat_map(|(kind, expr, cs)| {
        field().prop_map(move |f| (f, kind, expr.clone(), cs))
    })
}

fn ruleset(max_rules: usize) -> impl Strategy<Value = RuleSet> {
    btree_map(1u32..300, rule_body(), 0..max_rules).prop_map(|rules| {
        let rules: Vec<FilterRule> = rules
            .into_iter()
            .map(|(rule_id, (target_field, kind, expression, case_sensitive))| FilterRule {
                rule_id,
                target_field,
                kind,
                expression,
                case_sensitive,
            })
            .collect();
        RuleSet::new(rules).expect("generated rules are valid")
    })
}

// Record validation rejects empty content values, so generated field text
// always holds at least one word.
fn text() -> impl Strategy<Value = String> {
    vec("[a-e]{1,6}", 1..16).prop_map(|words| words.join(" "))
}

fn record() -> impl Strategy<Value = LogRecord> {
    (text(), text(), text(), -1000i64..1000).prop_map(|(c1, c2, c3, ts)| {
        record_with(ts, &[("content1", &c1), ("content2", &c2), ("content3", &c3)])
    })
}

/// One record per rule with the rule's expression embedded in its target
/// field, so every rule gets exercised on a should-hit candidate.
fn planted_records(rules: &RuleSet) -> Vec<LogRecord> {
    rules
        .rules()
        .iter()
        .map(|rule| {
            let text = format!("aa {} bb", rule.expression);
            record_with(0, &[(rule.target_field.as_str(), text.as_str())])
        })
        .collect()
}

fn version() -> VersionTag {
    VersionTag::new("prop", 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compiled_matcher_agrees_with_naive_oracle(
        rules in ruleset(40),
        records in vec(record(), 0..24),
    ) {
        let engine = CompiledEngine::compile(&rules, version()).unwrap();
        let oracle = NaiveMatcher::new(&rules);
        for record in records.iter().chain(planted_records(&rules).iter()) {
            prop_assert_eq!(engine.match_all(record), oracle.matches(record));
        }
    }

    #[test]
    fn delta_rebuilds_target_and_stays_minimal(
        base in ruleset(30),
        target in ruleset(30),
    ) {
        let delta = compute_delta(&base, &target);
        let rebuilt = apply_delta(&base, &delta).unwrap();
        prop_assert!(rebuilt.same_rules(&target));
        prop_assert_eq!(rebuilt.canonical_bytes(), target.canonical_bytes());

        let naive = apply_edits_naively(&base, &delta.added, &delta.removed, &delta.modified);
        prop_assert_eq!(naive, target.rules().to_vec());

        // Minimality: every edit names a rule that genuinely changed.
        let base_ids: Vec<u32> = base.rules().iter().map(|r| r.rule_id).collect();
        for rule in &delta.added {
            prop_assert!(!base_ids.contains(&rule.rule_id));
        }
        for id in &delta.removed {
            prop_assert!(base_ids.contains(id));
            prop_assert!(target.get(*id).is_none());
        }
        for rule in &delta.modified {
            let before = base.get(rule.rule_id);
            prop_assert!(before.is_some());
            prop_assert_ne!(before.unwrap(), rule);
        }
    }

    #[test]
    fn canonical_bytes_are_ruleset_identity(a in ruleset(20), b in ruleset(20)) {
        prop_assert_eq!(a.same_rules(&b), a.canonical_bytes() == b.canonical_bytes());
    }

    #[test]
    fn engine_artifacts_round_trip_and_reject_tampering(
        rules in ruleset(20),
        seq in 1u64..50,
        flip in any::<prop::sample::Index>(),
    ) {
        let engine = CompiledEngine::compile(&rules, VersionTag::new("prop", seq)).unwrap();
        let bytes = serialize_engine(&engine);
        let back = deserialize_engine(&bytes, engine.version(), engine.checksum()).unwrap();
        prop_assert!(back.ruleset().same_rules(engine.ruleset()));
        prop_assert_eq!(back.version(), engine.version());

        let mut tampered = bytes.clone();
        let at = flip.index(tampered.len());
        tampered[at] ^= 0x01;
        prop_assert!(deserialize_engine(&tampered, engine.version(), engine.checksum()).is_err());
    }

    #[test]
    fn segments_round_trip_under_both_enrichment_layouts(
        rules in ruleset(24),
        records in vec(record(), 1..40),
        dense in any::<bool>(),
    ) {
        let engine = CompiledEngine::compile(&rules, version()).unwrap();
        let enriched: Vec<EnrichedRecord> = records
            .iter()
            .map(|r| EnrichedRecord::new(r.clone(), engine.match_all(r), version()))
            .collect();
        let mode = if dense {
            EnrichmentMode::DenseBoolean { width: rules.max_rule_id().max(1) }
        } else {
            EnrichmentMode::SparseList
        };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prop.fseg");
        write_segment(&path, &enriched, Some(mode)).unwrap();
        let reader = SegmentReader::open(&path).unwrap();

        let base: Vec<LogRecord> = enriched.iter().map(|e| e.base.clone()).collect();
        prop_assert_eq!(reader.read_records(None).unwrap(), base);

        let lists = reader.read_match_lists().unwrap();
        let oracle = NaiveMatcher::new(&rules);
        for (record, list) in records.iter().zip(&lists) {
            prop_assert_eq!(&oracle.matches(record), list);
        }

        // Per-rule row lookups agree with the per-record lists.
        for rule in rules.rules() {
            let expected: Vec<u32> = lists
                .iter()
                .enumerate()
                .filter(|(_, l)| l.binary_search(&rule.rule_id).is_ok())
                .map(|(i, _)| i as u32)
                .collect();
            prop_assert_eq!(reader.rule_rows(rule.rule_id).unwrap(), expected.clone());
            prop_assert_eq!(reader.rule_match_count(rule.rule_id).unwrap(), expected.len() as u64);
        }
    }

    #[test]
    fn raw_term_scan_agrees_with_direct_search(
        records in vec(record(), 1..40),
        needle in "[a-e]{1,4}",
    ) {
        let enriched: Vec<EnrichedRecord> = records
            .iter()
            .map(|r| EnrichedRecord::new(r.clone(), Vec::new(), version()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.fseg");
        write_segment(&path, &enriched, None).unwrap();
        let reader = SegmentReader::open(&path).unwrap();

        let expected: Vec<u32> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.contents["content2"].contains(&needle))
            .map(|(i, _)| i as u32)
            .collect();
        prop_assert_eq!(reader.rows_with_term("content2", &needle).unwrap(), expected);
    }

    #[test]
    fn query_text_round_trips(
        fields in vec(
            prop_oneof![
                field(),
                Just("status".to_string()),
                Just("event_type".to_string()),
            ],
            1..3,
        ),
        terms in vec("[ -~]{1,12}", 1..3),
        count in any::<bool>(),
        range in proptest::option::of((-5000i64..5000).prop_flat_map(|lo| {
            (Just(lo), lo..=5000)
        })),
    ) {
        let n = fields.len().min(terms.len());
        let query = Query {
            predicates: fields
                .into_iter()
                .zip(terms)
                .take(n)
                .map(|(field, term)| QueryPredicate { field, term })
                .collect(),
            mode: if count { QueryMode::Count } else { QueryMode::ReturnRows },
            time_range: range,
        };
        query.validate().unwrap();
        let text = query.to_string();
        let parsed = fluxsieve_core::query::parse_query(&text).unwrap();
        prop_assert_eq!(parsed, query);
    }

    #[test]
    fn confidence_interval_matches_brute_force_resampler(
        samples in vec(0.0f64..100.0, 5..25),
        seed in any::<u64>(),
    ) {
        let (lo, hi) = bootstrap_ci(&samples, 0.95, 300, seed).unwrap();
        let sorted = naive_resampled_medians(&samples, 300, seed);
        prop_assert!(within_one_grid_step(&sorted, 0.025, lo));
        prop_assert!(within_one_grid_step(&sorted, 0.975, hi));
    }
}

#[test]
fn version_tags_round_trip_text() {
    let tag = VersionTag::new("a1b2c3d4", 7);
    let text = tag.to_string();
    let parsed: VersionTag = text.parse().unwrap();
    assert_eq!(parsed, tag);
    assert!(text.ends_with("000007"), "{text}");
}

#[test]
fn enrichment_is_sorted_and_deduplicated() {
    let record = record_with(0, &[("content1", "x")]);
    let enriched = EnrichedRecord::new(record, vec![9, 3, 3, 9, 1], VersionTag::new("t", 1));
    assert_eq!(enriched.matched_rule_ids(), &[1, 3, 9]);
}

#[test]
fn matcher_handles_overlapping_and_nested_literals() {
    let rules = RuleSet::new(vec![
        FilterRule::literal(1, "content1", "abc"),
        FilterRule::literal(2, "content1", "abcd"),
        FilterRule::literal(3, "content1", "bcd"),
        FilterRule::literal(4, "content1", "zabcdz"),
    ])
    .unwrap();
    let engine = CompiledEngine::compile(&rules, VersionTag::new("t", 1)).unwrap();
    let oracle = NaiveMatcher::new(&rules);
    for text in ["abcd", "zabcdz", "ab", "xbcdx", "aabcc abcd"] {
        let record = record_with(0, &[("content1", text)]);
        assert_eq!(engine.match_all(&record), oracle.matches(&record), "{text}");
    }
}

#[test]
fn dense_width_clamps_out_of_range_ids() {
    // A record matched by a rule beyond the dense width cannot be stored
    // in that layout; the writer rejects it outright.
    let base: BTreeMap<String, String> =
        [("content1".to_string(), "hit".to_string())].into_iter().collect();
    let record = LogRecord {
        timestamp: 0,
        status: "ok".into(),
        event_type: "app".into(),
        contents: base,
    };
    let enriched = EnrichedRecord::new(record, vec![9], VersionTag::new("t", 1));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("narrow.fseg");
    let result = write_segment(&path, &[enriched], Some(EnrichmentMode::DenseBoolean { width: 4 }));
    assert!(result.is_err());
}
