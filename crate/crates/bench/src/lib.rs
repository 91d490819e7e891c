//! Deterministic input builders shared by the microbenchmarks.

use fluxsieve_core::model::{EnrichedRecord, LogRecord};
use fluxsieve_core::rules::{FilterRule, RuleSet, VersionTag};
use std::collections::BTreeMap;

/// Words the needles cannot occur in: plain lowercase a..p text.
const VOCAB: [&str; 16] = [
    "aldebaran", "bellatrix", "candle", "dorado", "element", "fabric", "gallon", "harbor",
    "indigo", "jackal", "keeper", "lagoon", "meadow", "nickel", "oblong", "pigeon",
];

/// The needle rule `id` searches for; `z` keeps it out of the vocabulary.
pub fn needle(id: u32) -> String {
    format!("zkw{id}z")
}

/// `count` literal rules split across two content fields.
pub fn bench_rules(count: u32) -> RuleSet {
    let rules = (1..=count)
        .map(|id| {
            let field = if id % 2 == 1 { "content1" } else { "content2" };
            FilterRule::literal(id, field, &needle(id))
        })
        .collect();
    RuleSet::new(rules).expect("bench rules are valid")
}

pub fn bench_version() -> VersionTag {
    VersionTag::new("micro", 1)
}

/// `count` records of `words` words per field; every `plant_every`-th record
/// carries one rule's needle in its target field. Fully deterministic.
pub fn bench_records(count: usize, words: usize, plant_every: usize, rule_count: u32) -> Vec<LogRecord> {
    (0..count)
        .map(|i| {
            let mut fields: BTreeMap<String, String> = BTreeMap::new();
            for (f, field) in ["content1", "content2"].into_iter().enumerate() {
                let mut text = String::new();
                for w in 0..words {
                    if w > 0 {
                        text.push(' ');
                    }
                    // Multiplicative scramble spreads vocabulary picks.
                    let pick = (i * 31 + f * 7 + w * 13) % VOCAB.len();
                    text.push_str(VOCAB[pick]);
                }
                fields.insert(field.to_string(), text);
            }
            if plant_every > 0 && i % plant_every == 0 {
                let id = (i / plant_every) as u32 % rule_count + 1;
                let field = if id % 2 == 1 { "content1" } else { "content2" };
                let slot = fields.get_mut(field).expect("field built above");
                slot.push(' ');
                slot.push_str(&needle(id));
            }
            LogRecord {
                timestamp: 1_700_000_000 + i as i64,
                status: "ok".into(),
                event_type: "app".into(),
                contents: fields,
            }
        })
        .collect()
}

/// Enriches `records` exactly: a record matches rule `id` when its target
/// field contains the needle.
pub fn enrich(records: &[LogRecord], rules: &RuleSet) -> Vec<EnrichedRecord> {
    let version = bench_version();
    records
        .iter()
        .map(|r| {
            let matched = rules
                .rules()
                .iter()
                .filter(|rule| {
                    r.contents
                        .get(&rule.target_field)
                        .is_some_and(|text| text.contains(&rule.expression))
                })
                .map(|rule| rule.rule_id)
                .collect();
            EnrichedRecord::new(r.clone(), matched, version.clone())
        })
        .collect()
}
