//! Synthetic workload generation with controlled selectivity.
//!
//! Every generated record draws its text from a vocabulary over the letters
//! `a..p`, while rule literals have the shape `qq<digits>zz`. No vocabulary
//! word contains `q` or `z`, and no rule literal is a substring of another,
//! so a rule matches exactly the records it was planted into: the ground
//! truth written next to the data is exact by construction, not sampled.
//!
//! Generation is fully deterministic under the spec's seed: one seeded
//! generator, consumed in a fixed order (vocabulary, plant placement,
//! then record text).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::model::LogRecord;
use crate::rules::{write_rule_file, FilterRule, RuleSet};

/// Rule whose term the non-matching query uses: planted nowhere.
pub const ABSENT_RULE: u32 = 1;
/// Rule whose term the rare-match and count queries use.
pub const RARE_RULE: u32 = 2;
/// Field-one half of the two-field query pair.
pub const PAIR_RULE_A: u32 = 3;
/// Field-two half of the two-field query pair.
pub const PAIR_RULE_B: u32 = 4;

/// How rare planted matches are. The ultra-high tier plants at most 10
/// matching records per million; the high tier plants ten times as many.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectivityTier {
    UltraHigh,
    High,
}

impl SelectivityTier {
    pub fn planted_count(&self, total_records: u64) -> u64 {
        let ultra = (total_records / 100_000).max(1);
        match self {
            SelectivityTier::UltraHigh => ultra,
            SelectivityTier::High => ultra * 10,
        }
    }
}

impl std::fmt::Display for SelectivityTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectivityTier::UltraHigh => "ULTRA_HIGH",
            SelectivityTier::High => "HIGH",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub total_records: u64,
    /// Content fields per record, 2 through 5.
    pub content_fields: u32,
    pub words_per_field: u32,
    pub vocabulary_size: u32,
    pub rule_count: u32,
    /// Exact number of records each rule must match. Rules absent from the
    /// map match zero records.
    #[serde(with = "string_keyed")]
    pub planted: BTreeMap<u32, u64>,
    /// Two rules planted into identical records, for two-field queries.
    /// Their planted counts must agree and their target fields must differ.
    pub coplanted: Option<(u32, u32)>,
    pub seed: u64,
    /// Records per generated source file.
    pub records_per_file: u64,
}

impl DatasetSpec {
    /// The desk-scale default: one million records, a thousand rules, the
    /// four designated query rules planted per tier.
    pub fn desk(tier: SelectivityTier, seed: u64) -> Self {
        let count = tier.planted_count(1_000_000);
        let mut planted = BTreeMap::new();
        planted.insert(ABSENT_RULE, 0);
        planted.insert(RARE_RULE, count);
        planted.insert(PAIR_RULE_A, count);
        planted.insert(PAIR_RULE_B, count);
        DatasetSpec {
            total_records: 1_000_000,
            content_fields: 2,
            words_per_field: 60,
            vocabulary_size: 4096,
            rule_count: 1000,
            planted,
            coplanted: Some((PAIR_RULE_A, PAIR_RULE_B)),
            seed,
            records_per_file: 100_000,
        }
    }

    /// A small spec with the same shape, for tests.
    pub fn small(total_records: u64, rule_count: u32, planted_each: u64, seed: u64) -> Self {
        let mut planted = BTreeMap::new();
        planted.insert(ABSENT_RULE, 0);
        planted.insert(RARE_RULE, planted_each);
        planted.insert(PAIR_RULE_A, planted_each);
        planted.insert(PAIR_RULE_B, planted_each);
        DatasetSpec {
            total_records,
            content_fields: 2,
            words_per_field: 12,
            vocabulary_size: 256,
            rule_count,
            planted,
            coplanted: Some((PAIR_RULE_A, PAIR_RULE_B)),
            seed,
            records_per_file: (total_records / 4).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |reason: String| Err(DatasetError::BadSpec(reason));
        if self.total_records == 0 {
            return bad("total_records must be positive".into());
        }
        if !(2..=5).contains(&self.content_fields) {
            return bad(format!("content_fields must be 2..=5, got {}", self.content_fields));
        }
        if self.words_per_field == 0 || self.vocabulary_size < 16 {
            return bad("words_per_field and vocabulary_size too small".into());
        }
        if self.rule_count == 0 || self.rule_count < 4 {
            return bad("rule_count must cover the four designated rules".into());
        }
        if self.records_per_file == 0 {
            return bad("records_per_file must be positive".into());
        }
        for (&rule_id, &count) in &self.planted {
            if rule_id == 0 || rule_id > self.rule_count {
                return bad(format!("planted rule {rule_id} outside 1..={}", self.rule_count));
            }
            if count > self.total_records {
                return bad(format!("rule {rule_id} plants {count} > total records"));
            }
            if rule_id == ABSENT_RULE && count != 0 {
                return bad("the absent-term rule must plant zero records".into());
            }
        }
        if let Some((a, b)) = self.coplanted {
            if a == b || rule_target_field(a) == rule_target_field(b) {
                return bad("coplanted rules must target different fields".into());
            }
            if self.planted.get(&a) != self.planted.get(&b) {
                return bad("coplanted rules must plant the same count".into());
            }
        }
        // Worst case plants per (record, field) stays below the word count.
        let rules_per_field = self.planted.len() as u32;
        if rules_per_field >= self.words_per_field {
            return bad("more planted rules than word slots per field".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid dataset spec: {0}")]
    BadSpec(String),
    #[error("dataset io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("ground truth is not valid JSON: {0}")]
    BadGroundTruth(#[from] serde_json::Error),
}

/// Integer-keyed maps serialized with string keys, so the spec survives
/// formats whose maps require string keys.
mod string_keyed {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<u32, u64>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<u32, u64>, D::Error> {
        let raw = BTreeMap::<String, u64>::deserialize(deserializer)?;
        raw.into_iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("bad rule id key {k:?}")))
            })
            .collect()
    }
}

/// The literal expression of a generated rule.
pub fn rule_literal(rule_id: u32) -> String {
    format!("qq{rule_id}zz")
}

/// Which content field a generated rule filters. Rules split across the
/// first two content fields; the designated pair straddles them.
pub fn rule_target_field(rule_id: u32) -> &'static str {
    match rule_id {
        ABSENT_RULE | RARE_RULE | PAIR_RULE_A => "content1",
        PAIR_RULE_B => "content2",
        id if id % 2 == 1 => "content1",
        _ => "content2",
    }
}

/// The full generated rule set for a spec.
pub fn dataset_rules(spec: &DatasetSpec) -> RuleSet {
    let rules = (1..=spec.rule_count)
        .map(|id| FilterRule::literal(id, rule_target_field(id), &rule_literal(id)))
        .collect();
    RuleSet::new(rules).expect("generated rules are valid by construction")
}

/// Exact per-rule match ordinals, written beside the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Rule id → sorted record ordinals that match it. Rules not listed
    /// match nothing.
    pub matches: BTreeMap<u32, Vec<u64>>,
}

impl GroundTruth {
    pub fn ordinals(&self, rule_id: u32) -> &[u64] {
        self.matches.get(&rule_id).map_or(&[], |v| v.as_slice())
    }

    pub fn count(&self, rule_id: u32) -> u64 {
        self.ordinals(rule_id).len() as u64
    }

    /// Ordinals matching both rules of a pair.
    pub fn both(&self, a: u32, b: u32) -> Vec<u64> {
        let bs = self.ordinals(b);
        self.ordinals(a)
            .iter()
            .filter(|o| bs.binary_search(o).is_ok())
            .copied()
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Where a generated dataset's pieces live.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub root: PathBuf,
    pub source_dir: PathBuf,
    pub rules_path: PathBuf,
    pub ground_truth_path: PathBuf,
    pub manifest_path: PathBuf,
}

impl DatasetLayout {
    pub fn at(root: &Path) -> Self {
        DatasetLayout {
            root: root.to_path_buf(),
            source_dir: root.join("source"),
            rules_path: root.join("rules.tsv"),
            ground_truth_path: root.join("ground_truth.json"),
            manifest_path: root.join("manifest.json"),
        }
    }
}

/// Manifest describing a generated dataset, written into its root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub source_files: Vec<String>,
    pub timestamp_base: i64,
}

const TIMESTAMP_BASE: i64 = 1_700_000_000;
const STATUSES: [&str; 3] = ["ok", "warn", "error"];
const EVENT_TYPES: [&str; 4] = ["app", "sys", "net", "auth"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Distinct words of length 4..=9 over `a..p`, sorted.
fn build_vocabulary(rng: &mut ChaCha12Rng, size: u32) -> Vec<String> {
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size as usize {
        let len = rng.random_range(4..=9usize);
        let mut word = String::with_capacity(len);
        for _ in 0..len {
            word.push((b'a' + rng.random_range(0..16u8)) as char);
        }
        words.insert(word);
    }
    words.into_iter().collect()
}

/// `count` distinct ordinals below `total`, sorted.
fn sample_ordinals(rng: &mut ChaCha12Rng, total: u64, count: u64) -> Vec<u64> {
    let mut picked = std::collections::BTreeSet::new();
    while (picked.len() as u64) < count {
        picked.insert(rng.random_range(0..total));
    }
    picked.into_iter().collect()
}

struct Plant {
    field: &'static str,
    word_index: u32,
    literal: String,
}

/// Generates source files, the rule file, the ground truth, and a manifest
/// under `root`. Byte-identical for identical specs.
pub fn generate_dataset(spec: &DatasetSpec, root: &Path) -> Result<DatasetLayout, DatasetError> {
    spec.validate()?;
    let layout = DatasetLayout::at(root);
    std::fs::create_dir_all(&layout.source_dir).map_err(io_err(&layout.source_dir))?;

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let vocabulary = build_vocabulary(&mut rng, spec.vocabulary_size);

    // Plant placement. The coplanted pair shares one ordinal sample; every
    // other rule samples independently, in rule id order.
    let mut truth = GroundTruth::default();
    let mut plants: BTreeMap<u64, Vec<Plant>> = BTreeMap::new();
    let coplant_partner: BTreeMap<u32, u32> = spec
        .coplanted
        .iter()
        .flat_map(|&(a, b)| [(a, b), (b, a)])
        .collect();
    let place = |truth: &mut GroundTruth,
                     plants: &mut BTreeMap<u64, Vec<Plant>>,
                     rule_id: u32,
                     ordinals: &[u64],
                     words_per_field: u32| {
        for &ordinal in ordinals {
            let field = rule_target_field(rule_id);
            let slot = plants.entry(ordinal).or_default();
            // Deterministic spread with linear probing keeps plants from
            // overwriting each other inside one record.
            let start = (ordinal as u32).wrapping_mul(31).wrapping_add(rule_id) % words_per_field;
            let mut word_index = start;
            while slot
                .iter()
                .any(|p| p.field == field && p.word_index == word_index)
            {
                word_index = (word_index + 1) % words_per_field;
            }
            slot.push(Plant {
                field,
                word_index,
                literal: rule_literal(rule_id),
            });
        }
        truth.matches.insert(rule_id, ordinals.to_vec());
    };
    for (&rule_id, &count) in &spec.planted {
        if let Some(&partner) = coplant_partner.get(&rule_id) {
            if partner < rule_id {
                // The partner already sampled; reuse its ordinals.
                let ordinals = truth.ordinals(partner).to_vec();
                place(&mut truth, &mut plants, rule_id, &ordinals, spec.words_per_field);
                continue;
            }
        }
        let ordinals = sample_ordinals(&mut rng, spec.total_records, count);
        place(&mut truth, &mut plants, rule_id, &ordinals, spec.words_per_field);
    }

    // Stream the records out.
    let field_names: Vec<String> = (1..=spec.content_fields)
        .map(|i| format!("content{i}"))
        .collect();
    let mut source_files = Vec::new();
    let mut writer: Option<BufWriter<File>> = None;
    let mut current_path = PathBuf::new();
    let empty = Vec::new();
    for ordinal in 0..spec.total_records {
        if ordinal % spec.records_per_file == 0 {
            if let Some(w) = writer.as_mut() {
                w.flush().map_err(io_err(&current_path))?;
            }
            let name = format!("records-{:05}.ndjson", ordinal / spec.records_per_file);
            current_path = layout.source_dir.join(&name);
            writer = Some(BufWriter::with_capacity(
                1 << 20,
                File::create(&current_path).map_err(io_err(&current_path))?,
            ));
            source_files.push(name);
        }

        let record_plants = plants.get(&ordinal).unwrap_or(&empty);
        let status = *STATUSES.choose(&mut rng).expect("non-empty");
        let event_type = *EVENT_TYPES.choose(&mut rng).expect("non-empty");
        let mut contents = BTreeMap::new();
        for field in &field_names {
            let mut text = String::with_capacity(spec.words_per_field as usize * 8);
            for word_index in 0..spec.words_per_field {
                if word_index > 0 {
                    text.push(' ');
                }
                let planted = record_plants
                    .iter()
                    .find(|p| p.field == field && p.word_index == word_index);
                match planted {
                    Some(p) => {
                        // The vocabulary draw still happens so planting
                        // never shifts the stream for later records.
                        let _ = vocabulary.choose(&mut rng);
                        text.push_str(&p.literal);
                    }
                    None => text.push_str(vocabulary.choose(&mut rng).expect("non-empty")),
                }
            }
            contents.insert(field.clone(), text);
        }
        let record = LogRecord {
            timestamp: TIMESTAMP_BASE + ordinal as i64,
            status: status.to_string(),
            event_type: event_type.to_string(),
            contents,
        };
        let w = writer.as_mut().expect("writer opened above");
        writeln!(w, "{}", record.to_wire_json()).map_err(io_err(&current_path))?;
    }
    if let Some(w) = writer.as_mut() {
        w.flush().map_err(io_err(&current_path))?;
    }

    std::fs::write(&layout.rules_path, write_rule_file(&dataset_rules(spec)))
        .map_err(io_err(&layout.rules_path))?;
    std::fs::write(
        &layout.ground_truth_path,
        serde_json::to_vec_pretty(&truth).expect("ground truth serializes"),
    )
    .map_err(io_err(&layout.ground_truth_path))?;
    let manifest = DatasetManifest {
        spec: spec.clone(),
        source_files,
        timestamp_base: TIMESTAMP_BASE,
    };
    std::fs::write(
        &layout.manifest_path,
        serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(io_err(&layout.manifest_path))?;
    Ok(layout)
}
