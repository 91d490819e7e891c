//! Engine swaps racing a live ingest run: every record is enriched by
//! exactly one engine version, the output version sequence is monotone in
//! processing order, and no record is lost or duplicated.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use fluxsieve_core::engine::CompiledEngine;
use fluxsieve_core::model::LogRecord;
use fluxsieve_core::pipeline::{run_pipeline, EngineHandle, PipelineConfig, PipelineMode};
use fluxsieve_core::rules::{FilterRule, RuleSet, VersionTag};
use fluxsieve_core::segment::{list_segments, ColumnData, SegmentReader};

use common::{record_with, NaiveMatcher};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const VOCAB: &[&str] = &["amber", "basalt", "cedar", "dune", "ember", "flint"];

fn rules_v1() -> RuleSet {
    RuleSet::new(vec![
        FilterRule::literal(1, "content1", "amber"),
        FilterRule::literal(2, "content1", "cedar"),
        FilterRule::literal(3, "content2", "dune"),
    ])
    .unwrap()
}

fn rules_v2() -> RuleSet {
    // Overlaps v1 on rule 1, drops 2 and 3, adds 4 and 5; the two versions
    // disagree on most records so a mistagged row shows up as a bad match
    // list, not just a bad label.
    RuleSet::new(vec![
        FilterRule::literal(1, "content1", "amber"),
        FilterRule::literal(4, "content1", "ember"),
        FilterRule::literal(5, "content2", "flint"),
    ])
    .unwrap()
}

fn engine(rules: &RuleSet, seq: u64) -> Arc<CompiledEngine> {
    Arc::new(CompiledEngine::compile(rules, VersionTag::new("swap", seq)).unwrap())
}

/// Writes `n` wire-format records with timestamps 1..=n. The timestamp
/// doubles as record identity for the lost/duplicate audit.
fn write_source(path: &Path, n: u64) -> Vec<LogRecord> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    let mut records = Vec::with_capacity(n as usize);
    for i in 1..=n {
        let c1 = format!(
            "{} {}",
            VOCAB[(i % 6) as usize],
            VOCAB[((i / 6) % 6) as usize]
        );
        let c2 = VOCAB[((i / 2) % 6) as usize].to_string();
        let record = record_with(i as i64, &[("content1", &c1), ("content2", &c2)]);
        writeln!(file, "{}", record.to_wire_json()).unwrap();
        records.push(record);
    }
    file.flush().unwrap();
    records
}

struct RunOutput {
    /// (timestamp, version string, matched ids) in processing order.
    rows: Vec<(i64, String, Vec<u32>)>,
    version_counts: BTreeMap<String, u64>,
}

/// Runs one FLUXSIEVE ingest over `source`, swapping in `next` once
/// `swap_after` records have been processed. `swap_after >= n` never swaps.
fn run_with_swap(
    source: &Path,
    out: &Path,
    first: Arc<CompiledEngine>,
    next: Arc<CompiledEngine>,
    swap_after: u64,
) -> RunOutput {
    let handle = EngineHandle::new(first);
    let progress = Arc::new(AtomicU64::new(0));
    let mut config = PipelineConfig::new(
        vec![source.to_path_buf()],
        out,
        PipelineMode::FluxSieve,
        handle.clone(),
    );
    config.segment_records = 1_500;
    config.progress = Some(progress.clone());

    let report = std::thread::scope(|scope| {
        let swapper = scope.spawn(move || {
            while progress.load(Ordering::Acquire) < swap_after {
                std::thread::yield_now();
            }
            handle.swap(next);
        });
        let report = run_pipeline(&config).unwrap();
        swapper.join().unwrap();
        report
    });

    let mut rows = Vec::new();
    for path in list_segments(out).unwrap() {
        let reader = SegmentReader::open(&path).unwrap();
        let records = reader.read_records(None).unwrap();
        let lists = reader.read_match_lists().unwrap();
        let versions = match reader.read_column("engine_version").unwrap() {
            ColumnData::Str(v) => v,
            other => panic!("engine_version column decoded as {other:?}"),
        };
        assert_eq!(records.len(), lists.len());
        assert_eq!(records.len(), versions.len());
        for ((record, list), version) in records.into_iter().zip(lists).zip(versions) {
            rows.push((record.timestamp, version, list));
        }
    }
    assert_eq!(rows.len() as u64, report.records_out);
    assert_eq!(report.records_in, report.records_out);

    let mut version_counts = BTreeMap::new();
    for (_, version, _) in &rows {
        *version_counts.entry(version.clone()).or_insert(0u64) += 1;
    }
    assert_eq!(version_counts, report.engine_versions);
    RunOutput {
        rows,
        version_counts,
    }
}

/// The full audit for one run: identity completeness, monotone version
/// sequence, and per-record enrichment agreeing with the oracle for the
/// version that tagged it.
fn audit(output: &RunOutput, n: u64, versions: &[(&VersionTag, &RuleSet)]) {
    let mut seen: Vec<i64> = output.rows.iter().map(|(ts, _, _)| *ts).collect();
    seen.sort_unstable();
    let expected: Vec<i64> = (1..=n as i64).collect();
    assert_eq!(seen, expected, "records lost or duplicated");

    let order: Vec<String> = versions.iter().map(|(v, _)| v.to_string()).collect();
    let oracles: BTreeMap<String, NaiveMatcher> = versions
        .iter()
        .map(|(v, rules)| (v.to_string(), NaiveMatcher::new(rules)))
        .collect();

    let mut last_rank = 0usize;
    for (ts, version, list) in &output.rows {
        let rank = order
            .iter()
            .position(|v| v == version)
            .unwrap_or_else(|| panic!("record {ts} tagged unknown version {version}"));
        assert!(
            rank >= last_rank,
            "version sequence regressed at record {ts}: {version} after {}",
            order[last_rank]
        );
        last_rank = rank;

        let record = reconstruct(*ts);
        assert_eq!(
            list,
            &oracles[version].matches(&record),
            "record {ts} enriched inconsistently with its version {version}"
        );
    }
}

/// Rebuilds the record written for timestamp `i` by `write_source`.
fn reconstruct(i: i64) -> LogRecord {
    let c1 = format!(
        "{} {}",
        VOCAB[(i % 6) as usize],
        VOCAB[((i / 6) % 6) as usize]
    );
    let c2 = VOCAB[((i / 2) % 6) as usize].to_string();
    record_with(i, &[("content1", &c1), ("content2", &c2)])
}

#[test]
fn randomized_swap_points_keep_the_stream_linearizable() {
    let n: u64 = 20_000;
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("records.ndjson");
    write_source(&source, n);

    let v1 = VersionTag::new("swap", 1);
    let v2 = VersionTag::new("swap", 2);
    let versions = [(&v1, &rules_v1()), (&v2, &rules_v2())];

    let mut rng = StdRng::seed_from_u64(0x5a11);
    for round in 0..8 {
        let swap_after = rng.random_range(1..n);
        let out = dir.path().join(format!("run-{round}"));
        let output = run_with_swap(
            &source,
            &out,
            engine(&rules_v1(), 1),
            engine(&rules_v2(), 2),
            swap_after,
        );
        audit(&output, n, &versions);
        // The swap fires only after swap_after records, so at least that
        // many carry the old version; the rest is timing-dependent but the
        // new version must appear since the swap lands strictly mid-run.
        let old = output.version_counts.get(&v1.to_string()).copied().unwrap_or(0);
        assert!(old >= swap_after, "swap applied before its trigger point");
        assert!(
            output.version_counts.contains_key(&v2.to_string()),
            "swap at {swap_after} never took effect"
        );
    }
}

#[test]
fn swap_to_the_active_engine_changes_nothing() {
    let n: u64 = 3_000;
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("records.ndjson");
    write_source(&source, n);

    let same = engine(&rules_v1(), 1);
    let v1 = VersionTag::new("swap", 1);
    let output = run_with_swap(&source, &dir.path().join("out"), same.clone(), same, n / 2);
    audit(&output, n, &[(&v1, &rules_v1())]);
    assert_eq!(output.version_counts.len(), 1);
    assert_eq!(output.version_counts[&v1.to_string()], n);
}

#[test]
fn swap_between_runs_applies_to_the_next_record() {
    let n: u64 = 2_000;
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("records.ndjson");
    write_source(&source, n);

    let handle = EngineHandle::new(engine(&rules_v1(), 1));
    let run = |out: &Path| {
        let config = PipelineConfig::new(
            vec![source.clone()],
            out,
            PipelineMode::FluxSieve,
            handle.clone(),
        );
        run_pipeline(&config).unwrap()
    };

    let first = run(&dir.path().join("before"));
    assert_eq!(first.engine_versions.len(), 1);
    assert!(first.engine_versions.contains_key("run-swap-000001"));

    // Swap while no records are in flight; the very next run is entirely
    // on the new version.
    let previous = handle.swap(engine(&rules_v2(), 2));
    assert_eq!(previous.version().to_string(), "run-swap-000001");
    assert_eq!(handle.version().to_string(), "run-swap-000002");

    let second = run(&dir.path().join("after"));
    assert_eq!(second.engine_versions.len(), 1);
    assert_eq!(second.engine_versions["run-swap-000002"], n);
}
