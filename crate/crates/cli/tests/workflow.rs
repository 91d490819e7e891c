//! Drives the binary end to end: generate, publish rules, ingest via the
//! control plane, query both paths, and run a miniature benchmark.

use std::path::Path;
use std::process::{Command, Output};

fn fluxsieve(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluxsieve"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn generate_publish_ingest_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let out = ok(&fluxsieve(
        &[
            "generate",
            "--out",
            "data",
            "--records",
            "2000",
            "--seed",
            "9",
        ],
        root,
    ));
    assert!(out.contains("generated 2000 records"));

    // Publish the generated rule file on a fresh control plane.
    let out = ok(&fluxsieve(
        &["update-rules", "data/rules.tsv", "--control", "ctl"],
        root,
    ));
    assert!(out.contains("published"), "{out}");
    let version_line = out.lines().next().unwrap().to_string();

    // Re-publishing identical rules is a no-op on a resumed updater.
    let out = ok(&fluxsieve(
        &["update-rules", "data/rules.tsv", "--control", "ctl"],
        root,
    ));
    assert!(out.contains("rules unchanged"), "{out}");

    // Ingest with the engine activated from the control channel.
    let out = ok(&fluxsieve(
        &[
            "ingest",
            "--source",
            "data/source",
            "--out",
            "segments",
            "--mode",
            "fluxsieve",
            "--control",
            "ctl",
            "--layout",
            "500",
        ],
        root,
    ));
    assert!(out.contains("ingested 2000 records into 4 segments"), "{out}");
    let published_version = version_line.trim_start_matches("published ").to_string();
    assert!(out.contains(&published_version), "{out}");

    // The generator plants rule 2's literal in a known number of records;
    // enriched and forced-scan answers must agree.
    let query = "content1 CONTAINS \"qq2zz\" | COUNT";
    let enriched = ok(&fluxsieve(
        &[
            "query", query, "--segments", "segments", "--control", "ctl", "--path", "enriched",
        ],
        root,
    ));
    assert!(enriched.contains("path ENRICHED"), "{enriched}");
    let scan = ok(&fluxsieve(
        &[
            "query", query, "--segments", "segments", "--control", "ctl", "--path", "scan",
        ],
        root,
    ));
    assert!(scan.contains("path FALLBACK_SCAN"), "{scan}");
    let count_of = |text: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix("count "))
            .expect("count line")
            .to_string()
    };
    assert_eq!(count_of(&enriched), count_of(&scan));

    // Structured output carries the metrics block.
    let structured = ok(&fluxsieve(
        &[
            "query", query, "--segments", "segments", "--control", "ctl", "--format",
            "structured",
        ],
        root,
    ));
    let value: serde_json::Value = serde_json::from_str(&structured).unwrap();
    assert!(value["count"].is_number());
    assert!(value["metrics"]["files_opened"].is_number());
}

#[test]
fn bench_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let config = r#"
tier = "ULTRA_HIGH"
layouts = [200]
parallelism = [1]
cold_reps = 2
hot_reps = 3
approaches = ["BASELINE_SCAN", "FLUXSIEVE"]
enrichment_modes = ["sparse_list"]
resamples = 100
resample_seed = 7
overhead_records = 0
overhead_rate = 10000.0

[dataset]
total_records = 800
content_fields = 2
words_per_field = 12
vocabulary_size = 256
rule_count = 10
coplanted = [3, 4]
seed = 4
records_per_file = 400

[dataset.planted]
1 = 0
2 = 2
3 = 2
4 = 2
"#;
    std::fs::write(root.join("bench.toml"), config).unwrap();

    let out = ok(&fluxsieve(
        &["bench", "--config", "bench.toml", "--work", "work"],
        root,
    ));
    assert!(out.contains("== query cells"), "{out}");
    assert!(out.contains("FLUXSIEVE"), "{out}");
    assert!(root.join("work/report.json").exists());

    let table = ok(&fluxsieve(
        &["report", "--input", "work/report.json", "--format", "table"],
        root,
    ));
    assert!(table.contains("== ingest =="), "{table}");
    let structured = ok(&fluxsieve(
        &[
            "report",
            "--input",
            "work/report.json",
            "--format",
            "structured",
        ],
        root,
    ));
    assert!(serde_json::from_str::<serde_json::Value>(&structured).is_ok());
}

#[test]
fn fluxsieve_ingest_without_rules_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir(root.join("src")).unwrap();
    let output = fluxsieve(
        &[
            "ingest", "--source", "src", "--out", "segs", "--mode", "fluxsieve",
        ],
        root,
    );
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("--rules or --control"), "{err}");
}
