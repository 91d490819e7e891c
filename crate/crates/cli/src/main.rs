//! Command-line front end: dataset generation, both ingestion variants,
//! rule publishing over the file-backed control plane, ad-hoc queries, and
//! the benchmark matrix with report rendering.

use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fluxsieve_core::control::{
    engine_artifact_key, ControlChannel, DirectoryStore, FileLogChannel, ObjectStore,
    ProcessorInstance, Updater,
};
use fluxsieve_core::dataset::{generate_dataset, DatasetSpec, SelectivityTier};
use fluxsieve_core::engine::{deserialize_engine, read_manifest};
use fluxsieve_core::harness::{
    run_benchmark, report_structured, report_table, BenchConfig, BenchReport,
};
use fluxsieve_core::model::EnrichmentMode;
use fluxsieve_core::pipeline::{
    ndjson_sources, run_pipeline, EngineHandle, PipelineConfig, PipelineMode,
};
use fluxsieve_core::query::{
    execute_plan, parse_query, plan_with_path, AccessPath, QueryOutput, RuleRegistry,
};
use fluxsieve_core::rules::{parse_rule_file, RuleSet, VersionTag};
use fluxsieve_core::CompiledEngine;

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "fluxsieve",
    version,
    about = "In-stream multi-pattern filtering with enrichment-backed queries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted matches and ground truth
    Generate(GenerateArgs),
    /// Ingest newline-delimited JSON sources into columnar segments
    Ingest(IngestArgs),
    /// Publish a rule file as a new engine version on the control plane
    UpdateRules(UpdateRulesArgs),
    /// Run one query against a segment directory
    Query(QueryArgs),
    /// Run the benchmark matrix described by a config file
    Bench(BenchArgs),
    /// Re-render a saved benchmark report
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TierArg {
    UltraHigh,
    High,
}

impl From<TierArg> for SelectivityTier {
    fn from(value: TierArg) -> Self {
        match value {
            TierArg::UltraHigh => SelectivityTier::UltraHigh,
            TierArg::High => SelectivityTier::High,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Fluxsieve,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnrichmentArg {
    Sparse,
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    /// Pick per predicate coverage
    Auto,
    Enriched,
    Scan,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Structured,
}

#[derive(Args)]
struct GenerateArgs {
    /// Dataset spec file, TOML or JSON; defaults to the desk-scale spec
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Selectivity tier for the default spec
    #[arg(long, value_enum, default_value_t = TierArg::UltraHigh)]
    tier: TierArg,
    /// Override the default spec's record count
    #[arg(long)]
    records: Option<u64>,
    /// Generation seed for the default spec
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of *.ndjson source files
    #[arg(long)]
    source: PathBuf,
    /// Segment output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Rule file (TSV) compiled into the matching engine
    #[arg(long, conflicts_with = "control")]
    rules: Option<PathBuf>,
    /// Control directory to pull the active engine version from
    #[arg(long)]
    control: Option<PathBuf>,
    /// Records per segment file
    #[arg(long, default_value_t = 10_000)]
    layout: usize,
    #[arg(long, value_enum, default_value_t = EnrichmentArg::Sparse)]
    enrichment: EnrichmentArg,
    /// Dense mode column count; defaults to the highest rule id
    #[arg(long)]
    dense_width: Option<u32>,
    /// Pace input at this many records per second
    #[arg(long)]
    rate: Option<f64>,
    /// Write the run report as JSON here
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct UpdateRulesArgs {
    /// Rule file (TSV) to publish
    rulefile: PathBuf,
    /// Control directory holding the object store and channel log
    #[arg(long)]
    control: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// Query text, e.g. 'content1 CONTAINS "alpha" | COUNT'
    text: String,
    /// Segment directory to query
    #[arg(long)]
    segments: PathBuf,
    /// Rule file (TSV) defining the enrichment registry
    #[arg(long, conflicts_with = "control")]
    rules: Option<PathBuf>,
    /// Control directory to pull the active engine from
    #[arg(long)]
    control: Option<PathBuf>,
    /// Access path; auto picks from predicate coverage
    #[arg(long, value_enum, default_value_t = PathArg::Auto)]
    path: PathArg,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Rows printed in table format; counts and metrics are unaffected
    #[arg(long, default_value_t = 20)]
    limit: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config file, TOML or JSON
    #[arg(long)]
    config: PathBuf,
    /// Working directory for datasets, segments, and reports
    #[arg(long, default_value = "bench-work")]
    work: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Where to save the structured report; defaults to report.json in
    /// the working directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Structured report saved by the bench subcommand
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::UpdateRules(args) => cmd_update_rules(args),
        Command::Query(args) => cmd_query(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut cause = err.source();
            while let Some(inner) = cause {
                eprintln!("  caused by: {inner}");
                cause = inner.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn now_epoch() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

/// Loads a TOML or JSON value by file extension; anything not named
/// *.json parses as TOML.
fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Box<dyn Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let value = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
    } else {
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
    };
    Ok(value)
}

fn cmd_generate(args: GenerateArgs) -> CliResult {
    let mut spec: DatasetSpec = match &args.spec {
        Some(path) => load_config(path)?,
        None => DatasetSpec::desk(args.tier.into(), args.seed),
    };
    if let Some(records) = args.records {
        spec.total_records = records;
        // Keep file count sane when shrinking far below the default.
        spec.records_per_file = spec.records_per_file.min(records.max(1));
    }
    spec.validate()?;
    let layout = generate_dataset(&spec, &args.out)?;
    println!(
        "generated {} records into {}",
        spec.total_records,
        layout.source_dir.display()
    );
    println!("rules:        {}", layout.rules_path.display());
    println!("ground truth: {}", layout.ground_truth_path.display());
    println!("manifest:     {}", layout.manifest_path.display());
    Ok(())
}

/// Version tag used when an engine comes from a rule file rather than the
/// control plane. Ingest and query share it, so enrichment written by an
/// ad-hoc ingest is trusted by an ad-hoc query over the same rule file.
fn adhoc_version() -> VersionTag {
    VersionTag::new("adhoc", 1)
}

struct ControlPaths {
    store: PathBuf,
    channel: PathBuf,
    updater_state: PathBuf,
}

fn control_paths(dir: &Path) -> ControlPaths {
    ControlPaths {
        store: dir.join("store"),
        channel: dir.join("channel.ndjson"),
        updater_state: dir.join("updater.json"),
    }
}

/// Publisher-side continuation saved between update-rules invocations.
#[derive(Serialize, Deserialize)]
struct UpdaterState {
    run: String,
    next_seq: u64,
    next_activation_seq: u64,
    current_version: Option<VersionTag>,
}

/// Catches a fresh processor instance up on everything the channel holds
/// and returns its engine handle.
fn catch_up_from_control(dir: &Path) -> Result<EngineHandle, Box<dyn Error>> {
    let paths = control_paths(dir);
    if !paths.channel.exists() {
        return Err(format!("no channel log at {}", paths.channel.display()).into());
    }
    let store = Arc::new(DirectoryStore::new(&paths.store));
    let channel = FileLogChannel::new(&paths.channel);
    let handle = EngineHandle::empty();
    let instance = ProcessorInstance::new("cli", handle.clone(), store);
    let mut cursor = 0;
    instance.process_new(&channel, &mut cursor, now_epoch())?;
    Ok(handle)
}

fn engine_from_rule_file(path: &Path) -> Result<CompiledEngine, Box<dyn Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let rules = parse_rule_file(&text)?;
    Ok(CompiledEngine::compile(&rules, adhoc_version())?)
}

fn cmd_ingest(args: IngestArgs) -> CliResult {
    let mode = match args.mode {
        ModeArg::Baseline => PipelineMode::Baseline,
        ModeArg::Fluxsieve => PipelineMode::FluxSieve,
    };
    let handle = match (mode, &args.rules, &args.control) {
        (PipelineMode::Baseline, _, _) => EngineHandle::empty(),
        (PipelineMode::FluxSieve, Some(path), _) => {
            EngineHandle::new(Arc::new(engine_from_rule_file(path)?))
        }
        (PipelineMode::FluxSieve, None, Some(dir)) => catch_up_from_control(dir)?,
        (PipelineMode::FluxSieve, None, None) => {
            return Err("fluxsieve mode needs --rules or --control".into());
        }
    };
    if mode == PipelineMode::FluxSieve && handle.load().rule_count() == 0 {
        return Err("the matching engine has no rules; nothing would be enriched".into());
    }

    let sources = ndjson_sources(&args.source)?;
    if sources.is_empty() {
        return Err(format!("no *.ndjson files under {}", args.source.display()).into());
    }
    let mut config = PipelineConfig::new(sources, &args.out, mode, handle.clone());
    config.segment_records = args.layout;
    config.rate_limit = args.rate;
    config.enrichment = match args.enrichment {
        EnrichmentArg::Sparse => EnrichmentMode::SparseList,
        EnrichmentArg::Dense => EnrichmentMode::DenseBoolean {
            width: args
                .dense_width
                .unwrap_or_else(|| handle.load().ruleset().max_rule_id()),
        },
    };
    let report = run_pipeline(&config)?;

    println!(
        "ingested {} records into {} segments under {}",
        report.records_out,
        report.segments_written,
        args.out.display()
    );
    println!(
        "throughput {:.0} rec/s, wall {:.2}s, process cpu {:.2}s",
        report.throughput_rps, report.wall_seconds, report.process_cpu_seconds
    );
    if mode == PipelineMode::FluxSieve {
        println!(
            "matched records {}, match entries {}, engine {}",
            report.matched_records,
            report.match_entries,
            handle.version()
        );
    }
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_vec_pretty(&report)?)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_update_rules(args: UpdateRulesArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.rulefile)
        .map_err(|e| format!("cannot read {}: {e}", args.rulefile.display()))?;
    let target = parse_rule_file(&text)?;

    let paths = control_paths(&args.control);
    std::fs::create_dir_all(&args.control)?;
    let store: Arc<dyn ObjectStore> = Arc::new(DirectoryStore::new(&paths.store));
    let channel: Arc<dyn ControlChannel> = Arc::new(FileLogChannel::new(&paths.channel));

    let updater = match std::fs::read(&paths.updater_state) {
        Ok(bytes) => {
            let state: UpdaterState = serde_json::from_slice(&bytes)
                .map_err(|e| format!("{}: {e}", paths.updater_state.display()))?;
            let current_rules = match &state.current_version {
                None => RuleSet::empty(),
                Some(version) => {
                    let bytes = store.get(&engine_artifact_key(version))?;
                    let manifest = read_manifest(&bytes)?;
                    deserialize_engine(&bytes, version, &manifest.checksum)?
                        .ruleset()
                        .clone()
                }
            };
            Updater::resume(
                store.clone(),
                channel.clone(),
                &state.run,
                state.next_seq,
                state.next_activation_seq,
                current_rules,
                state.current_version,
            )
        }
        Err(_) => Updater::new(store.clone(), channel.clone()),
    };

    let outcome = updater.publish(&target, now_epoch())?;
    match &outcome.notification {
        None => println!(
            "rules unchanged; version {} stays active",
            outcome.version
        ),
        Some(notification) => {
            println!("published {}", outcome.version);
            println!("checksum {}", notification.checksum);
            println!(
                "delta: +{} added, -{} removed, ~{} modified ({} rules total)",
                outcome.delta.added.len(),
                outcome.delta.removed.len(),
                outcome.delta.modified.len(),
                notification.rule_count
            );
        }
    }

    let state = UpdaterState {
        run: outcome.version.run().to_string(),
        next_seq: outcome.version.seq() + 1,
        next_activation_seq: outcome
            .notification
            .as_ref()
            .map(|n| n.activation_seq + 1)
            .unwrap_or(1),
        current_version: Some(outcome.version),
    };
    std::fs::write(&paths.updater_state, serde_json::to_vec_pretty(&state)?)?;
    Ok(())
}

fn cmd_query(args: QueryArgs) -> CliResult {
    let query = parse_query(&args.text)?;
    let registry = match (&args.rules, &args.control) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            RuleRegistry::new(&parse_rule_file(&text)?, adhoc_version())
        }
        (None, Some(dir)) => {
            let handle = catch_up_from_control(dir)?;
            RuleRegistry::from_engine(&handle.load())
        }
        // No registry: every predicate is uncovered and plans fall back
        // to scanning.
        (None, None) => RuleRegistry::new(&RuleSet::empty(), adhoc_version()),
    };

    let force = match args.path {
        PathArg::Auto => None,
        PathArg::Enriched => Some(AccessPath::Enriched),
        PathArg::Scan => Some(AccessPath::FallbackScan),
        PathArg::Mixed => Some(AccessPath::Mixed),
    };
    let plan = plan_with_path(&query, &registry, args.workers, force)?;
    let result = execute_plan(&plan, &args.segments)?;

    match args.format {
        FormatArg::Structured => {
            let rows = match &result.output {
                QueryOutput::Count(_) => None,
                QueryOutput::Rows(rows) => {
                    Some(rows.iter().map(|r| r.to_wire_json()).collect::<Vec<_>>())
                }
            };
            let value = serde_json::json!({
                "query": args.text,
                "path": plan.path.to_string(),
                "count": result.output.count(),
                "rows": rows,
                "metrics": result.metrics,
            });
            println!("{}", serde_json::to_string_pretty(&value)?);
        }
        FormatArg::Table => {
            println!("path {}", plan.path);
            match &result.output {
                QueryOutput::Count(count) => println!("count {count}"),
                QueryOutput::Rows(rows) => {
                    println!("{} rows", rows.len());
                    for record in rows.iter().take(args.limit) {
                        println!("  {}", record.to_wire_json());
                    }
                    if rows.len() > args.limit {
                        println!("  ... {} more", rows.len() - args.limit);
                    }
                }
            }
            let m = &result.metrics;
            println!(
                "files opened {}, pruned {}, fallback {}; rows scanned {}, matched {}; {:.4}s",
                m.files_opened,
                m.files_pruned,
                m.files_fallback,
                m.rows_scanned,
                m.rows_matched,
                m.wall_seconds
            );
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    let config: BenchConfig = load_config(&args.config)?;
    let report = run_benchmark(&config, &args.work)?;
    let out = args.out.unwrap_or_else(|| args.work.join("report.json"));
    std::fs::write(&out, report_structured(&report))?;
    match args.format {
        FormatArg::Table => print!("{}", report_table(&report)),
        FormatArg::Structured => println!("{}", report_structured(&report)),
    }
    eprintln!("structured report saved to {}", out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| format!("cannot read {}: {e}", args.input.display()))?;
    let report: BenchReport = serde_json::from_str(&text)?;
    match args.format {
        FormatArg::Table => print!("{}", report_table(&report)),
        FormatArg::Structured => println!("{}", report_structured(&report)),
    }
    Ok(())
}
