//! Benchmark harness: dataset preparation, both ingestion variants, the
//! query matrix (four shapes plus count variants, cold and hot, layout by
//! parallelism), overhead measurement at a paced ingest rate, and report
//! assembly with medians and bootstrapped confidence intervals.
//!
//! Every cell's query result is checked against the generator's ground
//! truth before any timing is recorded; a cell that disagrees fails the
//! whole run. Cells execute sequentially to keep them from disturbing each
//! other's measurements.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::os::fd::AsRawFd;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    generate_dataset, rule_literal, DatasetError, DatasetLayout, DatasetManifest, DatasetSpec,
    GroundTruth, SelectivityTier, ABSENT_RULE, PAIR_RULE_A, PAIR_RULE_B, RARE_RULE,
};
use crate::engine::CompiledEngine;
use crate::model::{EnrichmentMode, Query, QueryMode, QueryPredicate};
use crate::pipeline::{
    ndjson_sources, run_pipeline, EngineHandle, PipelineConfig, PipelineError, PipelineMode,
    PipelineReport,
};
use crate::query::{
    execute_plan, plan_with_path, AccessPath, QueryError, QueryOutput, QueryResult, RuleRegistry,
};
use crate::rules::VersionTag;
use crate::segment::{list_segments, SegmentError};
use crate::stats::{bootstrap_ci, median, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Approach {
    BaselineScan,
    #[serde(rename = "FLUXSIEVE")]
    FluxSieve,
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Approach::BaselineScan => "BASELINE_SCAN",
            Approach::FluxSieve => "FLUXSIEVE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    Cold,
    Hot,
}

impl std::fmt::Display for Temperature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Temperature::Cold => "cold",
            Temperature::Hot => "hot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dataset: DatasetSpec,
    pub tier: SelectivityTier,
    /// Segment records-per-file values to benchmark.
    pub layouts: Vec<u64>,
    pub parallelism: Vec<usize>,
    pub cold_reps: u32,
    pub hot_reps: u32,
    pub approaches: Vec<Approach>,
    /// Enrichment layouts to ingest; query cells run against the first.
    pub enrichment_modes: Vec<EnrichmentMode>,
    pub resamples: u32,
    pub resample_seed: u64,
    /// Records pushed through each pipeline mode for the overhead
    /// measurement, rounded up to whole source files; 0 skips it.
    pub overhead_records: u64,
    /// Paced arrival rate for the overhead measurement, records/second.
    pub overhead_rate: f64,
}

impl BenchConfig {
    /// The desk-scale configuration: 1M records, fine and coarse segment
    /// layouts, 1 and 4 workers, 10 cold and 40 hot reps.
    pub fn desk(tier: SelectivityTier, seed: u64) -> Self {
        BenchConfig {
            dataset: DatasetSpec::desk(tier, seed),
            tier,
            layouts: vec![2_000, 10_000],
            parallelism: vec![1, 4],
            cold_reps: 10,
            hot_reps: 40,
            approaches: vec![Approach::BaselineScan, Approach::FluxSieve],
            enrichment_modes: vec![EnrichmentMode::SparseList],
            resamples: crate::stats::DEFAULT_RESAMPLES,
            resample_seed: 0x5eed,
            overhead_records: 100_000,
            overhead_rate: 10_000.0,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |reason: String| Err(BenchError::BadConfig(reason));
        self.dataset.validate()?;
        if self.layouts.is_empty() || self.layouts.iter().any(|&l| l == 0) {
            return bad("layouts must be non-empty, positive".into());
        }
        if self.parallelism.is_empty() || self.parallelism.iter().any(|&p| p == 0) {
            return bad("parallelism levels must be non-empty, positive".into());
        }
        if self.cold_reps < 2 || self.hot_reps < 2 {
            return bad("repetition counts must be at least 2 for confidence intervals".into());
        }
        if self.approaches.is_empty() || self.enrichment_modes.is_empty() {
            return bad("approaches and enrichment_modes must be non-empty".into());
        }
        if self.resamples == 0 {
            return bad("resamples must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("bad benchmark config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cell {cell}: result mismatch: {detail}")]
    ResultMismatch { cell: String, detail: String },
    #[error("harness io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A named benchmark query shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchQuery {
    pub name: String,
    pub query: Query,
}

fn predicate(field: &str, rule_id: u32) -> QueryPredicate {
    QueryPredicate {
        field: field.into(),
        term: rule_literal(rule_id),
    }
}

/// The benchmark's seven query shapes: a non-matching filter, a rare-match
/// filter, the counting filter, a two-field filter, and the three count
/// variants.
pub fn benchmark_queries() -> Vec<BenchQuery> {
    let single = |rule_id: u32, mode: QueryMode| Query {
        predicates: vec![predicate("content1", rule_id)],
        mode,
        time_range: None,
    };
    let pair = |mode: QueryMode| Query {
        predicates: vec![
            predicate("content1", PAIR_RULE_A),
            predicate("content2", PAIR_RULE_B),
        ],
        mode,
        time_range: None,
    };
    vec![
        BenchQuery {
            name: "Q1".into(),
            query: single(ABSENT_RULE, QueryMode::ReturnRows),
        },
        BenchQuery {
            name: "Q2".into(),
            query: single(RARE_RULE, QueryMode::ReturnRows),
        },
        BenchQuery {
            name: "Q3".into(),
            query: single(RARE_RULE, QueryMode::Count),
        },
        BenchQuery {
            name: "Q4".into(),
            query: pair(QueryMode::ReturnRows),
        },
        BenchQuery {
            name: "Q1_count".into(),
            query: single(ABSENT_RULE, QueryMode::Count),
        },
        BenchQuery {
            name: "Q2_count".into(),
            query: single(RARE_RULE, QueryMode::Count),
        },
        BenchQuery {
            name: "Q4_count".into(),
            query: pair(QueryMode::Count),
        },
    ]
}

/// Record ordinals a benchmark query must return, from the ground truth.
pub fn expected_ordinals(truth: &GroundTruth, name: &str) -> Vec<u64> {
    match name {
        "Q1" | "Q1_count" => Vec::new(),
        "Q2" | "Q3" | "Q2_count" => truth.ordinals(RARE_RULE).to_vec(),
        "Q4" | "Q4_count" => truth.both(PAIR_RULE_A, PAIR_RULE_B),
        other => panic!("unknown benchmark query {other}"),
    }
}

/// Checks a query result against the expected ordinals; ordinal k maps to
/// timestamp `timestamp_base + k`.
pub fn verify_result(
    result: &QueryResult,
    expected: &[u64],
    timestamp_base: i64,
) -> Result<(), String> {
    match &result.output {
        QueryOutput::Count(count) => {
            if *count != expected.len() as u64 {
                return Err(format!("count {} != expected {}", count, expected.len()));
            }
        }
        QueryOutput::Rows(rows) => {
            let mut got: Vec<i64> = rows.iter().map(|r| r.timestamp).collect();
            got.sort_unstable();
            let want: Vec<i64> = expected
                .iter()
                .map(|&o| timestamp_base + o as i64)
                .collect();
            if got != want {
                return Err(format!(
                    "row timestamps differ: got {} rows, expected {}",
                    got.len(),
                    want.len()
                ));
            }
        }
    }
    Ok(())
}

/// How the cold protocol evicted cached segment data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdMechanism {
    /// The platform accepted per-file advice to drop its cached pages.
    PageCacheAdvice,
    /// Advice was refused; a decoy sweep displaced the cache instead.
    DecoyRead,
}

impl std::fmt::Display for ColdMechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColdMechanism::PageCacheAdvice => "page_cache_advice",
            ColdMechanism::DecoyRead => "decoy_read",
        })
    }
}

/// Asks the platform to forget cached pages for every listed file. Falls
/// back to streaming a decoy file large enough to displace the cache when
/// the advice call is refused.
pub fn flush_file_caches(files: &[PathBuf], scratch: &Path) -> Result<ColdMechanism, BenchError> {
    let mut advised = true;
    for path in files {
        let file = File::open(path).map_err(io_err(path))?;
        let fd = file.as_raw_fd();
        // Flush first: only clean pages are candidates for eviction.
        // Safety: fd is open for the duration of both calls.
        unsafe {
            libc::fsync(fd);
            if libc::posix_fadvise(fd, 0, 0, libc::POSIX_FADV_DONTNEED) != 0 {
                advised = false;
            }
        }
    }
    if advised {
        return Ok(ColdMechanism::PageCacheAdvice);
    }
    let decoy = scratch.join("cache-decoy.bin");
    if !decoy.exists() {
        let chunk = vec![0u8; 1 << 20];
        let mut file = File::create(&decoy).map_err(io_err(&decoy))?;
        use std::io::Write;
        for _ in 0..1024 {
            file.write_all(&chunk).map_err(io_err(&decoy))?;
        }
    }
    let mut sink = 0u64;
    let bytes = std::fs::read(&decoy).map_err(io_err(&decoy))?;
    for b in bytes {
        sink = sink.wrapping_add(b as u64);
    }
    std::hint::black_box(sink);
    Ok(ColdMechanism::DecoyRead)
}

/// One ingestion pass recorded in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub approach: Approach,
    /// Segment records-per-file.
    pub layout: u64,
    /// Enrichment layout; None for the baseline approach.
    pub enrichment: Option<EnrichmentMode>,
    pub dir: PathBuf,
    pub total_segment_bytes: u64,
    pub report: PipelineReport,
    /// Dataset identity the marker was written for.
    dataset_seed: u64,
    dataset_records: u64,
}

/// One measured benchmark cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchCell {
    pub approach: Approach,
    pub query: String,
    pub layout: u64,
    pub parallelism: usize,
    pub temperature: Temperature,
    pub samples_seconds: Vec<f64>,
    pub median_seconds: f64,
    pub ci_lo_seconds: f64,
    pub ci_hi_seconds: f64,
    /// Baseline median over this cell's median; only on FLUXSIEVE cells.
    pub speedup_vs_baseline: Option<f64>,
    pub result_count: u64,
    pub files_opened: u64,
    pub files_pruned: u64,
    pub rows_scanned: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeOverhead {
    pub mode: PipelineMode,
    pub achieved_rps: f64,
    pub report: PipelineReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverheadReport {
    pub rate_target: f64,
    pub records: u64,
    /// Engine compilation time paid once at startup by the enriching mode.
    pub startup_compile_seconds: f64,
    pub baseline: ModeOverhead,
    pub fluxsieve: ModeOverhead,
    /// FLUXSIEVE throughput over baseline throughput.
    pub throughput_ratio: f64,
    /// (FLUXSIEVE − baseline) / baseline, in process CPU seconds.
    pub cpu_overhead_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub cold_mechanism: ColdMechanism,
    pub ingests: Vec<IngestSummary>,
    pub cells: Vec<BenchCell>,
    pub overhead: Option<OverheadReport>,
}

/// Sums the sizes of the segment files in `dir`.
pub fn segment_total_bytes(dir: &Path) -> Result<u64, BenchError> {
    let mut total = 0u64;
    for path in list_segments(dir)? {
        total += std::fs::metadata(&path).map_err(io_err(&path))?.len();
    }
    Ok(total)
}

/// Generates the dataset under `work/dataset`, reusing an existing one
/// whose manifest matches the spec exactly.
pub fn prepare_dataset(
    spec: &DatasetSpec,
    work: &Path,
) -> Result<(DatasetLayout, DatasetManifest, GroundTruth), BenchError> {
    let root = work.join("dataset");
    let layout = DatasetLayout::at(&root);
    if let Ok(bytes) = std::fs::read(&layout.manifest_path) {
        if let Ok(manifest) = serde_json::from_slice::<DatasetManifest>(&bytes) {
            if manifest.spec == *spec {
                let truth = GroundTruth::load(&layout.ground_truth_path)?;
                return Ok((layout, manifest, truth));
            }
        }
    }
    if root.exists() {
        std::fs::remove_dir_all(&root).map_err(io_err(&root))?;
    }
    let layout = generate_dataset(spec, &root)?;
    let manifest: DatasetManifest = serde_json::from_slice(
        &std::fs::read(&layout.manifest_path).map_err(io_err(&layout.manifest_path))?,
    )
    .map_err(DatasetError::BadGroundTruth)?;
    let truth = GroundTruth::load(&layout.ground_truth_path)?;
    Ok((layout, manifest, truth))
}

/// The engine version all harness ingests and registries share.
pub fn harness_version() -> VersionTag {
    VersionTag::new("bench", 1)
}

fn ingest_dir_name(approach: Approach, layout: u64, mode: Option<&EnrichmentMode>) -> String {
    let suffix = match mode {
        None => "plain".to_string(),
        Some(EnrichmentMode::SparseList) => "sparse".to_string(),
        Some(EnrichmentMode::DenseBoolean { width }) => format!("dense{width}"),
    };
    format!("{}-{}-{}", approach.to_string().to_lowercase(), layout, suffix)
}

/// Ingests the dataset into segments for one (approach, layout, mode)
/// combination, reusing a previous run whose marker matches.
pub fn ingest_segments(
    spec: &DatasetSpec,
    dataset: &DatasetLayout,
    approach: Approach,
    layout: u64,
    mode: Option<&EnrichmentMode>,
    segments_root: &Path,
) -> Result<IngestSummary, BenchError> {
    let dir = segments_root.join(ingest_dir_name(approach, layout, mode));
    let marker_path = dir.join("ingest.json");
    if let Ok(bytes) = std::fs::read(&marker_path) {
        if let Ok(summary) = serde_json::from_slice::<IngestSummary>(&bytes) {
            if summary.dataset_seed == spec.seed
                && summary.dataset_records == spec.total_records
                && summary.layout == layout
                && summary.enrichment.as_ref() == mode
            {
                return Ok(summary);
            }
        }
    }
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }

    let handle = match approach {
        Approach::BaselineScan => EngineHandle::empty(),
        Approach::FluxSieve => {
            let engine =
                CompiledEngine::compile(&crate::dataset::dataset_rules(spec), harness_version())
                    .expect("generated rules compile");
            EngineHandle::new(std::sync::Arc::new(engine))
        }
    };
    let mut config = PipelineConfig::new(
        ndjson_sources(&dataset.source_dir)?,
        &dir,
        match approach {
            Approach::BaselineScan => PipelineMode::Baseline,
            Approach::FluxSieve => PipelineMode::FluxSieve,
        },
        handle,
    );
    config.segment_records = layout as usize;
    if let Some(mode) = mode {
        config.enrichment = mode.clone();
    }
    let report = run_pipeline(&config)?;
    let summary = IngestSummary {
        approach,
        layout,
        enrichment: mode.cloned(),
        dir: dir.clone(),
        total_segment_bytes: segment_total_bytes(&dir)?,
        report,
        dataset_seed: spec.seed,
        dataset_records: spec.total_records,
    };
    std::fs::write(
        &marker_path,
        serde_json::to_vec_pretty(&summary).expect("summary serializes"),
    )
    .map_err(io_err(&marker_path))?;
    Ok(summary)
}

/// Measures both pipeline modes over the same paced input.
pub fn measure_overhead(
    spec: &DatasetSpec,
    dataset: &DatasetLayout,
    records: u64,
    rate: f64,
    enrichment: &EnrichmentMode,
    work: &Path,
) -> Result<OverheadReport, BenchError> {
    // Whole source files, enough to cover the requested record count.
    let all = ndjson_sources(&dataset.source_dir)?;
    let files_needed = records.div_ceil(spec.records_per_file).max(1) as usize;
    let sources: Vec<PathBuf> = all.into_iter().take(files_needed).collect();

    let rules = crate::dataset::dataset_rules(spec);
    let compile_start = Instant::now();
    let engine = CompiledEngine::compile(&rules, harness_version()).expect("rules compile");
    let startup_compile_seconds = compile_start.elapsed().as_secs_f64();

    let run = |mode: PipelineMode, handle: EngineHandle| -> Result<ModeOverhead, BenchError> {
        let dir = work.join(format!("overhead-{mode:?}").to_lowercase());
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        // Pre-read the sources so both modes start from the same cache
        // state; otherwise whichever runs first pays the cold reads.
        for path in &sources {
            let file = File::open(path).map_err(|source| PipelineError::Source {
                path: path.clone(),
                source,
            })?;
            std::io::copy(&mut BufReader::new(file), &mut std::io::sink())
                .map_err(io_err(path))?;
        }
        let mut config = PipelineConfig::new(sources.clone(), &dir, mode, handle);
        config.rate_limit = Some(rate);
        config.enrichment = enrichment.clone();
        config.segment_records = 10_000;
        let report = run_pipeline(&config)?;
        Ok(ModeOverhead {
            mode,
            achieved_rps: report.throughput_rps,
            report,
        })
    };
    let baseline = run(PipelineMode::Baseline, EngineHandle::empty())?;
    let fluxsieve = run(
        PipelineMode::FluxSieve,
        EngineHandle::new(std::sync::Arc::new(engine)),
    )?;

    let throughput_ratio = fluxsieve.achieved_rps / baseline.achieved_rps;
    let base_cpu = baseline.report.process_cpu_seconds;
    let cpu_overhead_fraction = (fluxsieve.report.process_cpu_seconds - base_cpu) / base_cpu;
    Ok(OverheadReport {
        rate_target: rate,
        records: baseline.report.records_in,
        startup_compile_seconds,
        baseline,
        fluxsieve,
        throughput_ratio,
        cpu_overhead_fraction,
    })
}

/// Runs the full benchmark under `work`: prepares the dataset, ingests
/// every configured combination, measures every cell, and assembles the
/// report. Reuses dataset and ingest outputs from a previous run in the
/// same directory when their identities match.
pub fn run_benchmark(config: &BenchConfig, work: &Path) -> Result<BenchReport, BenchError> {
    config.validate()?;
    std::fs::create_dir_all(work).map_err(io_err(work))?;
    let (dataset, manifest, truth) = prepare_dataset(&config.dataset, work)?;

    let segments_root = work.join("segments");
    std::fs::create_dir_all(&segments_root).map_err(io_err(&segments_root))?;
    let mut ingests: Vec<IngestSummary> = Vec::new();
    for &approach in &config.approaches {
        for &layout in &config.layouts {
            match approach {
                Approach::BaselineScan => {
                    ingests.push(ingest_segments(
                        &config.dataset,
                        &dataset,
                        approach,
                        layout,
                        None,
                        &segments_root,
                    )?);
                }
                Approach::FluxSieve => {
                    for mode in &config.enrichment_modes {
                        ingests.push(ingest_segments(
                            &config.dataset,
                            &dataset,
                            approach,
                            layout,
                            Some(mode),
                            &segments_root,
                        )?);
                    }
                }
            }
        }
    }

    // Query cells run against the first enrichment mode's segments.
    let cell_mode = &config.enrichment_modes[0];
    let registry = RuleRegistry::new(&crate::dataset::dataset_rules(&config.dataset), harness_version());
    let queries = benchmark_queries();
    let mut cold_mechanism = ColdMechanism::PageCacheAdvice;
    let mut cells: Vec<BenchCell> = Vec::new();

    for &approach in &config.approaches {
        for &layout in &config.layouts {
            let summary = ingests
                .iter()
                .find(|s| {
                    s.approach == approach
                        && s.layout == layout
                        && match approach {
                            Approach::BaselineScan => s.enrichment.is_none(),
                            Approach::FluxSieve => s.enrichment.as_ref() == Some(cell_mode),
                        }
                })
                .expect("ingested above");
            let segment_files = list_segments(&summary.dir)?;
            for &parallelism in &config.parallelism {
                for bench_query in &queries {
                    let force = match approach {
                        Approach::BaselineScan => Some(AccessPath::FallbackScan),
                        Approach::FluxSieve => None,
                    };
                    let plan =
                        plan_with_path(&bench_query.query, &registry, parallelism, force)
                            .map_err(QueryError::Plan)?;
                    let cell_name = format!(
                        "{approach}/{}/{layout}/{parallelism}",
                        bench_query.name
                    );

                    // Correctness gate before any timing.
                    let expected = expected_ordinals(&truth, &bench_query.name);
                    let verify = execute_plan(&plan, &summary.dir)?;
                    verify_result(&verify, &expected, manifest.timestamp_base).map_err(
                        |detail| BenchError::ResultMismatch {
                            cell: cell_name.clone(),
                            detail,
                        },
                    )?;

                    let mut run_reps = |temperature: Temperature,
                                        reps: u32|
                     -> Result<Vec<f64>, BenchError> {
                        let mut samples = Vec::with_capacity(reps as usize);
                        for _ in 0..reps {
                            if temperature == Temperature::Cold {
                                cold_mechanism = flush_file_caches(&segment_files, work)?;
                            }
                            let start = Instant::now();
                            let result = execute_plan(&plan, &summary.dir)?;
                            samples.push(start.elapsed().as_secs_f64());
                            // Results must hold on every repetition, not
                            // just the gate run.
                            verify_result(&result, &expected, manifest.timestamp_base)
                                .map_err(|detail| BenchError::ResultMismatch {
                                    cell: cell_name.clone(),
                                    detail,
                                })?;
                        }
                        Ok(samples)
                    };

                    let cold_samples = run_reps(Temperature::Cold, config.cold_reps)?;
                    // One warmup so hot timings start from warm caches.
                    let _ = execute_plan(&plan, &summary.dir)?;
                    let hot_samples = run_reps(Temperature::Hot, config.hot_reps)?;

                    for (temperature, samples) in
                        [(Temperature::Cold, cold_samples), (Temperature::Hot, hot_samples)]
                    {
                        let med = median(&samples);
                        let (ci_lo, ci_hi) = bootstrap_ci(
                            &samples,
                            0.95,
                            config.resamples,
                            config.resample_seed,
                        )?;
                        cells.push(BenchCell {
                            approach,
                            query: bench_query.name.clone(),
                            layout,
                            parallelism,
                            temperature,
                            samples_seconds: samples,
                            median_seconds: med,
                            ci_lo_seconds: ci_lo,
                            ci_hi_seconds: ci_hi,
                            speedup_vs_baseline: None,
                            result_count: verify.output.count(),
                            files_opened: verify.metrics.files_opened,
                            files_pruned: verify.metrics.files_pruned,
                            rows_scanned: verify.metrics.rows_scanned,
                        });
                    }
                }
            }
        }
    }

    // Pair FLUXSIEVE cells with their baseline counterparts for speedups.
    let baseline_medians: BTreeMap<(String, u64, usize, String), f64> = cells
        .iter()
        .filter(|c| c.approach == Approach::BaselineScan)
        .map(|c| {
            (
                (
                    c.query.clone(),
                    c.layout,
                    c.parallelism,
                    c.temperature.to_string(),
                ),
                c.median_seconds,
            )
        })
        .collect();
    for cell in &mut cells {
        if cell.approach == Approach::FluxSieve {
            let key = (
                cell.query.clone(),
                cell.layout,
                cell.parallelism,
                cell.temperature.to_string(),
            );
            cell.speedup_vs_baseline = baseline_medians
                .get(&key)
                .map(|base| base / cell.median_seconds);
        }
    }

    let overhead = if config.overhead_records > 0 {
        Some(measure_overhead(
            &config.dataset,
            &dataset,
            config.overhead_records,
            config.overhead_rate,
            cell_mode,
            work,
        )?)
    } else {
        None
    };

    Ok(BenchReport {
        config: config.clone(),
        cold_mechanism,
        ingests,
        cells,
        overhead,
    })
}

/// Reference speedup range reported at the original ten-million-record
/// scale, printed beside measured ratios for context.
pub const REFERENCE_SPEEDUP_RANGE: (f64, f64) = (30.0, 60.0);

/// Human-readable report: one table row per cell plus ingest, storage, and
/// overhead summaries.
pub fn report_table(report: &BenchReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== ingest ==");
    let _ = writeln!(
        out,
        "{:<14} {:>7} {:<8} {:>10} {:>12} {:>10} {:>9}",
        "approach", "layout", "mode", "records", "bytes", "rec/s", "cpu_s"
    );
    for ingest in &report.ingests {
        let mode = match &ingest.enrichment {
            None => "plain".to_string(),
            Some(EnrichmentMode::SparseList) => "sparse".to_string(),
            Some(EnrichmentMode::DenseBoolean { width }) => format!("dense{width}"),
        };
        let _ = writeln!(
            out,
            "{:<14} {:>7} {:<8} {:>10} {:>12} {:>10.0} {:>9.2}",
            ingest.approach.to_string(),
            ingest.layout,
            mode,
            ingest.report.records_out,
            ingest.total_segment_bytes,
            ingest.report.throughput_rps,
            ingest.report.process_cpu_seconds,
        );
    }

    let _ = writeln!(out, "\n== query cells (cold protocol: {}) ==", report.cold_mechanism);
    let _ = writeln!(
        out,
        "{:<14} {:<9} {:>7} {:>4} {:<5} {:>11} {:>11} {:>11} {:>9} {:>7} {:>7} {:>12}",
        "approach",
        "query",
        "layout",
        "par",
        "temp",
        "median_s",
        "ci_lo_s",
        "ci_hi_s",
        "speedup",
        "opened",
        "pruned",
        "rows_scanned"
    );
    for cell in &report.cells {
        let speedup = cell
            .speedup_vs_baseline
            .map_or("-".to_string(), |s| format!("{s:.1}x"));
        let _ = writeln!(
            out,
            "{:<14} {:<9} {:>7} {:>4} {:<5} {:>11.6} {:>11.6} {:>11.6} {:>9} {:>7} {:>7} {:>12}",
            cell.approach.to_string(),
            cell.query,
            cell.layout,
            cell.parallelism,
            cell.temperature.to_string(),
            cell.median_seconds,
            cell.ci_lo_seconds,
            cell.ci_hi_seconds,
            speedup,
            cell.files_opened,
            cell.files_pruned,
            cell.rows_scanned,
        );
    }
    let _ = writeln!(
        out,
        "reference speedup range at ten-million-record scale: {:.0}x-{:.0}x",
        REFERENCE_SPEEDUP_RANGE.0, REFERENCE_SPEEDUP_RANGE.1
    );

    if let Some(overhead) = &report.overhead {
        let _ = writeln!(out, "\n== ingest overhead at {:.0} rec/s ==", overhead.rate_target);
        let _ = writeln!(
            out,
            "{:<14} {:>10} {:>10} {:>10} {:>10}",
            "mode", "rec/s", "cpu_s", "match_s", "write_s"
        );
        for mode in [&overhead.baseline, &overhead.fluxsieve] {
            let _ = writeln!(
                out,
                "{:<14} {:>10.0} {:>10.2} {:>10.2} {:>10.2}",
                format!("{:?}", mode.mode),
                mode.achieved_rps,
                mode.report.process_cpu_seconds,
                mode.report.match_cpu_seconds,
                mode.report.write_cpu_seconds,
            );
        }
        let _ = writeln!(
            out,
            "throughput ratio {:.3}, cpu overhead {:+.1}%, startup compile {:.3}s",
            overhead.throughput_ratio,
            overhead.cpu_overhead_fraction * 100.0,
            overhead.startup_compile_seconds,
        );
    }
    out
}

/// Machine-readable report as pretty JSON.
pub fn report_structured(report: &BenchReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}
