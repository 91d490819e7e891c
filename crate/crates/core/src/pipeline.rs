//! Ingestion pipeline: decodes newline-delimited JSON records, optionally
//! matches them against the active engine, and writes columnar segments.
//!
//! Decoding runs on its own thread feeding a bounded queue; matching and
//! segment writing share the consumer thread. The engine lives behind a
//! swappable handle, so the control plane can replace it mid-stream: every
//! record is enriched by exactly one engine, and the version sequence across
//! the output is non-decreasing because swaps only take effect between
//! records.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::SyncSender;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::engine::CompiledEngine;
use crate::model::{EnrichedRecord, EnrichmentMode, LogRecord, RecordError};
use crate::rules::{RuleSet, VersionTag};
use crate::segment::{write_segment, SegmentError, SEGMENT_EXTENSION};

/// Shared, swappable reference to the compiled engine. Readers take a cheap
/// snapshot per record; `swap` installs a replacement atomically.
#[derive(Clone)]
pub struct EngineHandle {
    slot: Arc<RwLock<Arc<CompiledEngine>>>,
}

impl EngineHandle {
    pub fn new(engine: Arc<CompiledEngine>) -> Self {
        EngineHandle {
            slot: Arc::new(RwLock::new(engine)),
        }
    }

    /// Handle holding an engine with no rules, version `run-bootstrap-000000`.
    pub fn empty() -> Self {
        let engine = CompiledEngine::compile(&RuleSet::empty(), VersionTag::new("bootstrap", 0))
            .expect("empty rule set compiles");
        EngineHandle::new(Arc::new(engine))
    }

    pub fn load(&self) -> Arc<CompiledEngine> {
        self.slot.read().unwrap().clone()
    }

    /// Replaces the engine, returning the previous one.
    pub fn swap(&self, engine: Arc<CompiledEngine>) -> Arc<CompiledEngine> {
        std::mem::replace(&mut *self.slot.write().unwrap(), engine)
    }

    pub fn version(&self) -> VersionTag {
        self.slot.read().unwrap().version().clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Decode and store only; no matching, no enrichment columns.
    Baseline,
    /// Match each record against the active engine and store match columns.
    #[serde(rename = "fluxsieve")]
    FluxSieve,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("cannot read source {path}: {source}")]
    Source {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: bad record: {source}")]
    Decode {
        path: PathBuf,
        line: u64,
        source: RecordError,
    },
    #[error("segment write failed: {0}")]
    Segment(#[from] SegmentError),
    #[error("pipeline thread panicked")]
    WorkerPanic,
}

/// Everything one pipeline run needs. `progress` (records completed) is
/// updated continuously so callers can coordinate with a running pipeline.
pub struct PipelineConfig {
    pub sources: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub mode: PipelineMode,
    pub enrichment: EnrichmentMode,
    pub handle: EngineHandle,
    /// Records per segment file.
    pub segment_records: usize,
    /// Bounded queue between the decode and match stages.
    pub queue_capacity: usize,
    /// Arrival rate cap in records per second; None runs at full speed.
    pub rate_limit: Option<f64>,
    pub progress: Option<Arc<AtomicU64>>,
}

impl PipelineConfig {
    pub fn new(sources: Vec<PathBuf>, out_dir: &Path, mode: PipelineMode, handle: EngineHandle) -> Self {
        PipelineConfig {
            sources,
            out_dir: out_dir.to_path_buf(),
            mode,
            enrichment: EnrichmentMode::SparseList,
            handle,
            segment_records: 10_000,
            queue_capacity: 4096,
            rate_limit: None,
            progress: None,
        }
    }
}

/// Outcome of one pipeline run, including per-phase CPU time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub mode: PipelineMode,
    pub records_in: u64,
    pub records_out: u64,
    pub segments_written: u32,
    /// Records with at least one rule match.
    pub matched_records: u64,
    /// Total (record, rule) match pairs.
    pub match_entries: u64,
    pub wall_seconds: f64,
    pub throughput_rps: f64,
    /// Records completed per elapsed second, index 0 = first second.
    pub per_second: Vec<u64>,
    pub decode_cpu_seconds: f64,
    pub match_cpu_seconds: f64,
    pub write_cpu_seconds: f64,
    /// Whole-process CPU time consumed during the run.
    pub process_cpu_seconds: f64,
    pub queue_high_water: usize,
    /// Records enriched per engine version, in version order.
    pub engine_versions: BTreeMap<String, u64>,
}

/// CPU time of the calling thread.
pub fn thread_cpu() -> Duration {
    clock(libc::CLOCK_THREAD_CPUTIME_ID)
}

/// CPU time of the whole process.
pub fn process_cpu() -> Duration {
    clock(libc::CLOCK_PROCESS_CPUTIME_ID)
}

fn clock(id: libc::clockid_t) -> Duration {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // Safety: ts outlives the call and both clock ids are always valid.
    let rc = unsafe { libc::clock_gettime(id, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime failed");
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

/// All `*.ndjson` files directly under `dir`, lexicographically ordered.
pub fn ndjson_sources(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = std::fs::read_dir(dir).map_err(|source| PipelineError::Source {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| PipelineError::Source {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "ndjson") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn segment_file_name(index: u32) -> String {
    format!("seg-{index:06}.{SEGMENT_EXTENSION}")
}

/// Spreads sends so the long-run rate matches `rate` records per second.
struct Pacer {
    start: Instant,
    rate: f64,
    sent: u64,
}

impl Pacer {
    const CHECK_EVERY: u64 = 32;

    fn new(rate: f64) -> Self {
        Pacer {
            start: Instant::now(),
            rate,
            sent: 0,
        }
    }

    fn pace(&mut self) {
        self.sent += 1;
        if self.sent % Self::CHECK_EVERY != 0 {
            return;
        }
        // Absolute deadline, so sleep overshoot never accumulates.
        let due = self.start + Duration::from_secs_f64(self.sent as f64 / self.rate);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}

fn decode_sources(
    sources: &[PathBuf],
    tx: SyncSender<LogRecord>,
    rate_limit: Option<f64>,
    depth: &AtomicUsize,
    high_water: &AtomicUsize,
) -> Result<(u64, Duration), PipelineError> {
    let cpu_start = thread_cpu();
    let mut pacer = rate_limit.map(Pacer::new);
    let mut decoded = 0u64;
    for path in sources {
        let file = File::open(path).map_err(|source| PipelineError::Source {
            path: path.clone(),
            source,
        })?;
        let mut reader = BufReader::with_capacity(1 << 20, file);
        let mut line = String::new();
        let mut line_no = 0u64;
        loop {
            line.clear();
            let n = reader
                .read_line(&mut line)
                .map_err(|source| PipelineError::Source {
                    path: path.clone(),
                    source,
                })?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if trimmed.is_empty() {
                continue;
            }
            let record =
                crate::model::parse_wire_line(trimmed).map_err(|source| PipelineError::Decode {
                    path: path.clone(),
                    line: line_no,
                    source,
                })?;
            let d = depth.fetch_add(1, Ordering::Relaxed) + 1;
            high_water.fetch_max(d, Ordering::Relaxed);
            if tx.send(record).is_err() {
                // Consumer bailed; its error is the one worth reporting.
                return Ok((decoded, thread_cpu() - cpu_start));
            }
            decoded += 1;
            if let Some(p) = pacer.as_mut() {
                p.pace();
            }
        }
    }
    Ok((decoded, thread_cpu() - cpu_start))
}

/// Runs the pipeline to completion over `config.sources`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    std::fs::create_dir_all(&config.out_dir).map_err(|source| PipelineError::Source {
        path: config.out_dir.clone(),
        source,
    })?;

    let depth = AtomicUsize::new(0);
    let high_water = AtomicUsize::new(0);
    let (tx, rx) = std::sync::mpsc::sync_channel::<LogRecord>(config.queue_capacity.max(1));

    let wall_start = Instant::now();
    let process_cpu_start = process_cpu();

    let enrichment = match config.mode {
        PipelineMode::Baseline => None,
        PipelineMode::FluxSieve => Some(config.enrichment.clone()),
    };

    std::thread::scope(|scope| {
        let decode_task = scope.spawn(|| {
            decode_sources(&config.sources, tx, config.rate_limit, &depth, &high_water)
        });

        let mut report = PipelineReport {
            mode: config.mode,
            records_in: 0,
            records_out: 0,
            segments_written: 0,
            matched_records: 0,
            match_entries: 0,
            wall_seconds: 0.0,
            throughput_rps: 0.0,
            per_second: Vec::new(),
            decode_cpu_seconds: 0.0,
            match_cpu_seconds: 0.0,
            write_cpu_seconds: 0.0,
            process_cpu_seconds: 0.0,
            queue_high_water: 0,
            engine_versions: BTreeMap::new(),
        };
        let mut batch: Vec<EnrichedRecord> = Vec::with_capacity(config.segment_records);
        let mut match_cpu = Duration::ZERO;
        let mut write_cpu = Duration::ZERO;
        let mut baseline_version = match config.mode {
            PipelineMode::Baseline => Some(config.handle.version()),
            PipelineMode::FluxSieve => None,
        };
        let mut consume_error: Option<PipelineError> = None;

        while let Ok(record) = rx.recv() {
            depth.fetch_sub(1, Ordering::Relaxed);
            report.records_in += 1;

            let enriched = match config.mode {
                PipelineMode::Baseline => EnrichedRecord::new(
                    record,
                    Vec::new(),
                    baseline_version.as_ref().expect("set above").clone(),
                ),
                PipelineMode::FluxSieve => {
                    let t0 = thread_cpu();
                    // One engine snapshot per record: a concurrent swap
                    // affects this record entirely or not at all.
                    let engine = config.handle.load();
                    let matched = engine.match_all(&record);
                    let enriched = EnrichedRecord::new(record, matched, engine.version().clone());
                    match_cpu += thread_cpu() - t0;
                    enriched
                }
            };
            if config.mode == PipelineMode::FluxSieve {
                let ids = enriched.matched_rule_ids();
                if !ids.is_empty() {
                    report.matched_records += 1;
                    report.match_entries += ids.len() as u64;
                }
                *report
                    .engine_versions
                    .entry(enriched.engine_version.to_string())
                    .or_insert(0) += 1;
            }
            batch.push(enriched);

            if batch.len() >= config.segment_records {
                let t0 = thread_cpu();
                let path = config.out_dir.join(segment_file_name(report.segments_written));
                if let Err(e) = write_segment(&path, &batch, enrichment.clone()) {
                    consume_error = Some(e.into());
                    break;
                }
                write_cpu += thread_cpu() - t0;
                report.segments_written += 1;
                report.records_out += batch.len() as u64;
                batch.clear();
            }

            let sec = wall_start.elapsed().as_secs() as usize;
            if report.per_second.len() <= sec {
                report.per_second.resize(sec + 1, 0);
            }
            report.per_second[sec] += 1;
            if let Some(progress) = &config.progress {
                progress.store(report.records_in, Ordering::Release);
            }
        }
        // Drop the receiver so a still-running decoder unblocks and exits.
        drop(rx);
        baseline_version.take();

        let decode_result = decode_task.join().map_err(|_| PipelineError::WorkerPanic)?;
        if let Some(e) = consume_error {
            return Err(e);
        }
        let (decoded, decode_cpu) = decode_result?;

        if !batch.is_empty() {
            let t0 = thread_cpu();
            let path = config.out_dir.join(segment_file_name(report.segments_written));
            write_segment(&path, &batch, enrichment.clone())?;
            write_cpu += thread_cpu() - t0;
            report.segments_written += 1;
            report.records_out += batch.len() as u64;
        }

        debug_assert_eq!(decoded, report.records_in);
        report.wall_seconds = wall_start.elapsed().as_secs_f64();
        report.throughput_rps = if report.wall_seconds > 0.0 {
            report.records_in as f64 / report.wall_seconds
        } else {
            0.0
        };
        report.decode_cpu_seconds = decode_cpu.as_secs_f64();
        report.match_cpu_seconds = match_cpu.as_secs_f64();
        report.write_cpu_seconds = write_cpu.as_secs_f64();
        report.process_cpu_seconds = (process_cpu() - process_cpu_start).as_secs_f64();
        report.queue_high_water = high_water.load(Ordering::Relaxed);
        Ok(report)
    })
}
