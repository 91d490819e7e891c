//! Query plane: maps contains-term queries onto enrichment columns where a
//! deployed rule covers the predicate, falls back to raw column scans where
//! none does, and mixes the two when only part of a query is covered.
//!
//! Results are independent of the access path and of worker count: every
//! path answers from the same stored records, segment results merge in file
//! order, and a segment whose enrichment was produced by a different engine
//! version than the planner's registry is answered by raw scan, never by
//! stale match columns.

mod parser;
mod profiler;

pub use parser::{parse_query, ParseError};
pub use profiler::{ProfileEntry, ProfilerLedger};

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::CompiledEngine;
use crate::model::{LogRecord, Query, QueryMode, QueryPredicate};
use crate::rules::{RuleKind, RuleSet, VersionTag};
use crate::segment::{list_segments, SegmentError, SegmentReader};

/// Lookup from contains-term predicates to the deployed rules that answer
/// them, pinned to one engine version.
pub struct RuleRegistry {
    version: VersionTag,
    by_predicate: HashMap<(String, String), u32>,
    max_rule_id: u32,
}

impl RuleRegistry {
    pub fn new(rules: &RuleSet, version: VersionTag) -> Self {
        let mut by_predicate = HashMap::new();
        for rule in rules.rules() {
            // Queries are case-sensitive substring tests, so only rules
            // with identical semantics may stand in for a predicate.
            if rule.kind == RuleKind::Literal && rule.case_sensitive {
                by_predicate.insert(
                    (rule.target_field.clone(), rule.expression.clone()),
                    rule.rule_id,
                );
            }
        }
        RuleRegistry {
            version,
            by_predicate,
            max_rule_id: rules.max_rule_id(),
        }
    }

    pub fn from_engine(engine: &CompiledEngine) -> Self {
        RuleRegistry::new(engine.ruleset(), engine.version().clone())
    }

    pub fn version(&self) -> &VersionTag {
        &self.version
    }

    pub fn max_rule_id(&self) -> u32 {
        self.max_rule_id
    }

    pub fn lookup(&self, predicate: &QueryPredicate) -> Option<u32> {
        self.by_predicate
            .get(&(predicate.field.clone(), predicate.term.clone()))
            .copied()
    }

    pub fn covers(&self, predicate: &QueryPredicate) -> bool {
        self.lookup(predicate).is_some()
    }
}

/// How a plan reaches the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AccessPath {
    /// Every predicate is answered from match columns.
    Enriched,
    /// Every predicate is answered by raw column scan.
    FallbackScan,
    /// Covered predicates use match columns; the rest verify by reading
    /// only the surviving rows.
    Mixed,
}

impl fmt::Display for AccessPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessPath::Enriched => "ENRICHED",
            AccessPath::FallbackScan => "FALLBACK_SCAN",
            AccessPath::Mixed => "MIXED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateBinding {
    pub predicate: QueryPredicate,
    /// The deployed rule standing in for this predicate, if any.
    pub rule_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub query: Query,
    pub path: AccessPath,
    pub bindings: Vec<PredicateBinding>,
    /// Engine version whose enrichment the plan trusts.
    pub registry_version: VersionTag,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid query: {0}")]
    Invalid(#[from] crate::model::QueryValidationError),
    #[error("predicate `{0} CONTAINS {1:?}` has no deployed rule")]
    UnboundPredicate(String, String),
    #[error("a mixed plan needs both a covered and an uncovered predicate")]
    MixedNotApplicable,
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
}

/// Plans `query` against the registry, choosing the best natural path.
pub fn map_query(
    query: &Query,
    registry: &RuleRegistry,
    parallelism: usize,
) -> Result<QueryPlan, PlanError> {
    plan_with_path(query, registry, parallelism, None)
}

/// Plans with a forced access path, for comparing paths on equal terms.
/// Forcing ENRICHED fails if any predicate lacks a rule; forcing MIXED
/// fails unless the plan can carry at least one covered and one uncovered
/// predicate (a fully covered two-predicate query demotes its second
/// predicate to scan).
pub fn plan_with_path(
    query: &Query,
    registry: &RuleRegistry,
    parallelism: usize,
    force: Option<AccessPath>,
) -> Result<QueryPlan, PlanError> {
    query.validate()?;
    if parallelism == 0 {
        return Err(PlanError::ZeroParallelism);
    }
    let mut bindings: Vec<PredicateBinding> = query
        .predicates
        .iter()
        .map(|p| PredicateBinding {
            predicate: p.clone(),
            rule_id: registry.lookup(p),
        })
        .collect();

    let bound = bindings.iter().filter(|b| b.rule_id.is_some()).count();
    let path = match force {
        None => {
            if bound == bindings.len() {
                AccessPath::Enriched
            } else if bound == 0 {
                AccessPath::FallbackScan
            } else {
                AccessPath::Mixed
            }
        }
        Some(AccessPath::Enriched) => {
            if let Some(b) = bindings.iter().find(|b| b.rule_id.is_none()) {
                return Err(PlanError::UnboundPredicate(
                    b.predicate.field.clone(),
                    b.predicate.term.clone(),
                ));
            }
            AccessPath::Enriched
        }
        Some(AccessPath::FallbackScan) => {
            for b in &mut bindings {
                b.rule_id = None;
            }
            AccessPath::FallbackScan
        }
        Some(AccessPath::Mixed) => {
            if bindings.len() < 2 || bound == 0 {
                return Err(PlanError::MixedNotApplicable);
            }
            if bound == bindings.len() {
                // Fully covered: keep the first predicate on the match
                // columns and verify the rest by scan.
                for b in &mut bindings[1..] {
                    b.rule_id = None;
                }
            }
            AccessPath::Mixed
        }
    };
    Ok(QueryPlan {
        query: query.clone(),
        path,
        bindings,
        registry_version: registry.version().clone(),
        parallelism,
    })
}

/// Where each segment's answer came from and what it cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    /// Segments whose data blocks were read.
    pub files_opened: u64,
    /// Segments dismissed from directory metadata alone.
    pub files_pruned: u64,
    pub pruned_paths: Vec<PathBuf>,
    /// Segments answered by raw scan although the plan wanted enrichment,
    /// because their enrichment came from a different engine version.
    pub files_fallback: u64,
    /// Rows of stored text examined by scanners, summed over scan passes.
    pub rows_scanned: u64,
    pub rows_matched: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryOutput {
    Rows(Vec<LogRecord>),
    Count(u64),
}

impl QueryOutput {
    pub fn count(&self) -> u64 {
        match self {
            QueryOutput::Rows(rows) => rows.len() as u64,
            QueryOutput::Count(n) => *n,
        }
    }
}

#[derive(Debug)]
pub struct QueryResult {
    pub output: QueryOutput,
    pub metrics: QueryMetrics,
}

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

enum FileAnswer {
    Pruned(PathBuf),
    Rows {
        rows: Vec<LogRecord>,
        rows_scanned: u64,
        fell_back: bool,
    },
    Count {
        count: u64,
        rows_scanned: u64,
        fell_back: bool,
    },
}

/// True when this segment's match columns may answer for `version`: all its
/// rows were enriched by exactly that engine version.
fn enrichment_valid(reader: &SegmentReader, version: &VersionTag) -> bool {
    let meta = reader.meta();
    meta.enrichment.is_some()
        && meta.engine_versions.len() == 1
        && meta.engine_versions[0] == *version
}

fn intersect_sorted(a: Vec<u32>, b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let mut j = 0usize;
    for v in a {
        while j < b.len() && b[j] < v {
            j += 1;
        }
        if j < b.len() && b[j] == v {
            out.push(v);
        }
    }
    out
}

fn filter_by_time(
    reader: &SegmentReader,
    ordinals: Vec<u32>,
    range: Option<(i64, i64)>,
) -> Result<Vec<u32>, SegmentError> {
    let Some((lo, hi)) = range else {
        return Ok(ordinals);
    };
    if ordinals.is_empty() {
        return Ok(ordinals);
    }
    let timestamps = reader.read_timestamps_at(&ordinals)?;
    Ok(ordinals
        .into_iter()
        .zip(timestamps)
        .filter(|(_, ts)| (lo..=hi).contains(ts))
        .map(|(o, _)| o)
        .collect())
}

fn answer_file(plan: &QueryPlan, path: &Path) -> Result<FileAnswer, SegmentError> {
    answer_file_inner(plan, path, true)
}

fn answer_file_inner(
    plan: &QueryPlan,
    path: &Path,
    prune: bool,
) -> Result<FileAnswer, SegmentError> {
    let reader = SegmentReader::open(path)?;
    let meta = reader.meta();
    let valid = enrichment_valid(&reader, &plan.registry_version);
    let wants_enrichment = plan.bindings.iter().any(|b| b.rule_id.is_some());

    // Directory-level pruning first: the time range, then the match bitmap.
    // Both prove the segment holds no qualifying row without reading data.
    if prune {
        if let (Some((lo, hi)), Some((min, max))) = (plan.query.time_range, meta.time_range()) {
            if max < lo || min > hi {
                return Ok(FileAnswer::Pruned(path.to_path_buf()));
            }
        }
        if valid && wants_enrichment {
            if let Some(bitmap) = &meta.match_bitmap {
                let absent = plan
                    .bindings
                    .iter()
                    .filter_map(|b| b.rule_id)
                    .any(|id| !bitmap.contains(id));
                if absent {
                    // Conjunctive query: one provably unmatched rule
                    // empties the whole segment.
                    return Ok(FileAnswer::Pruned(path.to_path_buf()));
                }
            }
        }
    }

    let fell_back = wants_enrichment && !valid;
    let mut rows_scanned = 0u64;

    // Count straight off the match columns when nothing else constrains
    // the rows.
    if valid
        && !fell_back
        && plan.query.mode == QueryMode::Count
        && plan.query.time_range.is_none()
        && plan.bindings.len() == 1
        && plan.bindings[0].rule_id.is_some()
    {
        let count = reader.rule_match_count(plan.bindings[0].rule_id.unwrap())?;
        return Ok(FileAnswer::Count {
            count,
            rows_scanned: 0,
            fell_back: false,
        });
    }

    // Candidate ordinals, starting from the cheapest predicate source.
    let mut candidates: Option<Vec<u32>> = None;
    let mut residual: Vec<&QueryPredicate> = Vec::new();
    for binding in &plan.bindings {
        match binding.rule_id {
            Some(rule_id) if valid => {
                let rows = reader.rule_rows(rule_id)?;
                candidates = Some(match candidates {
                    None => rows,
                    Some(have) => intersect_sorted(have, &rows),
                });
            }
            _ => residual.push(&binding.predicate),
        }
    }

    for predicate in residual {
        match candidates {
            None => {
                // Whole-column scan; every stored row's text is examined.
                rows_scanned += meta.record_count as u64;
                let rows = reader.rows_with_term(&predicate.field, &predicate.term)?;
                candidates = Some(rows);
            }
            Some(have) => {
                // Verify only the rows that survive so far.
                rows_scanned += have.len() as u64;
                let values = reader.read_str_rows(&predicate.field, &have)?;
                let finder = memchr::memmem::Finder::new(predicate.term.as_bytes());
                candidates = Some(
                    have.into_iter()
                        .zip(values)
                        .filter(|(_, v)| finder.find(v.as_bytes()).is_some())
                        .map(|(o, _)| o)
                        .collect(),
                );
            }
        }
    }

    let ordinals = filter_by_time(
        &reader,
        candidates.expect("plans carry at least one predicate"),
        plan.query.time_range,
    )?;

    match plan.query.mode {
        QueryMode::Count => Ok(FileAnswer::Count {
            count: ordinals.len() as u64,
            rows_scanned,
            fell_back,
        }),
        QueryMode::ReturnRows => {
            let rows = if ordinals.is_empty() {
                Vec::new()
            } else {
                reader.read_records(Some(&ordinals))?
            };
            Ok(FileAnswer::Rows {
                rows,
                rows_scanned,
                fell_back,
            })
        }
    }
}

/// Executes a plan over every segment under `segments_dir`. Results merge
/// in segment file order, so worker count never changes the answer.
pub fn execute_plan(plan: &QueryPlan, segments_dir: &Path) -> Result<QueryResult, QueryError> {
    let start = Instant::now();
    let files = list_segments(segments_dir)?;
    let workers = plan.parallelism.max(1).min(files.len().max(1));

    let answers: Vec<(usize, Result<FileAnswer, SegmentError>)> = if workers <= 1 {
        files
            .iter()
            .enumerate()
            .map(|(i, path)| (i, answer_file(plan, path)))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(workers);
            for w in 0..workers {
                let files = &files;
                handles.push(scope.spawn(move || {
                    files
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(workers)
                        .map(|(i, path)| (i, answer_file(plan, path)))
                        .collect::<Vec<_>>()
                }));
            }
            let mut all = Vec::with_capacity(files.len());
            for handle in handles {
                all.extend(handle.join().expect("query worker panicked"));
            }
            all
        })
    };

    let mut metrics = QueryMetrics::default();
    let mut rows: Vec<LogRecord> = Vec::new();
    let mut count = 0u64;
    let mut ordered: Vec<(usize, FileAnswer)> = Vec::with_capacity(answers.len());
    for (i, answer) in answers {
        ordered.push((i, answer?));
    }
    ordered.sort_by_key(|(i, _)| *i);
    for (_, answer) in ordered {
        match answer {
            FileAnswer::Pruned(path) => {
                metrics.files_pruned += 1;
                metrics.pruned_paths.push(path);
            }
            FileAnswer::Rows {
                rows: mut r,
                rows_scanned,
                fell_back,
            } => {
                metrics.files_opened += 1;
                metrics.rows_scanned += rows_scanned;
                metrics.files_fallback += u64::from(fell_back);
                count += r.len() as u64;
                rows.append(&mut r);
            }
            FileAnswer::Count {
                count: c,
                rows_scanned,
                fell_back,
            } => {
                metrics.files_opened += 1;
                metrics.rows_scanned += rows_scanned;
                metrics.files_fallback += u64::from(fell_back);
                count += c;
            }
        }
    }
    metrics.rows_matched = count;
    metrics.wall_seconds = start.elapsed().as_secs_f64();

    let output = match plan.query.mode {
        QueryMode::ReturnRows => QueryOutput::Rows(rows),
        QueryMode::Count => QueryOutput::Count(count),
    };
    Ok(QueryResult { output, metrics })
}

/// Answers one segment with directory-level pruning disabled, returning how
/// many rows qualify. Row-level filters still apply, so running this over a
/// pruned file checks that pruning hid nothing.
pub fn audit_segment(plan: &QueryPlan, path: &Path) -> Result<u64, QueryError> {
    match answer_file_inner(plan, path, false)? {
        FileAnswer::Pruned(_) => unreachable!("pruning disabled"),
        FileAnswer::Rows { rows, .. } => Ok(rows.len() as u64),
        FileAnswer::Count { count, .. } => Ok(count),
    }
}

/// Plans and executes in one step with the natural access path.
pub fn run_query(
    query: &Query,
    registry: &RuleRegistry,
    segments_dir: &Path,
    parallelism: usize,
) -> Result<QueryResult, QueryError> {
    let plan = map_query(query, registry, parallelism)?;
    execute_plan(&plan, segments_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EnrichedRecord, EnrichmentMode};
    use crate::rules::FilterRule;
    use crate::segment::write_segment;
    use std::collections::BTreeMap;

    fn record(ts: i64, c1: &str, c2: &str) -> LogRecord {
        let mut contents = BTreeMap::new();
        contents.insert("content1".to_string(), c1.to_string());
        contents.insert("content2".to_string(), c2.to_string());
        LogRecord {
            timestamp: ts,
            status: "ok".into(),
            event_type: "app".into(),
            contents,
        }
    }

    fn rules() -> RuleSet {
        RuleSet::new(vec![
            FilterRule::literal(1, "content1", "needle"),
            FilterRule::literal(2, "content2", "beacon"),
        ])
        .unwrap()
    }

    /// Two segments enriched by v1: rows with "needle", rows with "beacon",
    /// one row with both, plus noise rows.
    fn fixture(dir: &Path, version: &VersionTag) {
        let rs = rules();
        let engine = CompiledEngine::compile(&rs, version.clone()).unwrap();
        let write = |name: &str, records: Vec<LogRecord>| {
            let enriched: Vec<EnrichedRecord> = records
                .into_iter()
                .map(|r| {
                    let matched = engine.match_all(&r);
                    EnrichedRecord::new(r, matched, version.clone())
                })
                .collect();
            write_segment(&dir.join(name), &enriched, Some(EnrichmentMode::SparseList)).unwrap();
        };
        write(
            "seg-000000.fseg",
            vec![
                record(10, "a needle here", "quiet"),
                record(11, "nothing", "quiet"),
                record(12, "needle again", "with beacon too"),
                record(13, "noise", "noise"),
            ],
        );
        write(
            "seg-000001.fseg",
            vec![
                record(20, "clean", "beacon lit"),
                record(21, "clean", "dark"),
            ],
        );
    }

    fn query1(term: &str, mode: QueryMode) -> Query {
        Query {
            predicates: vec![QueryPredicate {
                field: "content1".into(),
                term: term.into(),
            }],
            mode,
            time_range: None,
        }
    }

    #[test]
    fn natural_path_follows_registry_coverage() {
        let registry = RuleRegistry::new(&rules(), VersionTag::new("q", 1));
        let q = query1("needle", QueryMode::ReturnRows);
        assert_eq!(map_query(&q, &registry, 1).unwrap().path, AccessPath::Enriched);

        let q = query1("uncovered", QueryMode::ReturnRows);
        assert_eq!(
            map_query(&q, &registry, 1).unwrap().path,
            AccessPath::FallbackScan
        );

        let q = Query {
            predicates: vec![
                QueryPredicate {
                    field: "content1".into(),
                    term: "needle".into(),
                },
                QueryPredicate {
                    field: "content2".into(),
                    term: "uncovered".into(),
                },
            ],
            mode: QueryMode::ReturnRows,
            time_range: None,
        };
        let plan = map_query(&q, &registry, 1).unwrap();
        assert_eq!(plan.path, AccessPath::Mixed);
        assert_eq!(plan.bindings[0].rule_id, Some(1));
        assert_eq!(plan.bindings[1].rule_id, None);
    }

    #[test]
    fn forcing_paths_obeys_coverage() {
        let registry = RuleRegistry::new(&rules(), VersionTag::new("q", 1));
        let q = query1("uncovered", QueryMode::Count);
        assert!(matches!(
            plan_with_path(&q, &registry, 1, Some(AccessPath::Enriched)),
            Err(PlanError::UnboundPredicate(..))
        ));
        assert!(matches!(
            plan_with_path(&q, &registry, 1, Some(AccessPath::Mixed)),
            Err(PlanError::MixedNotApplicable)
        ));

        let q2 = Query {
            predicates: vec![
                QueryPredicate {
                    field: "content1".into(),
                    term: "needle".into(),
                },
                QueryPredicate {
                    field: "content2".into(),
                    term: "beacon".into(),
                },
            ],
            mode: QueryMode::Count,
            time_range: None,
        };
        let plan = plan_with_path(&q2, &registry, 1, Some(AccessPath::Mixed)).unwrap();
        assert_eq!(plan.bindings[0].rule_id, Some(1));
        assert_eq!(plan.bindings[1].rule_id, None);
        let forced_scan = plan_with_path(&q2, &registry, 1, Some(AccessPath::FallbackScan)).unwrap();
        assert!(forced_scan.bindings.iter().all(|b| b.rule_id.is_none()));
    }

    #[test]
    fn all_paths_agree_on_results() {
        let dir = tempfile::tempdir().unwrap();
        let version = VersionTag::new("q", 1);
        fixture(dir.path(), &version);
        let registry = RuleRegistry::new(&rules(), version);

        let q = Query {
            predicates: vec![
                QueryPredicate {
                    field: "content1".into(),
                    term: "needle".into(),
                },
                QueryPredicate {
                    field: "content2".into(),
                    term: "beacon".into(),
                },
            ],
            mode: QueryMode::ReturnRows,
            time_range: None,
        };
        let mut outputs = Vec::new();
        for path in [AccessPath::Enriched, AccessPath::FallbackScan, AccessPath::Mixed] {
            let plan = plan_with_path(&q, &registry, 1, Some(path)).unwrap();
            let result = execute_plan(&plan, dir.path()).unwrap();
            outputs.push(result.output);
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[1], outputs[2]);
        match &outputs[0] {
            QueryOutput::Rows(rows) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].timestamp, 12);
            }
            other => panic!("expected rows, got {other:?}"),
        }
    }

    #[test]
    fn enriched_count_reads_no_text_and_prunes_by_bitmap() {
        let dir = tempfile::tempdir().unwrap();
        let version = VersionTag::new("q", 1);
        fixture(dir.path(), &version);
        let registry = RuleRegistry::new(&rules(), version);

        let plan = map_query(&query1("needle", QueryMode::Count), &registry, 1).unwrap();
        assert_eq!(plan.path, AccessPath::Enriched);
        let result = execute_plan(&plan, dir.path()).unwrap();
        assert_eq!(result.output, QueryOutput::Count(2));
        assert_eq!(result.metrics.rows_scanned, 0);
        // Second segment has no rule-1 matches: bitmap prunes it unopened.
        assert_eq!(result.metrics.files_pruned, 1);
        assert_eq!(result.metrics.files_opened, 1);
    }

    #[test]
    fn time_range_prunes_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        let version = VersionTag::new("q", 1);
        fixture(dir.path(), &version);
        let registry = RuleRegistry::new(&rules(), version);

        // Range covers only the second segment; predicate covers rule 2.
        let q = Query {
            predicates: vec![QueryPredicate {
                field: "content2".into(),
                term: "beacon".into(),
            }],
            mode: QueryMode::ReturnRows,
            time_range: Some((20, 25)),
        };
        let plan = map_query(&q, &registry, 1).unwrap();
        let result = execute_plan(&plan, dir.path()).unwrap();
        match result.output {
            QueryOutput::Rows(rows) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].timestamp, 20);
            }
            other => panic!("expected rows, got {other:?}"),
        }
        assert_eq!(result.metrics.files_pruned, 1, "first segment out of range");
    }

    #[test]
    fn stale_enrichment_falls_back_to_scan() {
        let dir = tempfile::tempdir().unwrap();
        let old_version = VersionTag::new("q", 1);
        fixture(dir.path(), &old_version);
        // Registry speaks for a newer version than any segment carries.
        let registry = RuleRegistry::new(&rules(), VersionTag::new("q", 2));

        let plan = map_query(&query1("needle", QueryMode::Count), &registry, 1).unwrap();
        assert_eq!(plan.path, AccessPath::Enriched);
        let result = execute_plan(&plan, dir.path()).unwrap();
        assert_eq!(result.output, QueryOutput::Count(2));
        assert_eq!(result.metrics.files_fallback, 2);
        assert!(result.metrics.rows_scanned > 0);
    }

    #[test]
    fn worker_count_never_changes_the_answer() {
        let dir = tempfile::tempdir().unwrap();
        let version = VersionTag::new("q", 1);
        fixture(dir.path(), &version);
        let registry = RuleRegistry::new(&rules(), version);
        let q = query1("needle", QueryMode::ReturnRows);

        let one = execute_plan(&map_query(&q, &registry, 1).unwrap(), dir.path()).unwrap();
        let four = execute_plan(&map_query(&q, &registry, 4).unwrap(), dir.path()).unwrap();
        assert_eq!(one.output, four.output);
        assert_eq!(one.metrics.rows_matched, four.metrics.rows_matched);
    }
}
