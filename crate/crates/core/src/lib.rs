//! In-stream multi-pattern filtering and enrichment for log pipelines.
//!
//! Records flow from newline-delimited JSON sources through a compiled
//! matching engine into columnar segments whose enrichment columns let the
//! query plane answer recurring filter queries without rescanning raw text.
//! Engines are versioned, distributed through an object store plus a small
//! control channel, and hot-swapped into running pipelines; a query profiler
//! closes the loop by proposing new rules for recurring expensive predicates.

pub mod control;
pub mod dataset;
pub mod engine;
pub mod harness;
pub mod model;
pub mod pipeline;
pub mod query;
pub mod rules;
pub mod segment;
pub mod stats;

pub use engine::{compute_delta, deserialize_engine, serialize_engine, CompiledEngine, RuleSetDelta};
pub use model::{EnrichedRecord, EnrichmentMode, LogRecord, Query, QueryMode, QueryPredicate};
pub use rules::{FilterRule, RuleKind, RuleSet, VersionTag};
