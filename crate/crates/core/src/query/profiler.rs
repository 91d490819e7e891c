//! Query profiling: a ledger of recurring query shapes and their cumulative
//! cost, feeding rule proposals back to the control plane.
//!
//! Entries key on the query fingerprint, which ignores the time range, so a
//! dashboard refreshing the same filter over a sliding window accumulates
//! into one entry. Proposals are deterministic: same ledger, same registry,
//! same candidates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{is_content_field, query_fingerprint, Query};
use crate::query::RuleRegistry;
use crate::rules::FilterRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    /// First query observed with this fingerprint; later ones differ at
    /// most in their time range.
    pub exemplar: Query,
    pub count: u64,
    /// Summed execution wall time, seconds.
    pub total_cost: f64,
    pub last_seen: i64,
}

/// Accumulated query observations, keyed by fingerprint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfilerLedger {
    entries: BTreeMap<String, ProfileEntry>,
}

impl ProfilerLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, query: &Query, cost_seconds: f64, at: i64) {
        let fingerprint = query_fingerprint(query);
        let entry = self
            .entries
            .entry(fingerprint)
            .or_insert_with(|| ProfileEntry {
                exemplar: query.clone(),
                count: 0,
                total_cost: 0.0,
                last_seen: at,
            });
        entry.count += 1;
        entry.total_cost += cost_seconds;
        entry.last_seen = entry.last_seen.max(at);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ProfileEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get(&self, fingerprint: &str) -> Option<&ProfileEntry> {
        self.entries.get(fingerprint)
    }

    /// Proposes literal rules for predicates of recurring expensive queries
    /// that no deployed rule covers yet.
    ///
    /// Entries qualify at `count >= min_count` and `total_cost >=
    /// min_total_cost`, are visited most expensive first (fingerprint
    /// breaking ties), and each uncovered content-field predicate yields one
    /// rule with ids continuing past the registry's highest.
    pub fn candidate_rules(
        &self,
        min_count: u64,
        min_total_cost: f64,
        registry: &RuleRegistry,
    ) -> Vec<FilterRule> {
        let mut qualifying: Vec<(&str, &ProfileEntry)> = self
            .entries
            .iter()
            .filter(|(_, e)| e.count >= min_count && e.total_cost >= min_total_cost)
            .map(|(k, v)| (k.as_str(), v))
            .collect();
        qualifying.sort_by(|a, b| {
            b.1.total_cost
                .total_cmp(&a.1.total_cost)
                .then_with(|| a.0.cmp(b.0))
        });

        let mut next_id = registry.max_rule_id() + 1;
        let mut proposed: Vec<FilterRule> = Vec::new();
        for (_, entry) in qualifying {
            for predicate in &entry.exemplar.predicates {
                if !is_content_field(&predicate.field) {
                    // Only content fields pass through the matching engine.
                    continue;
                }
                if registry.covers(predicate) {
                    continue;
                }
                let duplicate = proposed.iter().any(|r| {
                    r.target_field == predicate.field && r.expression == predicate.term
                });
                if duplicate {
                    continue;
                }
                proposed.push(FilterRule::literal(next_id, &predicate.field, &predicate.term));
                next_id += 1;
            }
        }
        proposed
    }
}
