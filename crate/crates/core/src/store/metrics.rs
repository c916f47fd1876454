use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::guardrails::RuleId;
use crate::pipeline::{nearest_rank, StrategyKind, TurnRecord};

/// Half-open range `[from_ms, to_ms)` over turn start times; open ends
/// are unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsWindow {
    pub from_ms: Option<u64>,
    pub to_ms: Option<u64>,
}

impl MetricsWindow {
    pub const ALL: MetricsWindow = MetricsWindow {
        from_ms: None,
        to_ms: None,
    };

    pub fn between(from_ms: u64, to_ms: u64) -> Self {
        MetricsWindow {
            from_ms: Some(from_ms),
            to_ms: Some(to_ms),
        }
    }

    /// The `span_ms` leading up to `now_ms`.
    pub fn trailing(span_ms: u64, now_ms: u64) -> Self {
        MetricsWindow {
            from_ms: Some(now_ms.saturating_sub(span_ms)),
            to_ms: None,
        }
    }

    pub fn contains(&self, t: u64) -> bool {
        self.from_ms.is_none_or(|f| t >= f) && self.to_ms.is_none_or(|e| t < e)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub turn_count: u64,
    pub first_audio_p50_ms: u64,
    pub first_audio_p95_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub window: MetricsWindow,
    pub turn_count: u64,
    pub failed_turn_count: u64,
    /// Keyed by strategy; both strategies are always present.
    pub strategies: BTreeMap<StrategyKind, StrategyMetrics>,
    pub rule_counts: BTreeMap<RuleId, u64>,
}

/// Summary of `records`, which the caller has already limited to `window`.
pub fn compute_metrics(window: MetricsWindow, records: &[TurnRecord]) -> MetricsSummary {
    let mut strategies = BTreeMap::new();
    for kind in StrategyKind::ALL {
        let mut values: Vec<u64> = records
            .iter()
            .filter(|r| r.strategy == kind)
            .map(|r| r.first_audio_latency_ms)
            .collect();
        values.sort_unstable();
        strategies.insert(
            kind,
            StrategyMetrics {
                turn_count: values.len() as u64,
                first_audio_p50_ms: nearest_rank(&values, 50),
                first_audio_p95_ms: nearest_rank(&values, 95),
            },
        );
    }
    let mut rule_counts = BTreeMap::new();
    for entry in records.iter().flat_map(|r| r.audit.entries()) {
        *rule_counts.entry(entry.rule).or_insert(0) += 1;
    }
    MetricsSummary {
        window,
        turn_count: records.len() as u64,
        failed_turn_count: records.iter().filter(|r| r.is_failure()).count() as u64,
        strategies,
        rule_counts,
    }
}
