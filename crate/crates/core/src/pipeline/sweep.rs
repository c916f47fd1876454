use serde::{Deserialize, Serialize};

use super::compare::{compare_seeded, DelayConfig, ScriptedExchange, StrategyReport};
use super::StrategyKind;
use crate::guardrails::Guardrails;

/// Nearest-rank percentile of an ascending slice; 0 for an empty one.
pub fn nearest_rank(sorted: &[u64], percentile: u32) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let n = sorted.len();
    let rank = (percentile as usize * n).div_ceil(100).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub p50_ms: u64,
    pub p95_ms: u64,
}

impl LatencySummary {
    pub fn from_values(mut values: Vec<u64>) -> Self {
        values.sort_unstable();
        LatencySummary {
            count: values.len(),
            p50_ms: nearest_rank(&values, 50),
            p95_ms: nearest_rank(&values, 95),
        }
    }
}

/// First-audio latency over many seeded turns of one exchange.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub turns: usize,
    pub monolithic: LatencySummary,
    pub segmented: LatencySummary,
    /// One row per turn, in seed order.
    pub rows: Vec<StrategyReport>,
}

impl SweepReport {
    fn from_rows(rows: Vec<StrategyReport>) -> Self {
        let pick = |k: StrategyKind| rows.iter().map(|r| r.get(k).first_audio_ms).collect();
        SweepReport {
            turns: rows.len(),
            monolithic: LatencySummary::from_values(pick(StrategyKind::Monolithic)),
            segmented: LatencySummary::from_values(pick(StrategyKind::Segmented)),
            rows,
        }
    }

    pub fn summary(&self, kind: StrategyKind) -> LatencySummary {
        match kind {
            StrategyKind::Monolithic => self.monolithic,
            StrategyKind::Segmented => self.segmented,
        }
    }
}

/// Compare both strategies on `turns` turns seeded `base_seed..`, one
/// thread per core when the `parallel` feature is on.
pub fn sweep(
    config: &DelayConfig,
    exchange: &ScriptedExchange,
    turns: usize,
    base_seed: u64,
) -> SweepReport {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let guard = Guardrails::default();
        let fixtures = exchange.fixtures();
        let rows = (0..turns as u64)
            .into_par_iter()
            .map(|i| compare_seeded(config, exchange, &fixtures, base_seed + i, &guard))
            .collect();
        SweepReport::from_rows(rows)
    }
    #[cfg(not(feature = "parallel"))]
    sweep_sequential(config, exchange, turns, base_seed)
}

/// Same as [`sweep`] on the calling thread only.
pub fn sweep_sequential(
    config: &DelayConfig,
    exchange: &ScriptedExchange,
    turns: usize,
    base_seed: u64,
) -> SweepReport {
    let guard = Guardrails::default();
    let fixtures = exchange.fixtures();
    let rows = (0..turns as u64)
        .map(|i| compare_seeded(config, exchange, &fixtures, base_seed + i, &guard))
        .collect();
    SweepReport::from_rows(rows)
}
