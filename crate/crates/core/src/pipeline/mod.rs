//! One conversational turn, from child input to timed robot envelopes.

mod compare;
mod engine;
mod segment;
mod sweep;
mod turn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::emotion_gesture::AffectTag;
use crate::guardrails::GuardrailAudit;
use crate::protocol::ActionCommand;

pub use compare::{
    compare_strategies, run_exchange, DelayConfig, ScriptedExchange, StrategyLatency,
    StrategyReport,
};
pub use engine::{Clock, Engine, EngineError, ManualClock, SystemClock, TurnPermit};
pub use segment::{
    segment_text, InvalidSegmentParams, SegmentBuilder, SegmentParams, SentenceStream,
    DEFAULT_MAX_SEGMENT_CHARS, DEFAULT_MIN_SEGMENT_CHARS,
};
pub use sweep::{nearest_rank, sweep, sweep_sequential, LatencySummary, SweepReport};
pub use turn::{execute_turn, Providers, TurnInput, TurnRequest, APOLOGY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Voice,
    AacText,
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Generate, guard and synthesize the whole reply, then send it.
    Monolithic,
    /// Guard and synthesize each sentence group as soon as it completes.
    #[default]
    Segmented,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 2] = [StrategyKind::Monolithic, StrategyKind::Segmented];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Monolithic => "monolithic",
            StrategyKind::Segmented => "segmented",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected monolithic or segmented)"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub params: SegmentParams,
}

impl Strategy {
    pub fn monolithic() -> Self {
        Strategy {
            kind: StrategyKind::Monolithic,
            params: SegmentParams::default(),
        }
    }

    pub fn segmented(params: SegmentParams) -> Self {
        Strategy {
            kind: StrategyKind::Segmented,
            params,
        }
    }
}

/// Per-stage timings of a turn, in milliseconds from the end of input
/// capture unless noted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLatencies {
    pub stt_ms: u64,
    /// Dialogue start to first streamed chunk.
    pub llm_first_chunk_ms: u64,
    /// Dialogue start to the moment the first segment's text was usable.
    pub llm_first_segment_ms: u64,
    /// Dialogue start to end of stream (or to early stop).
    pub llm_total_ms: u64,
    pub tts_first_segment_ms: u64,
    /// Sum of synthesis latencies over all segments.
    pub tts_total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub segment_id: u64,
    pub text: String,
    pub affect: AffectTag,
    pub audio_duration_ms: u64,
    pub emitted_at_ms: u64,
    pub actions: Vec<ActionCommand>,
}

/// Everything known about one exchange, persisted once per turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub session_id: String,
    pub turn_id: u64,
    pub profile_id: String,
    pub started_at_ms: u64,
    pub input_kind: InputKind,
    pub transcript: String,
    pub raw_response: String,
    pub guarded_response: String,
    pub segments: Vec<SegmentRecord>,
    pub latencies: StageLatencies,
    pub first_audio_latency_ms: u64,
    pub total_ms: u64,
    pub strategy: StrategyKind,
    pub audit: GuardrailAudit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_behavior: Option<String>,
    /// Machine code of the failure that produced the apology, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl TurnRecord {
    /// Texts spoken to the child, joined the way the guard saw them.
    pub fn spoken_text(&self) -> String {
        self.segments
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn is_failure(&self) -> bool {
        self.failure.is_some()
    }
}
