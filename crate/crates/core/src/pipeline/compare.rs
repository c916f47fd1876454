use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::turn::{execute_turn, Providers, TurnInput, TurnRequest};
use super::{Strategy, StrategyKind, TurnRecord};
use crate::guardrails::{Guardrails, Profile, TurnContext};
use crate::protocol::audio;
use crate::providers::{
    Fixtures, InvalidDelayModel, MockDialogue, MockSpeechToText, MockTextToSpeech, ResponseFixture,
    StageDelayModel, TranscriptFixture, DEFAULT_MS_PER_CHAR,
};

/// Delay models for the three mock stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub stt: StageDelayModel,
    pub dialogue: StageDelayModel,
    pub tts: StageDelayModel,
    #[serde(default = "default_ms_per_char")]
    pub tts_ms_per_char: u64,
}

fn default_ms_per_char() -> u64 {
    DEFAULT_MS_PER_CHAR
}

impl Default for DelayConfig {
    /// STT 1200 ms; dialogue 800 ms to first chunk plus 30 ms per character;
    /// TTS 500 ms plus 20 ms per character; no jitter.
    fn default() -> Self {
        DelayConfig {
            stt: StageDelayModel {
                fixed_ms: 1200,
                per_char_ms: 0.0,
                jitter_ms: 0,
            },
            dialogue: StageDelayModel {
                fixed_ms: 800,
                per_char_ms: 30.0,
                jitter_ms: 0,
            },
            tts: StageDelayModel {
                fixed_ms: 500,
                per_char_ms: 20.0,
                jitter_ms: 0,
            },
            tts_ms_per_char: DEFAULT_MS_PER_CHAR,
        }
    }
}

impl DelayConfig {
    pub const ZERO: DelayConfig = DelayConfig {
        stt: StageDelayModel::ZERO,
        dialogue: StageDelayModel::ZERO,
        tts: StageDelayModel::ZERO,
        tts_ms_per_char: DEFAULT_MS_PER_CHAR,
    };

    pub fn validate(&self) -> Result<(), InvalidDelayModel> {
        self.stt.validate()?;
        self.dialogue.validate()?;
        self.tts.validate()
    }

    pub fn with_jitter(mut self, jitter_ms: u64) -> Self {
        self.stt.jitter_ms = jitter_ms;
        self.dialogue.jitter_ms = jitter_ms;
        self.tts.jitter_ms = jitter_ms;
        self
    }

    /// Mock providers for `fixtures` under this config, jitter seeded by `seed`.
    pub fn providers(&self, fixtures: &Fixtures, seed: u64, lenient: bool) -> Providers {
        let dialogue = MockDialogue::new(fixtures, self.dialogue).with_seed(seed);
        let dialogue = if lenient {
            dialogue.lenient()
        } else {
            dialogue
        };
        Providers::new(
            Arc::new(MockSpeechToText::new(fixtures, self.stt).with_seed(seed)),
            Arc::new(dialogue),
            Arc::new(
                MockTextToSpeech::new(self.tts)
                    .with_seed(seed)
                    .with_ms_per_char(self.tts_ms_per_char),
            ),
        )
    }
}

/// One scripted child utterance and the reply the mock model gives it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedExchange {
    pub audio: Vec<u8>,
    pub transcript: String,
    pub response: String,
    pub profile: Profile,
}

impl ScriptedExchange {
    pub fn new(audio: Vec<u8>, transcript: &str, response: &str) -> Self {
        ScriptedExchange {
            audio,
            transcript: transcript.into(),
            response: response.into(),
            profile: Profile::default_profile(),
        }
    }

    /// The reference exchange: a 120-character, three-sentence reply whose
    /// first sentence is 40 characters long.
    pub fn reference() -> Self {
        Self::new(
            audio::beep_marked_silence(1500),
            "look at my tower",
            "Wow, you made a really tall block tower! I like the red blocks right at the top. \
             Can you count how many blocks you used?",
        )
    }

    pub fn fixtures(&self) -> Fixtures {
        Fixtures::from_parts(
            "",
            vec![TranscriptFixture {
                audio: None,
                sha256: Some(crate::providers::audio_digest(&self.audio)),
                transcript: self.transcript.clone(),
            }],
            vec![ResponseFixture {
                utterance: self.transcript.clone(),
                response: self.response.clone(),
            }],
        )
        .expect("digest-keyed fixtures need no files")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyLatency {
    pub first_audio_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub monolithic: StrategyLatency,
    pub segmented: StrategyLatency,
}

impl StrategyReport {
    pub fn get(&self, kind: StrategyKind) -> StrategyLatency {
        match kind {
            StrategyKind::Monolithic => self.monolithic,
            StrategyKind::Segmented => self.segmented,
        }
    }
}

/// Run one voice turn of `exchange` under `strategy` on the virtual clock.
pub fn run_exchange(
    config: &DelayConfig,
    exchange: &ScriptedExchange,
    strategy: Strategy,
    seed: u64,
    guard: &Guardrails,
) -> TurnRecord {
    run_with_fixtures(
        config,
        exchange,
        &exchange.fixtures(),
        strategy,
        seed,
        guard,
    )
}

fn run_with_fixtures(
    config: &DelayConfig,
    exchange: &ScriptedExchange,
    fixtures: &Fixtures,
    strategy: Strategy,
    seed: u64,
    guard: &Guardrails,
) -> TurnRecord {
    let providers = config.providers(fixtures, seed, false);
    let req = TurnRequest {
        session_id: "bench".into(),
        turn_id: seed,
        started_at_ms: 0,
        profile: exchange.profile.clone(),
        history: Vec::new(),
        input: TurnInput::Voice(exchange.audio.clone()),
        context: TurnContext::default(),
        strategy,
    };
    futures::executor::block_on(execute_turn(&providers, guard, &req, &mut |_| {}))
}

/// Both strategies on identical inputs.
pub fn compare_strategies(config: &DelayConfig, exchange: &ScriptedExchange) -> StrategyReport {
    compare_seeded(
        config,
        exchange,
        &exchange.fixtures(),
        0,
        &Guardrails::default(),
    )
}

pub(crate) fn compare_seeded(
    config: &DelayConfig,
    exchange: &ScriptedExchange,
    fixtures: &Fixtures,
    seed: u64,
    guard: &Guardrails,
) -> StrategyReport {
    let latency = |strategy| {
        let r = run_with_fixtures(config, exchange, fixtures, strategy, seed, guard);
        StrategyLatency {
            first_audio_ms: r.first_audio_latency_ms,
            total_ms: r.total_ms,
        }
    };
    StrategyReport {
        monolithic: latency(Strategy::monolithic()),
        segmented: latency(Strategy::segmented(Default::default())),
    }
}
