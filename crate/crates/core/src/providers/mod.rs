//! Pluggable speech-to-text, dialogue, and text-to-speech stages.
//!
//! Every stage reports its own latency, including on failure, so the
//! pipeline can account for a turn without reading a clock. The mock
//! implementations derive latency from a [`StageDelayModel`] and can either
//! return immediately (virtual pacing) or actually wait it out (real pacing).

mod delay;
mod fixtures;
mod mock;

#[cfg(feature = "cloud")]
pub mod cloud;

use std::fmt;
use std::pin::Pin;

use async_trait::async_trait;
use futures::Stream;
use serde::{Deserialize, Serialize};

pub use delay::{jitter_rng, shift, InvalidDelayModel, StageDelayModel};
pub use fixtures::{audio_digest, FixtureError, Fixtures, ResponseFixture, TranscriptFixture};
pub use mock::{MockDialogue, MockSpeechToText, MockTextToSpeech, Pacing, DEFAULT_MS_PER_CHAR};

/// Default per-call provider timeout.
pub const DEFAULT_TIMEOUT_MS: u64 = 15_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stt,
    Dialogue,
    Tts,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Stt => "stt",
            Stage::Dialogue => "dialogue",
            Stage::Tts => "tts",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderErrorKind {
    #[error("empty input")]
    EmptyInput,
    #[error("timed out after {0} ms")]
    Timeout(u64),
    #[error("no scripted response for `{0}`")]
    UnknownUtterance(String),
    #[error("no scripted transcript for audio {0}")]
    UnknownAudio(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("service error: {0}")]
    Service(String),
    #[error("provider not configured: {0}")]
    NotConfigured(String),
}

/// A stage failure together with the time the stage spent before failing.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{stage} failed after {latency_ms} ms: {kind}")]
pub struct ProviderError {
    pub stage: Stage,
    pub kind: ProviderErrorKind,
    pub latency_ms: u64,
}

impl ProviderError {
    pub fn new(stage: Stage, kind: ProviderErrorKind, latency_ms: u64) -> Self {
        ProviderError {
            stage,
            kind,
            latency_ms,
        }
    }

    /// Stable machine code, used in failure envelopes and API bodies.
    pub fn code(&self) -> String {
        let kind = match self.kind {
            ProviderErrorKind::EmptyInput => "empty_input",
            ProviderErrorKind::Timeout(_) => "timeout",
            ProviderErrorKind::UnknownUtterance(_) => "unknown_utterance",
            ProviderErrorKind::UnknownAudio(_) => "unknown_audio",
            ProviderErrorKind::Precondition(_) => "precondition",
            ProviderErrorKind::Service(_) => "service",
            ProviderErrorKind::NotConfigured(_) => "not_configured",
        };
        format!("{}_{kind}", self.stage)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcription {
    pub text: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synthesis {
    pub audio: Vec<u8>,
    pub duration_ms: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Child,
    Robot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub turn_id: u64,
    pub speaker: Speaker,
    pub text: String,
}

/// Everything the dialogue stage needs to produce the robot's reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueRequest {
    pub profile_id: String,
    pub history: Vec<Utterance>,
    pub utterance: String,
    pub system_prompt: String,
}

impl DialogueRequest {
    pub fn validate(&self) -> Result<(), ProviderErrorKind> {
        if self.utterance.trim().is_empty() {
            return Err(ProviderErrorKind::Precondition(
                "latest utterance is empty".into(),
            ));
        }
        if self.system_prompt.trim().is_empty() {
            return Err(ProviderErrorKind::Precondition(
                "system prompt is empty".into(),
            ));
        }
        if self.history.windows(2).any(|w| w[1].turn_id < w[0].turn_id) {
            return Err(ProviderErrorKind::Precondition(
                "history is not ordered by turn".into(),
            ));
        }
        Ok(())
    }
}

/// One event of a streamed response. `at_ms` is measured from the start of
/// the dialogue call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenEvent {
    Chunk { text: String, at_ms: u64 },
    End { at_ms: u64 },
}

/// Incremental response text. Chunks concatenate to the full response and
/// the stream closes with [`TokenEvent::End`].
pub type TokenStream = Pin<Box<dyn Stream<Item = Result<TokenEvent, ProviderError>> + Send>>;

#[async_trait]
pub trait SpeechToText: Send + Sync {
    async fn transcribe(&self, audio: &[u8]) -> Result<Transcription, ProviderError>;
}

#[async_trait]
pub trait DialogueModel: Send + Sync {
    async fn generate(&self, request: &DialogueRequest) -> Result<TokenStream, ProviderError>;
}

#[async_trait]
pub trait TextToSpeech: Send + Sync {
    async fn synthesize(&self, text: &str, voice_id: &str) -> Result<Synthesis, ProviderError>;
}

/// Split text into word-aligned chunks: each chunk is a run of whitespace
/// followed by a run of non-whitespace. Concatenating the chunks yields the
/// input exactly.
pub fn word_chunks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_word {
                out.push(&text[start..i]);
                start = i;
                in_word = false;
            }
        } else {
            in_word = true;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_reassemble_exactly() {
        let text = "Hi! I am  happy.\nWhat did you do today? ";
        let chunks = word_chunks(text);
        assert_eq!(chunks.concat(), text);
        assert_eq!(chunks[0], "Hi!");
        assert_eq!(chunks[1], " I");
        assert_eq!(chunks[3], "  happy.");
        assert!(word_chunks("").is_empty());
    }

    #[test]
    fn error_codes_are_stage_qualified() {
        let e = ProviderError::new(Stage::Tts, ProviderErrorKind::Timeout(15_000), 15_000);
        assert_eq!(e.code(), "tts_timeout");
    }
}
