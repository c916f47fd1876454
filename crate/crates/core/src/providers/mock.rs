use std::collections::HashMap;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::delay::{jitter_rng, shift, StageDelayModel};
use super::fixtures::{audio_digest, utterance_key, Fixtures};
use super::{
    word_chunks, DialogueModel, DialogueRequest, ProviderError, ProviderErrorKind, SpeechToText,
    Stage, Synthesis, TextToSpeech, TokenEvent, TokenStream, Transcription, DEFAULT_TIMEOUT_MS,
};
use crate::protocol::audio;

/// Mock voice speaking rate, in milliseconds of audio per character.
pub const DEFAULT_MS_PER_CHAR: u64 = 60;

/// Whether mock delays are only reported or also waited out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    #[default]
    Virtual,
    Real,
}

impl Pacing {
    async fn wait(self, ms: u64) {
        if self == Pacing::Real && ms > 0 {
            tokio::time::sleep(Duration::from_millis(ms)).await;
        }
    }
}

fn timed_out(stage: Stage, timeout_ms: u64) -> ProviderError {
    ProviderError::new(stage, ProviderErrorKind::Timeout(timeout_ms), timeout_ms)
}

/// Recogniser that returns scripted transcripts keyed by audio digest.
#[derive(Debug, Clone)]
pub struct MockSpeechToText {
    transcripts: HashMap<String, String>,
    pub model: StageDelayModel,
    pub timeout_ms: u64,
    pub seed: u64,
    pub pacing: Pacing,
}

impl MockSpeechToText {
    pub fn new(fixtures: &Fixtures, model: StageDelayModel) -> Self {
        MockSpeechToText {
            transcripts: fixtures.transcripts_by_digest(),
            model,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            seed: 0,
            pacing: Pacing::Virtual,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn with_pacing(mut self, pacing: Pacing) -> Self {
        self.pacing = pacing;
        self
    }
}

#[async_trait]
impl SpeechToText for MockSpeechToText {
    async fn transcribe(&self, payload: &[u8]) -> Result<Transcription, ProviderError> {
        let fail = |kind, latency| ProviderError::new(Stage::Stt, kind, latency);
        if payload.is_empty() {
            return Err(fail(ProviderErrorKind::EmptyInput, 0));
        }
        let pcm = audio::pcm_data(payload)
            .map_err(|e| fail(ProviderErrorKind::Precondition(e.to_string()), 0))?;
        if pcm.is_empty() {
            return Err(fail(ProviderErrorKind::EmptyInput, 0));
        }
        let digest = audio_digest(payload);
        let offset = self
            .model
            .jitter(&mut jitter_rng(self.seed, "stt", payload));
        let found = self.transcripts.get(&digest);
        let chars = found.map_or(0, |t| t.chars().count());
        let latency = shift(self.model.base_delay(chars), offset);
        if latency > self.timeout_ms {
            self.pacing.wait(self.timeout_ms).await;
            return Err(timed_out(Stage::Stt, self.timeout_ms));
        }
        self.pacing.wait(latency).await;
        match found {
            Some(text) => Ok(Transcription {
                text: text.clone(),
                latency_ms: latency,
            }),
            None => Err(fail(ProviderErrorKind::UnknownAudio(digest), latency)),
        }
    }
}

/// Dialogue model that streams scripted replies keyed by the latest utterance.
///
/// The prefix of the reply ending at character `n` arrives
/// `fixed_ms + round(per_char_ms * n)` after the call (plus jitter), in
/// word-aligned chunks. With a zero per-character cost the whole reply
/// arrives as one chunk after `fixed_ms`.
#[derive(Debug, Clone)]
pub struct MockDialogue {
    responses: HashMap<String, String>,
    pub model: StageDelayModel,
    pub timeout_ms: u64,
    pub seed: u64,
    pub pacing: Pacing,
    /// Strict mode fails on unscripted utterances; lenient mode echoes them.
    pub strict: bool,
}

impl MockDialogue {
    pub fn new(fixtures: &Fixtures, model: StageDelayModel) -> Self {
        MockDialogue {
            responses: fixtures.responses_by_utterance(),
            model,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            seed: 0,
            pacing: Pacing::Virtual,
            strict: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn with_pacing(mut self, pacing: Pacing) -> Self {
        self.pacing = pacing;
        self
    }

    pub fn lenient(mut self) -> Self {
        self.strict = false;
        self
    }

    /// Timed events for a reply, before pacing.
    pub fn schedule(&self, reply: &str, offset: i64) -> Vec<TokenEvent> {
        let mut events = Vec::new();
        if self.model.per_char_ms == 0.0 {
            let at_ms = shift(self.model.fixed_ms, offset);
            if !reply.is_empty() {
                events.push(TokenEvent::Chunk {
                    text: reply.to_string(),
                    at_ms,
                });
            }
            events.push(TokenEvent::End { at_ms });
            return events;
        }
        let mut chars = 0;
        let mut last = shift(self.model.fixed_ms, offset);
        for chunk in word_chunks(reply) {
            chars += chunk.chars().count();
            last = shift(self.model.base_delay(chars), offset);
            events.push(TokenEvent::Chunk {
                text: chunk.to_string(),
                at_ms: last,
            });
        }
        events.push(TokenEvent::End { at_ms: last });
        events
    }
}

#[async_trait]
impl DialogueModel for MockDialogue {
    async fn generate(&self, request: &DialogueRequest) -> Result<TokenStream, ProviderError> {
        request
            .validate()
            .map_err(|kind| ProviderError::new(Stage::Dialogue, kind, 0))?;
        let offset = self.model.jitter(&mut jitter_rng(
            self.seed,
            "dialogue",
            request.utterance.as_bytes(),
        ));
        let first_at = shift(self.model.fixed_ms, offset);
        let reply = match self.responses.get(&utterance_key(&request.utterance)) {
            Some(reply) => reply.clone(),
            None if self.strict => {
                let latency = first_at.min(self.timeout_ms);
                self.pacing.wait(latency).await;
                return Err(ProviderError::new(
                    Stage::Dialogue,
                    ProviderErrorKind::UnknownUtterance(request.utterance.clone()),
                    latency,
                ));
            }
            None => request.utterance.trim().to_string(),
        };
        let events = self.schedule(&reply, offset);
        let first = match &events[0] {
            TokenEvent::Chunk { at_ms, .. } | TokenEvent::End { at_ms } => *at_ms,
        };
        if first > self.timeout_ms {
            self.pacing.wait(self.timeout_ms).await;
            return Err(timed_out(Stage::Dialogue, self.timeout_ms));
        }
        let pacing = self.pacing;
        let start = tokio::time::Instant::now();
        let stream = stream::iter(events).then(move |event| async move {
            if pacing == Pacing::Real {
                let at = match &event {
                    TokenEvent::Chunk { at_ms, .. } | TokenEvent::End { at_ms } => *at_ms,
                };
                tokio::time::sleep_until(start + Duration::from_millis(at)).await;
            }
            Ok(event)
        });
        Ok(Box::pin(stream))
    }
}

/// Voice that renders `ms_per_char` of beep-marked silence per character.
#[derive(Debug, Clone)]
pub struct MockTextToSpeech {
    pub model: StageDelayModel,
    pub ms_per_char: u64,
    pub timeout_ms: u64,
    pub seed: u64,
    pub pacing: Pacing,
}

impl MockTextToSpeech {
    pub fn new(model: StageDelayModel) -> Self {
        MockTextToSpeech {
            model,
            ms_per_char: DEFAULT_MS_PER_CHAR,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            seed: 0,
            pacing: Pacing::Virtual,
        }
    }

    /// The zero-latency voice used for the gateway's own fallback speech.
    pub fn local() -> Self {
        Self::new(StageDelayModel::ZERO).with_timeout(u64::MAX)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn with_pacing(mut self, pacing: Pacing) -> Self {
        self.pacing = pacing;
        self
    }

    pub fn with_ms_per_char(mut self, ms_per_char: u64) -> Self {
        self.ms_per_char = ms_per_char;
        self
    }

    /// Audio for `text` with no simulated delay.
    pub fn render(&self, text: &str) -> (Vec<u8>, u64) {
        let duration = self.ms_per_char * text.chars().count() as u64;
        (audio::beep_marked_silence(duration), duration)
    }
}

#[async_trait]
impl TextToSpeech for MockTextToSpeech {
    async fn synthesize(&self, text: &str, _voice_id: &str) -> Result<Synthesis, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::new(
                Stage::Tts,
                ProviderErrorKind::EmptyInput,
                0,
            ));
        }
        let chars = text.chars().count();
        let offset = self
            .model
            .jitter(&mut jitter_rng(self.seed, "tts", text.as_bytes()));
        let latency = shift(self.model.base_delay(chars), offset);
        if latency > self.timeout_ms {
            self.pacing.wait(self.timeout_ms).await;
            return Err(timed_out(Stage::Tts, self.timeout_ms));
        }
        self.pacing.wait(latency).await;
        let (audio, duration_ms) = self.render(text);
        Ok(Synthesis {
            audio,
            duration_ms,
            latency_ms: latency,
        })
    }
}
