//! HTTP adapters for hosted services. None of these are exercised by the
//! offline test suite; they exist so a deployment can swap the mocks out
//! without touching the pipeline.
//!
//! Latency is measured with a monotonic clock from the start of each call,
//! and every request is bounded by the adapter's timeout.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde_json::{json, Value};

use super::{
    DialogueModel, DialogueRequest, ProviderError, ProviderErrorKind, Speaker, SpeechToText, Stage,
    Synthesis, TextToSpeech, TokenEvent, TokenStream, Transcription, DEFAULT_TIMEOUT_MS,
};
use crate::protocol::audio;

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn service(stage: Stage, start: Instant, message: impl std::fmt::Display) -> ProviderError {
    ProviderError::new(
        stage,
        ProviderErrorKind::Service(message.to_string()),
        elapsed_ms(start),
    )
}

fn not_configured(stage: Stage, what: &str) -> ProviderError {
    ProviderError::new(stage, ProviderErrorKind::NotConfigured(what.into()), 0)
}

/// Send `request`, mapping transport errors, timeouts and non-2xx statuses.
async fn send(
    stage: Stage,
    start: Instant,
    timeout_ms: u64,
    request: reqwest::RequestBuilder,
) -> Result<reqwest::Response, ProviderError> {
    let response =
        match tokio::time::timeout(Duration::from_millis(timeout_ms), request.send()).await {
            Err(_) => {
                return Err(ProviderError::new(
                    stage,
                    ProviderErrorKind::Timeout(timeout_ms),
                    timeout_ms,
                ))
            }
            Ok(Err(e)) => return Err(service(stage, start, e)),
            Ok(Ok(r)) => r,
        };
    let status = response.status();
    if !status.is_success() {
        let body = response.text().await.unwrap_or_default();
        return Err(service(
            stage,
            start,
            format_args!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            ),
        ));
    }
    Ok(response)
}

/// Chat-completions dialogue with server-sent-event streaming.
#[derive(Debug, Clone)]
pub struct OpenAiDialogue {
    client: reqwest::Client,
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout_ms: u64,
}

impl OpenAiDialogue {
    pub fn new(api_key: impl Into<String>, model: impl Into<String>) -> Self {
        OpenAiDialogue {
            client: reqwest::Client::new(),
            base_url: "https://api.openai.com/v1".into(),
            api_key: api_key.into(),
            model: model.into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_base_url(mut self, base_url: impl Into<String>) -> Self {
        self.base_url = base_url.into();
        self
    }

    fn body(&self, request: &DialogueRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
        messages.extend(request.history.iter().map(|u| {
            let role = match u.speaker {
                Speaker::Child => "user",
                Speaker::Robot => "assistant",
            };
            json!({"role": role, "content": u.text})
        }));
        messages.push(json!({"role": "user", "content": request.utterance}));
        json!({"model": self.model, "messages": messages, "stream": true})
    }
}

/// Content deltas from one buffered block of server-sent events. Returns
/// the deltas and whether the `[DONE]` marker was seen.
fn parse_sse(buffer: &mut String) -> Result<(Vec<String>, bool), String> {
    let mut deltas = Vec::new();
    let mut done = false;
    while let Some(end) = buffer.find('\n') {
        let line: String = buffer.drain(..=end).collect();
        let Some(data) = line.trim_end().strip_prefix("data:") else {
            continue;
        };
        let data = data.trim();
        if data == "[DONE]" {
            done = true;
            continue;
        }
        let value: Value = serde_json::from_str(data).map_err(|e| format!("bad event: {e}"))?;
        if let Some(text) = value
            .pointer("/choices/0/delta/content")
            .and_then(Value::as_str)
        {
            if !text.is_empty() {
                deltas.push(text.to_string());
            }
        }
    }
    Ok((deltas, done))
}

#[async_trait]
impl DialogueModel for OpenAiDialogue {
    async fn generate(&self, request: &DialogueRequest) -> Result<TokenStream, ProviderError> {
        request
            .validate()
            .map_err(|kind| ProviderError::new(Stage::Dialogue, kind, 0))?;
        if self.api_key.is_empty() {
            return Err(not_configured(Stage::Dialogue, "dialogue api key"));
        }
        let start = Instant::now();
        let http = self
            .client
            .post(format!(
                "{}/chat/completions",
                self.base_url.trim_end_matches('/')
            ))
            .bearer_auth(&self.api_key)
            .json(&self.body(request));
        let response = send(Stage::Dialogue, start, self.timeout_ms, http).await?;
        let deadline = start + Duration::from_millis(self.timeout_ms);
        let timeout_ms = self.timeout_ms;

        struct State {
            bytes: futures::stream::BoxStream<'static, reqwest::Result<Vec<u8>>>,
            buffer: String,
            queued: std::collections::VecDeque<Result<TokenEvent, ProviderError>>,
            finished: bool,
        }
        let state = State {
            bytes: response
                .bytes_stream()
                .map(|r| r.map(|b| b.to_vec()))
                .boxed(),
            buffer: String::new(),
            queued: Default::default(),
            finished: false,
        };
        let events = stream::unfold(state, move |mut st| async move {
            loop {
                if let Some(event) = st.queued.pop_front() {
                    return Some((event, st));
                }
                if st.finished {
                    return None;
                }
                let remaining = deadline.saturating_duration_since(Instant::now());
                let next = match tokio::time::timeout(remaining, st.bytes.next()).await {
                    Err(_) => {
                        st.finished = true;
                        let e = ProviderError::new(
                            Stage::Dialogue,
                            ProviderErrorKind::Timeout(timeout_ms),
                            timeout_ms,
                        );
                        return Some((Err(e), st));
                    }
                    Ok(next) => next,
                };
                match next {
                    Some(Ok(chunk)) => {
                        st.buffer.push_str(&String::from_utf8_lossy(&chunk));
                        match parse_sse(&mut st.buffer) {
                            Ok((deltas, done)) => {
                                let at_ms = elapsed_ms(start);
                                st.queued.extend(
                                    deltas
                                        .into_iter()
                                        .map(|text| Ok(TokenEvent::Chunk { text, at_ms })),
                                );
                                if done {
                                    st.queued.push_back(Ok(TokenEvent::End { at_ms }));
                                    st.finished = true;
                                }
                            }
                            Err(e) => {
                                st.queued.push_back(Err(service(Stage::Dialogue, start, e)));
                                st.finished = true;
                            }
                        }
                    }
                    Some(Err(e)) => {
                        st.queued.push_back(Err(service(Stage::Dialogue, start, e)));
                        st.finished = true;
                    }
                    None => {
                        st.queued.push_back(Ok(TokenEvent::End {
                            at_ms: elapsed_ms(start),
                        }));
                        st.finished = true;
                    }
                }
            }
        });
        Ok(Box::pin(events))
    }
}

/// Naver Clova premium voice, used for Korean-speaking children.
#[derive(Debug, Clone)]
pub struct ClovaVoice {
    client: reqwest::Client,
    pub endpoint: String,
    pub client_id: String,
    pub client_secret: String,
    pub timeout_ms: u64,
}

impl ClovaVoice {
    pub fn new(client_id: impl Into<String>, client_secret: impl Into<String>) -> Self {
        ClovaVoice {
            client: reqwest::Client::new(),
            endpoint: "https://naveropenapi.apigw.ntruss.com/tts-premium/v1/tts".into(),
            client_id: client_id.into(),
            client_secret: client_secret.into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }
}

#[async_trait]
impl TextToSpeech for ClovaVoice {
    async fn synthesize(&self, text: &str, voice_id: &str) -> Result<Synthesis, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::new(
                Stage::Tts,
                ProviderErrorKind::EmptyInput,
                0,
            ));
        }
        if self.client_id.is_empty() || self.client_secret.is_empty() {
            return Err(not_configured(Stage::Tts, "voice credentials"));
        }
        let speaker = if voice_id == "default" {
            "nara"
        } else {
            voice_id
        };
        let start = Instant::now();
        let form = [
            ("speaker", speaker),
            ("text", text),
            ("format", "wav"),
            ("sampling-rate", "16000"),
        ];
        let http = self
            .client
            .post(&self.endpoint)
            .header("X-NCP-APIGW-API-KEY-ID", &self.client_id)
            .header("X-NCP-APIGW-API-KEY", &self.client_secret)
            .form(&form);
        let response = send(Stage::Tts, start, self.timeout_ms, http).await?;
        let audio = response
            .bytes()
            .await
            .map_err(|e| service(Stage::Tts, start, e))?
            .to_vec();
        let duration_ms =
            audio::payload_duration_ms(&audio).map_err(|e| service(Stage::Tts, start, e))?;
        Ok(Synthesis {
            audio,
            duration_ms,
            latency_ms: elapsed_ms(start),
        })
    }
}

/// Amazon Polly voice. Request signing is not implemented, so this adapter
/// always reports itself unconfigured.
#[derive(Debug, Clone, Default)]
pub struct PollyVoice;

#[async_trait]
impl TextToSpeech for PollyVoice {
    async fn synthesize(&self, text: &str, _voice_id: &str) -> Result<Synthesis, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::new(
                Stage::Tts,
                ProviderErrorKind::EmptyInput,
                0,
            ));
        }
        Err(not_configured(Stage::Tts, "polly request signing"))
    }
}

/// Amazon Transcribe recogniser. Like [`PollyVoice`], unsigned and inert.
#[derive(Debug, Clone, Default)]
pub struct TranscribeRecognizer;

#[async_trait]
impl SpeechToText for TranscribeRecognizer {
    async fn transcribe(&self, audio: &[u8]) -> Result<Transcription, ProviderError> {
        if audio.is_empty() {
            return Err(ProviderError::new(
                Stage::Stt,
                ProviderErrorKind::EmptyInput,
                0,
            ));
        }
        Err(not_configured(Stage::Stt, "transcribe request signing"))
    }
}
