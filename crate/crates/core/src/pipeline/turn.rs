use std::sync::Arc;

use futures::future::BoxFuture;
use futures::stream::{FuturesOrdered, StreamExt};

use super::segment::{SegmentBuilder, SentenceStream};
use super::{InputKind, SegmentRecord, StageLatencies, Strategy, StrategyKind, TurnRecord};
use crate::emotion_gesture::{classify_affect, plan_segment, AffectTag};
use crate::guardrails::{GuardrailAudit, Guardrails, Profile, TurnContext};
use crate::protocol::{ActionCommand, SegmentEnvelope, TurnEnvelope};
use crate::providers::{
    DialogueModel, DialogueRequest, MockTextToSpeech, ProviderError, SpeechToText, Synthesis,
    TextToSpeech, TokenEvent, Utterance,
};
use crate::text::normalize_whitespace;

/// Spoken when a turn cannot be completed, so the robot never goes silent.
pub const APOLOGY: &str = "Let me think about that again!";

/// The three stages plus the local voice used for apologies.
#[derive(Clone)]
pub struct Providers {
    pub stt: Arc<dyn SpeechToText>,
    pub dialogue: Arc<dyn DialogueModel>,
    pub tts: Arc<dyn TextToSpeech>,
    pub fallback_voice: MockTextToSpeech,
}

impl Providers {
    pub fn new(
        stt: Arc<dyn SpeechToText>,
        dialogue: Arc<dyn DialogueModel>,
        tts: Arc<dyn TextToSpeech>,
    ) -> Self {
        Providers {
            stt,
            dialogue,
            tts,
            fallback_voice: MockTextToSpeech::local(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnInput {
    Voice(Vec<u8>),
    AacText(String),
}

impl TurnInput {
    pub fn kind(&self) -> InputKind {
        match self {
            TurnInput::Voice(_) => InputKind::Voice,
            TurnInput::AacText(_) => InputKind::AacText,
        }
    }
}

/// Everything a single turn needs, resolved by the caller.
#[derive(Debug, Clone)]
pub struct TurnRequest {
    pub session_id: String,
    pub turn_id: u64,
    pub started_at_ms: u64,
    pub profile: Profile,
    pub history: Vec<Utterance>,
    pub input: TurnInput,
    pub context: TurnContext,
    pub strategy: Strategy,
}

type Pending = BoxFuture<'static, (String, u64, Result<Synthesis, ProviderError>)>;

/// Turn state shared by both strategies. All times are milliseconds from
/// the end of input capture on the analytic timeline built from the
/// latencies the providers report.
struct Turn<'a> {
    req: &'a TurnRequest,
    emit: &'a mut (dyn FnMut(TurnEnvelope) + Send),
    segments: Vec<SegmentRecord>,
    last_emit_ms: u64,
    lat: StageLatencies,
    audit: GuardrailAudit,
    transcript: String,
    raw: String,
    failure: Option<String>,
}

impl Turn<'_> {
    fn plan(&self, segment_id: u64, duration_ms: u64, tag: AffectTag) -> Vec<ActionCommand> {
        let r = self.req;
        plan_segment(
            &r.session_id,
            r.turn_id,
            segment_id,
            duration_ms,
            tag,
            &r.profile,
        )
        .unwrap_or_else(|e| {
            tracing::warn!(error = %e, "profile gesture preference rejected; using defaults");
            let bare = Profile {
                target_behaviors: Vec::new(),
                ..r.profile.clone()
            };
            plan_segment(
                &r.session_id,
                r.turn_id,
                segment_id,
                duration_ms,
                tag,
                &bare,
            )
            .unwrap_or_default()
        })
    }

    /// Send one synthesized segment that became ready at `done_ms`.
    fn send_segment(
        &mut self,
        text: String,
        synth: Synthesis,
        done_ms: u64,
        final_: bool,
        failure: Option<String>,
    ) {
        let segment_id = self.segments.len() as u64;
        let tag = classify_affect(&text);
        let actions = self.plan(segment_id, synth.duration_ms, tag);
        let emitted_at_ms = done_ms.max(self.last_emit_ms);
        self.last_emit_ms = emitted_at_ms;
        let segment =
            match SegmentEnvelope::new(segment_id, text.clone(), synth.audio, actions.clone()) {
                Ok(s) => s,
                Err(e) => {
                    // A voice that returns malformed audio is a provider fault.
                    tracing::error!(error = %e, "synthesized audio rejected");
                    self.failure.get_or_insert_with(|| "tts_bad_audio".into());
                    return;
                }
            };
        self.segments.push(SegmentRecord {
            segment_id,
            text,
            affect: tag,
            audio_duration_ms: segment.audio_duration_ms,
            emitted_at_ms,
            actions,
        });
        let envelope = self.envelope(vec![segment], final_, failure);
        (self.emit)(envelope);
    }

    fn envelope(
        &self,
        segments: Vec<SegmentEnvelope>,
        final_: bool,
        failure: Option<String>,
    ) -> TurnEnvelope {
        TurnEnvelope {
            session_id: self.req.session_id.clone(),
            turn_id: self.req.turn_id,
            segments,
            final_,
            emitted_at_ms: self.last_emit_ms,
            failure,
        }
    }

    /// Close a failed turn with the apology, spoken by the local voice.
    async fn apologise(&mut self, code: String, at_ms: u64, fallback: &MockTextToSpeech) {
        tracing::info!(code = %code, at_ms, "turn failed; sending apology");
        let synth = match fallback
            .synthesize(APOLOGY, &self.req.profile.voice_id)
            .await
        {
            Ok(s) => s,
            Err(_) => {
                let (audio, duration_ms) = fallback.render(APOLOGY);
                Synthesis {
                    audio,
                    duration_ms,
                    latency_ms: 0,
                }
            }
        };
        let done = at_ms + synth.latency_ms;
        if self.segments.is_empty() {
            self.lat.llm_first_segment_ms = at_ms.saturating_sub(self.lat.stt_ms);
            self.lat.tts_first_segment_ms = synth.latency_ms;
        }
        self.failure = Some(code.clone());
        self.send_segment(APOLOGY.to_string(), synth, done, true, Some(code));
    }

    fn record_synthesis(&mut self, ready_ms: u64, synth: &Synthesis) {
        if self.segments.is_empty() {
            self.lat.llm_first_segment_ms = ready_ms - self.lat.stt_ms;
            self.lat.tts_first_segment_ms = synth.latency_ms;
        }
        self.lat.tts_total_ms += synth.latency_ms;
    }
}

fn failure_code(e: &ProviderError) -> String {
    e.code()
}

/// Run one turn, handing each envelope to `emit` as soon as it is ready,
/// and return the finished record. Provider failures end the turn with an
/// apology envelope rather than an error.
pub async fn execute_turn(
    providers: &Providers,
    guard: &Guardrails,
    req: &TurnRequest,
    emit: &mut (dyn FnMut(TurnEnvelope) + Send),
) -> TurnRecord {
    let mut turn = Turn {
        req,
        emit,
        segments: Vec::new(),
        last_emit_ms: 0,
        lat: StageLatencies::default(),
        audit: GuardrailAudit::new(),
        transcript: String::new(),
        raw: String::new(),
        failure: None,
    };
    run(providers, guard, &mut turn).await;
    let first_audio_latency_ms = turn.segments.first().map_or(0, |s| s.emitted_at_ms);
    let guarded_response = if turn.failure.is_some() {
        turn.segments
            .iter()
            .filter(|s| s.text != APOLOGY)
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        turn.segments
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    TurnRecord {
        session_id: req.session_id.clone(),
        turn_id: req.turn_id,
        profile_id: req.profile.profile_id.clone(),
        started_at_ms: req.started_at_ms,
        input_kind: req.input.kind(),
        transcript: turn.transcript,
        raw_response: turn.raw,
        guarded_response,
        segments: turn.segments,
        latencies: turn.lat,
        first_audio_latency_ms,
        total_ms: turn.last_emit_ms,
        strategy: req.strategy.kind,
        audit: turn.audit,
        completed_behavior: req.context.completed_behavior.clone(),
        failure: turn.failure,
    }
}

async fn run(providers: &Providers, guard: &Guardrails, turn: &mut Turn<'_>) {
    let req = turn.req;
    let fallback = &providers.fallback_voice;
    match &req.input {
        TurnInput::AacText(text) => turn.transcript = text.clone(),
        TurnInput::Voice(audio) => match providers.stt.transcribe(audio).await {
            Ok(t) => {
                turn.lat.stt_ms = t.latency_ms;
                turn.transcript = t.text;
            }
            Err(e) => {
                turn.lat.stt_ms = e.latency_ms;
                return turn
                    .apologise(failure_code(&e), e.latency_ms, fallback)
                    .await;
            }
        },
    }
    let stt = turn.lat.stt_ms;
    let request = DialogueRequest {
        profile_id: req.profile.profile_id.clone(),
        history: req.history.clone(),
        utterance: turn.transcript.clone(),
        system_prompt: guard.system_prompt(&req.profile),
    };
    let mut stream = match providers.dialogue.generate(&request).await {
        Ok(s) => s,
        Err(e) => {
            turn.lat.llm_total_ms = e.latency_ms;
            return turn
                .apologise(failure_code(&e), stt + e.latency_ms, fallback)
                .await;
        }
    };

    match req.strategy.kind {
        StrategyKind::Monolithic => {
            let mut end_at = 0;
            while let Some(event) = stream.next().await {
                match event {
                    Ok(TokenEvent::Chunk { text, at_ms }) => {
                        if turn.raw.is_empty() {
                            turn.lat.llm_first_chunk_ms = at_ms;
                        }
                        turn.raw.push_str(&text);
                        end_at = at_ms;
                    }
                    Ok(TokenEvent::End { at_ms }) => {
                        end_at = at_ms;
                        break;
                    }
                    Err(e) => {
                        turn.lat.llm_total_ms = e.latency_ms;
                        return turn
                            .apologise(failure_code(&e), stt + e.latency_ms, fallback)
                            .await;
                    }
                }
            }
            turn.lat.llm_total_ms = end_at;
            let guarded = guard.apply(&normalize_whitespace(&turn.raw), &req.profile, &req.context);
            turn.audit.extend(guarded.audit.entries().iter().cloned());
            let ready = stt + end_at;
            if guarded.text.is_empty() {
                return turn
                    .apologise("dialogue_empty_response".into(), ready, fallback)
                    .await;
            }
            match providers
                .tts
                .synthesize(&guarded.text, &req.profile.voice_id)
                .await
            {
                Ok(synth) => {
                    turn.record_synthesis(ready, &synth);
                    let done = ready + synth.latency_ms;
                    turn.send_segment(guarded.text, synth, done, true, None);
                    if let Some(code) = turn.failure.take() {
                        turn.apologise(code, done, fallback).await;
                    }
                }
                Err(e) => {
                    turn.lat.tts_total_ms += e.latency_ms;
                    turn.apologise(failure_code(&e), ready + e.latency_ms, fallback)
                        .await;
                }
            }
        }
        StrategyKind::Segmented => segmented(providers, guard, turn, stream).await,
    }
}

async fn segmented(
    providers: &Providers,
    guard: &Guardrails,
    turn: &mut Turn<'_>,
    mut stream: crate::providers::TokenStream,
) {
    let req = turn.req;
    let stt = turn.lat.stt_ms;
    let mut sentences = SentenceStream::new();
    let mut inc = guard.incremental(&req.profile, &req.context);
    let mut builder = SegmentBuilder::new(req.strategy.params);
    let mut pending: FuturesOrdered<Pending> = FuturesOrdered::new();
    let mut generating = true;
    let mut stream_failure: Option<(String, u64)> = None;

    let spawn = |pending: &mut FuturesOrdered<Pending>, text: String, ready: u64| {
        let tts = Arc::clone(&providers.tts);
        let voice = req.profile.voice_id.clone();
        pending.push_back(Box::pin(async move {
            let result = tts.synthesize(&text, &voice).await;
            (text, ready, result)
        }));
    };

    loop {
        tokio::select! {
            biased;
            Some((text, ready, result)) = pending.next(), if !pending.is_empty() => match result {
                Ok(synth) => {
                    turn.record_synthesis(ready, &synth);
                    let done = ready + synth.latency_ms;
                    turn.send_segment(text, synth, done, false, None);
                    if turn.failure.is_some() {
                        break;
                    }
                }
                Err(e) => {
                    turn.lat.tts_total_ms += e.latency_ms;
                    stream_failure = Some((failure_code(&e), ready + e.latency_ms));
                    break;
                }
            },
            event = stream.next(), if generating => {
                let mut completed = Vec::new();
                let mut at = turn.lat.llm_total_ms;
                let mut ended = false;
                match event {
                    Some(Ok(TokenEvent::Chunk { text, at_ms })) => {
                        if turn.raw.is_empty() {
                            turn.lat.llm_first_chunk_ms = at_ms;
                        }
                        turn.raw.push_str(&text);
                        at = at_ms;
                        completed = sentences.push(&text);
                    }
                    Some(Ok(TokenEvent::End { at_ms })) => {
                        at = at_ms;
                        completed.extend(sentences.finish());
                        ended = true;
                    }
                    None => {
                        completed.extend(sentences.finish());
                        ended = true;
                    }
                    Some(Err(e)) => {
                        turn.lat.llm_total_ms = e.latency_ms;
                        stream_failure = Some((failure_code(&e), stt + e.latency_ms));
                        generating = false;
                        continue;
                    }
                }
                turn.lat.llm_total_ms = at;
                let mut stop = ended;
                for sentence in completed {
                    let admit = inc.push(&sentence);
                    for s in admit.sentences() {
                        for seg in builder.push(s) {
                            spawn(&mut pending, seg, stt + at);
                        }
                    }
                    if admit.is_last() {
                        stop = true;
                        break;
                    }
                }
                if stop {
                    for s in inc.finish() {
                        for seg in builder.push(&s) {
                            spawn(&mut pending, seg, stt + at);
                        }
                    }
                    if let Some(seg) = builder.finish() {
                        spawn(&mut pending, seg, stt + at);
                    }
                    generating = false;
                }
            },
            else => break,
        }
    }
    turn.audit
        .extend(inc.into_audit().entries().iter().cloned());

    let stopped_at = stt + turn.lat.llm_total_ms;
    if let Some(code) = turn.failure.take() {
        return turn
            .apologise(code, turn.last_emit_ms, &providers.fallback_voice)
            .await;
    }
    if let Some((code, at)) = stream_failure {
        return turn.apologise(code, at, &providers.fallback_voice).await;
    }
    if turn.segments.is_empty() {
        return turn
            .apologise(
                "dialogue_empty_response".into(),
                stopped_at,
                &providers.fallback_voice,
            )
            .await;
    }
    turn.last_emit_ms = turn.last_emit_ms.max(stopped_at);
    let terminal = turn.envelope(Vec::new(), true, None);
    (turn.emit)(terminal);
}
