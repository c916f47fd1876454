use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;

use super::turn::{execute_turn, Providers, TurnInput, TurnRequest};
use super::{Strategy, TurnRecord};
use crate::guardrails::{Guardrails, TurnContext};
use crate::protocol::{audio, TurnEnvelope};
use crate::providers::{Speaker, Utterance};
use crate::store::{LogQuery, SessionMeta, SessionStatus, Store, StoreError};

/// Wall-clock source for record timestamps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("session `{0}` not found")]
    UnknownSession(String),
    #[error("session `{0}` has ended")]
    SessionEnded(String),
    #[error("session `{0}` already has a turn in progress")]
    Busy(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("audio is not 16 kHz mono 16-bit PCM WAV: {0}")]
    InvalidAudio(String),
    #[error("profile `{0}` not found")]
    UnknownProfile(String),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for EngineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownSession(s) => EngineError::UnknownSession(s),
            StoreError::SessionEnded(s) => EngineError::SessionEnded(s),
            StoreError::UnknownProfile(p) => EngineError::UnknownProfile(p),
            other => EngineError::Store(other),
        }
    }
}

impl TurnInput {
    /// Reject input that cannot start a turn at all.
    pub fn validate(&self) -> Result<(), EngineError> {
        match self {
            TurnInput::AacText(text) if text.trim().is_empty() => Err(EngineError::EmptyInput),
            TurnInput::Voice(bytes) if bytes.is_empty() => Err(EngineError::EmptyInput),
            TurnInput::Voice(bytes) => {
                audio::pcm_data(bytes).map_err(|e| EngineError::InvalidAudio(e.to_string()))?;
                Ok(())
            }
            TurnInput::AacText(_) => Ok(()),
        }
    }
}

/// Sessions, turn admission and persistence around [`execute_turn`].
pub struct Engine {
    providers: Providers,
    guard: Arc<Guardrails>,
    store: Arc<Store>,
    clock: Arc<dyn Clock>,
    busy: Mutex<HashSet<String>>,
    history_turns: usize,
}

impl Engine {
    pub fn new(
        providers: Providers,
        guard: Arc<Guardrails>,
        store: Arc<Store>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Engine {
            providers,
            guard,
            store,
            clock,
            busy: Mutex::new(HashSet::new()),
            history_turns: 10,
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn guardrails(&self) -> &Guardrails {
        &self.guard
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn create_session(
        &self,
        profile_id: &str,
        device_label: &str,
    ) -> Result<SessionMeta, EngineError> {
        Ok(self
            .store
            .create_session(profile_id, device_label, self.clock.now_ms())?)
    }

    /// Claim the session's single turn slot; released when the permit drops.
    pub fn begin_turn(self: &Arc<Self>, session_id: &str) -> Result<TurnPermit, EngineError> {
        let meta = self
            .store
            .session(session_id)
            .ok_or_else(|| EngineError::UnknownSession(session_id.into()))?;
        if meta.status == SessionStatus::Ended {
            return Err(EngineError::SessionEnded(session_id.into()));
        }
        if !self.busy.lock().insert(session_id.to_string()) {
            return Err(EngineError::Busy(session_id.into()));
        }
        Ok(TurnPermit {
            engine: Arc::clone(self),
            meta,
        })
    }

    fn history(&self, session_id: &str) -> Result<Vec<Utterance>, EngineError> {
        let log = self
            .store
            .query_log(session_id, &LogQuery::default())?
            .records;
        let recent = &log[log.len().saturating_sub(self.history_turns)..];
        Ok(recent
            .iter()
            .filter(|r| !r.is_failure())
            .flat_map(|r| {
                [
                    Utterance {
                        turn_id: r.turn_id,
                        speaker: Speaker::Child,
                        text: r.transcript.clone(),
                    },
                    Utterance {
                        turn_id: r.turn_id,
                        speaker: Speaker::Robot,
                        text: r.guarded_response.clone(),
                    },
                ]
            })
            .collect())
    }
}

/// Exclusive right to run the next turn of one session.
pub struct TurnPermit {
    engine: Arc<Engine>,
    meta: SessionMeta,
}

impl TurnPermit {
    pub fn session(&self) -> &SessionMeta {
        &self.meta
    }

    /// Run the turn, streaming envelopes to `emit`, and persist its record.
    pub async fn run(
        self,
        input: TurnInput,
        context: TurnContext,
        strategy: Strategy,
        emit: &mut (dyn FnMut(TurnEnvelope) + Send),
    ) -> Result<TurnRecord, EngineError> {
        input.validate()?;
        let engine = &self.engine;
        let sid = &self.meta.session_id;
        let profile = engine
            .store
            .get_profile(&self.meta.profile_id)
            .ok_or_else(|| EngineError::UnknownProfile(self.meta.profile_id.clone()))?
            .profile;
        let req = TurnRequest {
            session_id: sid.clone(),
            turn_id: engine.store.next_turn_id(sid)?,
            started_at_ms: engine.clock.now_ms(),
            profile,
            history: engine.history(sid)?,
            input,
            context,
            strategy,
        };
        let record = execute_turn(&engine.providers, &engine.guard, &req, emit).await;
        engine.store.append_turn(&record)?;
        tracing::info!(
            session = %sid,
            turn = record.turn_id,
            strategy = %record.strategy,
            first_audio_ms = record.first_audio_latency_ms,
            failure = record.failure.as_deref().unwrap_or("none"),
            "turn complete"
        );
        Ok(record)
    }
}

impl Drop for TurnPermit {
    fn drop(&mut self) {
        self.engine.busy.lock().remove(&self.meta.session_id);
    }
}
