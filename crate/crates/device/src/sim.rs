//! The device loop: connect, then for each scripted press capture, upload,
//! play back the streamed segments and act them out.

use companion_core::protocol::{DeviceEvent, DeviceEventKind, TurnStreamValidator};
use serde_json::{json, Value};

use crate::actions::{execute_actions, Hardware};
use crate::client::{ClientError, GatewayClient, TurnResponse};
use crate::clock::DeviceClock;
use crate::config::{DeviceConfig, InvalidDeviceConfig};
use crate::log::EventLog;
use crate::script::{Script, ScriptInput, ScriptStep};

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    /// `None` when the gateway was never reached.
    pub session_id: Option<String>,
    pub log: EventLog,
    /// Turns whose final envelope was played back.
    pub turns_completed: usize,
}

impl SessionOutcome {
    pub fn has_errors(&self) -> bool {
        self.log.has_errors()
    }
}

struct Device {
    config: DeviceConfig,
    client: GatewayClient,
    clock: DeviceClock,
    hw: Hardware,
    log: EventLog,
}

/// Why a step could not finish. Terminal failures end the session.
enum StepFailure {
    Terminal(Value),
    Turn(Value),
}

/// Run `script` against the configured gateway.
///
/// Failures are recorded as `error` events rather than returned: an
/// unreachable gateway is retried on the backoff schedule and then ends the
/// session, a rejected or broken turn is logged and the script moves on.
pub async fn run_session(
    config: &DeviceConfig,
    script: &Script,
) -> Result<SessionOutcome, InvalidDeviceConfig> {
    config.validate()?;
    let mut dev = Device {
        client: GatewayClient::new(&config.server, config.token.clone()),
        clock: DeviceClock::new(config.time_source),
        hw: Hardware::new(config.channels),
        log: EventLog::new(),
        config: config.clone(),
    };
    let Some(session_id) = dev.connect().await else {
        return Ok(SessionOutcome {
            session_id: None,
            log: dev.log,
            turns_completed: 0,
        });
    };
    let mut turns_completed = 0;
    for step in &script.steps {
        let logged = dev.log.events().len();
        let outcome = dev.step(&session_id, step).await;
        let terminal = matches!(outcome, Err(StepFailure::Terminal(_)));
        match outcome {
            Ok(()) => turns_completed += 1,
            Err(StepFailure::Turn(payload)) => dev.error_now(payload),
            Err(StepFailure::Terminal(mut payload)) => {
                payload["terminal"] = json!(true);
                dev.error_now(payload);
            }
        }
        if !terminal {
            dev.publish(&session_id, logged).await;
        } else {
            break;
        }
    }
    let now = dev.clock.now_ms();
    dev.log.push(DeviceEvent::new(
        now,
        DeviceEventKind::Disconnected,
        json!({"session_id": session_id}),
    ));
    Ok(SessionOutcome {
        session_id: Some(session_id),
        log: dev.log,
        turns_completed,
    })
}

impl Device {
    fn error_now(&mut self, payload: Value) {
        let now = self.clock.now_ms().max(self.log.last_ms());
        self.log
            .push(DeviceEvent::new(now, DeviceEventKind::Error, payload));
    }

    /// Retry `op` while the gateway is unreachable. Each failed attempt is
    /// logged; the last one is marked terminal.
    async fn with_backoff<T, F, Fut>(&mut self, stage: &str, mut op: F) -> Result<T, StepFailure>
    where
        F: FnMut() -> Fut,
        Fut: std::future::Future<Output = Result<T, ClientError>>,
    {
        let delays = self.config.backoff.delays();
        let mut attempt = 0usize;
        loop {
            match op().await {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transport() => {
                    attempt += 1;
                    let Some(&wait) = delays.get(attempt - 1) else {
                        return Err(StepFailure::Terminal(
                            json!({"stage": stage, "attempt": attempt, "reason": e.to_string()}),
                        ));
                    };
                    self.error_now(json!({
                        "stage": stage,
                        "attempt": attempt,
                        "reason": e.to_string(),
                        "next_retry_ms": wait,
                    }));
                    self.clock.sleep(wait).await;
                }
                Err(e) => {
                    return Err(StepFailure::Terminal(
                        json!({"stage": stage, "reason": e.to_string()}),
                    ))
                }
            }
        }
    }

    async fn connect(&mut self) -> Option<String> {
        let client = self.client.clone();
        let joined = self.config.session_id.clone();
        let (profile, label) = (
            self.config.profile_id.clone(),
            self.config.device_label.clone(),
        );
        let result = self
            .with_backoff("connect", || {
                let (client, joined, profile, label) = (
                    client.clone(),
                    joined.clone(),
                    profile.clone(),
                    label.clone(),
                );
                async move {
                    client.health().await?;
                    match joined {
                        Some(id) => client.session(&id).await,
                        None => client.create_session(&profile, &label).await,
                    }
                }
            })
            .await;
        match result {
            Ok(meta) => {
                let now = self.clock.now_ms();
                self.log.push(DeviceEvent::new(
                    now,
                    DeviceEventKind::Connected,
                    json!({
                        "session_id": meta.session_id,
                        "profile_id": meta.profile_id,
                        "device_label": self.config.device_label,
                    }),
                ));
                Some(meta.session_id)
            }
            Err(StepFailure::Terminal(mut p) | StepFailure::Turn(mut p)) => {
                p["terminal"] = json!(true);
                self.error_now(p);
                None
            }
        }
    }

    async fn step(&mut self, session_id: &str, step: &ScriptStep) -> Result<(), StepFailure> {
        self.clock.sleep_until(step.press_at_ms).await;
        let (button, led) = (self.config.button_id, self.config.led_id);
        let pressed = self.clock.now_ms();
        let mut batch = Vec::new();
        match &step.input {
            ScriptInput::Voice {
                fixture,
                duration_ms,
                ..
            } => {
                batch.push(DeviceEvent::new(
                    pressed,
                    DeviceEventKind::ButtonPress,
                    json!({"button": button, "action": "start_capture"}),
                ));
                batch.push(DeviceEvent::new(
                    pressed,
                    DeviceEventKind::LedSet,
                    json!({"led": led, "on": true}),
                ));
                batch.push(DeviceEvent::new(
                    pressed,
                    DeviceEventKind::CaptureStart,
                    json!({"input": "voice", "fixture": fixture}),
                ));
                self.clock.sleep(*duration_ms).await;
                let released = self.clock.now_ms();
                batch.push(DeviceEvent::new(
                    released,
                    DeviceEventKind::ButtonPress,
                    json!({"button": button, "action": "stop_capture"}),
                ));
                batch.push(DeviceEvent::new(
                    released,
                    DeviceEventKind::LedSet,
                    json!({"led": led, "on": false}),
                ));
                batch.push(DeviceEvent::new(
                    released,
                    DeviceEventKind::CaptureEnd,
                    json!({"input": "voice", "duration_ms": released - pressed}),
                ));
            }
            ScriptInput::AacText(text) => {
                batch.push(DeviceEvent::new(
                    pressed,
                    DeviceEventKind::CaptureStart,
                    json!({"input": "aac", "text": text}),
                ));
                batch.push(DeviceEvent::new(
                    pressed,
                    DeviceEventKind::CaptureEnd,
                    json!({"input": "aac", "duration_ms": 0}),
                ));
            }
        }
        let capture_end = self.clock.now_ms();
        self.log.extend_sorted(std::mem::take(&mut batch));

        let (client, strategy) = (self.client.clone(), self.config.strategy);
        let sid = session_id.to_string();
        let input = step.input.clone();
        let mut response = self
            .with_backoff("upload", || {
                let (client, sid, input) = (client.clone(), sid.clone(), input.clone());
                async move {
                    match input {
                        ScriptInput::Voice { audio, .. } => {
                            client.voice_turn(&sid, audio, strategy).await
                        }
                        ScriptInput::AacText(text) => client.aac_turn(&sid, &text, strategy).await,
                    }
                }
            })
            .await
            .map_err(|f| match f {
                // A refused turn leaves the session usable.
                StepFailure::Terminal(p) if p.get("attempt").is_none() => StepFailure::Turn(p),
                other => other,
            })?;
        let sent_at = self.clock.now_ms();
        let result = self
            .play(&mut response, capture_end, sent_at, &mut batch)
            .await;
        // Whatever played before a failure still happened.
        self.log.extend_sorted(batch);
        result
    }

    /// Play the streamed turn. Returns an error payload if the stream broke.
    async fn play(
        &mut self,
        response: &mut TurnResponse,
        capture_end: u64,
        sent_at: u64,
        batch: &mut Vec<DeviceEvent>,
    ) -> Result<(), StepFailure> {
        let mut validator = TurnStreamValidator::new();
        let mut playhead = sent_at;
        let mut turn_id = None;
        loop {
            let env = match response.next_envelope().await {
                Ok(Some(env)) => env,
                Ok(None) => break,
                Err(e) => {
                    self.clock.sleep_until(playhead).await;
                    return Err(StepFailure::Turn(
                        json!({"stage": "stream", "turn_id": turn_id, "reason": e.to_string()}),
                    ));
                }
            };
            if let Err(e) = validator.push(&env) {
                self.clock.sleep_until(playhead).await;
                return Err(StepFailure::Turn(
                    json!({"stage": "stream", "turn_id": env.turn_id, "reason": e.to_string()}),
                ));
            }
            turn_id = Some(env.turn_id);
            let arrival = if self.clock.is_virtual() {
                sent_at + env.emitted_at_ms
            } else {
                self.clock.now_ms()
            };
            for seg in &env.segments {
                let start = arrival.max(playhead);
                let mut payload = json!({
                    "turn_id": env.turn_id,
                    "segment_id": seg.segment_id,
                    "text": seg.text,
                    "audio_duration_ms": seg.audio_duration_ms,
                    "latency_ms": start - capture_end,
                });
                if let Some(f) = &env.failure {
                    payload["failure"] = json!(f);
                }
                batch.push(DeviceEvent::new(
                    start,
                    DeviceEventKind::PlaybackStart,
                    payload,
                ));
                batch.extend(execute_actions(seg, start, &self.hw));
                playhead = start + seg.audio_duration_ms;
                batch.push(DeviceEvent::new(
                    playhead,
                    DeviceEventKind::PlaybackEnd,
                    json!({"turn_id": env.turn_id, "segment_id": seg.segment_id}),
                ));
            }
        }
        self.clock.sleep_until(playhead).await;
        validator.finish().map_err(|e| {
            StepFailure::Turn(
                json!({"stage": "stream", "turn_id": turn_id, "reason": e.to_string()}),
            )
        })
    }

    /// Relay the events logged from index `from` on to the gateway's live
    /// stream. Relaying is best effort and never affects the device log.
    async fn publish(&self, session_id: &str, from: usize) {
        if !self.config.publish_events {
            return;
        }
        let events = &self.log.events()[from..];
        if let Err(e) = self.client.post_events(session_id, events).await {
            tracing::warn!(error = %e, "could not relay device events");
        }
    }
}
