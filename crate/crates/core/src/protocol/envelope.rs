use std::collections::BTreeMap;

use serde::Serialize;

use super::audio;
use super::command::ActionCommand;
use super::vocab::Channel;
use super::ProtocolError;

/// Slack allowed past the end of a segment's audio for an action to finish.
pub const ACTION_TAIL_TOLERANCE_MS: u64 = 250;

/// One utterance segment: its text, audio, and the actions that accompany it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentEnvelope {
    pub segment_id: u64,
    pub text: String,
    /// WAV payload in the fixed format (see [`audio`]).
    pub audio: Vec<u8>,
    pub audio_duration_ms: u64,
    pub actions: Vec<ActionCommand>,
}

/// A unit of delivery for one turn.
///
/// A turn is sent as one or more envelopes; segment ids continue densely
/// across them and exactly the last carries `final = true`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnEnvelope {
    pub session_id: String,
    pub turn_id: u64,
    pub segments: Vec<SegmentEnvelope>,
    pub final_: bool,
    /// Offset from the end of input capture at which the gateway released
    /// this envelope on its turn timeline.
    pub emitted_at_ms: u64,
    /// Machine code of the provider failure this envelope apologises for.
    pub failure: Option<String>,
}

#[derive(Serialize)]
pub(crate) struct TurnHeader<'a> {
    pub version: u32,
    pub session_id: &'a str,
    pub turn_id: u64,
    #[serde(rename = "final")]
    pub final_: bool,
    pub segment_count: u64,
    pub emitted_at_ms: u64,
    pub failure: Option<&'a str>,
}

pub(crate) const TURN_HEADER_KEYS: [&str; 7] = [
    "version",
    "session_id",
    "turn_id",
    "final",
    "segment_count",
    "emitted_at_ms",
    "failure",
];

#[derive(Serialize)]
pub(crate) struct SegmentHeader<'a> {
    pub segment_id: u64,
    pub text: &'a str,
    pub audio_duration_ms: u64,
    pub actions: &'a [ActionCommand],
}

pub(crate) const SEGMENT_HEADER_KEYS: [&str; 4] =
    ["segment_id", "text", "audio_duration_ms", "actions"];

impl SegmentEnvelope {
    /// Build a segment whose duration is read from the payload.
    pub fn new(
        segment_id: u64,
        text: impl Into<String>,
        audio: Vec<u8>,
        actions: Vec<ActionCommand>,
    ) -> Result<Self, ProtocolError> {
        let audio_duration_ms = audio::payload_duration_ms(&audio)
            .map_err(|source| ProtocolError::Audio { segment_id, source })?;
        Ok(SegmentEnvelope {
            segment_id,
            text: text.into(),
            audio,
            audio_duration_ms,
            actions,
        })
    }

    /// Check the segment invariants in the context of its turn.
    pub fn validate(&self, session_id: &str, turn_id: u64) -> Result<(), ProtocolError> {
        let seg = self.segment_id;
        let invalid = |field: &str, reason: String| ProtocolError::InvalidField {
            field: format!("segments[{seg}].{field}"),
            reason,
        };
        if self.audio_duration_ms == 0 {
            return Err(invalid("audio_duration_ms", "must be positive".into()));
        }
        let pcm = audio::pcm_data(&self.audio).map_err(|source| ProtocolError::Audio {
            segment_id: seg,
            source,
        })?;
        let actual = audio::duration_ms_for_pcm_len(pcm.len());
        if actual.abs_diff(self.audio_duration_ms) > 1 {
            return Err(invalid(
                "audio_duration_ms",
                format!(
                    "declares {} ms but payload holds {actual} ms",
                    self.audio_duration_ms
                ),
            ));
        }

        let mut windows: BTreeMap<Channel, Vec<(u64, u64)>> = BTreeMap::new();
        let mut last_start = 0;
        for (i, cmd) in self.actions.iter().enumerate() {
            let at = |field: &str| format!("actions[{i}].{field}");
            cmd.validate()
                .map_err(|e| e.within(&format!("segments[{seg}].actions[{i}]")))?;
            if cmd.session_id != session_id || cmd.turn_id != turn_id || cmd.segment_id != seg {
                return Err(invalid(
                    &at("segment_id"),
                    "command belongs to another segment".into(),
                ));
            }
            if cmd.start_ms < last_start {
                return Err(invalid(
                    &at("start_ms"),
                    "actions must be sorted by start_ms".into(),
                ));
            }
            last_start = cmd.start_ms;
            if cmd.end_ms() > self.audio_duration_ms + ACTION_TAIL_TOLERANCE_MS {
                return Err(invalid(
                    &at("duration_ms"),
                    format!(
                        "ends at {} ms, past audio end {} ms + {ACTION_TAIL_TOLERANCE_MS} ms",
                        cmd.end_ms(),
                        self.audio_duration_ms
                    ),
                ));
            }
            let channel = cmd.action()?.channel();
            let busy = windows.entry(channel).or_default();
            if busy
                .iter()
                .any(|&(s, e)| cmd.start_ms < e && s < cmd.end_ms())
            {
                return Err(invalid(
                    &at("start_ms"),
                    format!("overlaps another command on {channel}"),
                ));
            }
            busy.push((cmd.start_ms, cmd.end_ms()));
        }
        Ok(())
    }
}

impl TurnEnvelope {
    /// Check the envelope-local invariants: every segment is valid and
    /// segment ids are consecutive.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.session_id.is_empty() {
            return Err(ProtocolError::InvalidField {
                field: "session_id".into(),
                reason: "must not be empty".into(),
            });
        }
        for pair in self.segments.windows(2) {
            if pair[1].segment_id != pair[0].segment_id + 1 {
                return Err(ProtocolError::InvalidField {
                    field: format!("segments[{}].segment_id", pair[1].segment_id),
                    reason: "segment ids must be consecutive".into(),
                });
            }
        }
        self.segments
            .iter()
            .try_for_each(|s| s.validate(&self.session_id, self.turn_id))
    }

    pub(crate) fn header(&self) -> TurnHeader<'_> {
        TurnHeader {
            version: super::PROTOCOL_VERSION,
            session_id: &self.session_id,
            turn_id: self.turn_id,
            final_: self.final_,
            segment_count: self.segments.len() as u64,
            emitted_at_ms: self.emitted_at_ms,
            failure: self.failure.as_deref(),
        }
    }
}

/// Checks the cross-envelope invariants of one turn's delivery: a single
/// session and turn, segment ids dense from zero, and exactly one final
/// envelope, which must be the last.
#[derive(Debug, Default)]
pub struct TurnStreamValidator {
    ident: Option<(String, u64)>,
    next_segment: u64,
    finished: bool,
}

impl TurnStreamValidator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, env: &TurnEnvelope) -> Result<(), ProtocolError> {
        if self.finished {
            return Err(ProtocolError::Stream(
                "envelope after the final envelope".into(),
            ));
        }
        match &self.ident {
            None => self.ident = Some((env.session_id.clone(), env.turn_id)),
            Some((s, t)) if *s == env.session_id && *t == env.turn_id => {}
            Some(_) => return Err(ProtocolError::Stream("envelope from another turn".into())),
        }
        for seg in &env.segments {
            if seg.segment_id != self.next_segment {
                return Err(ProtocolError::Stream(format!(
                    "expected segment {}, got {}",
                    self.next_segment, seg.segment_id
                )));
            }
            self.next_segment += 1;
        }
        self.finished = env.final_;
        Ok(())
    }

    /// Confirm the turn was closed by a final envelope.
    pub fn finish(&self) -> Result<(), ProtocolError> {
        if self.finished {
            Ok(())
        } else {
            Err(ProtocolError::Stream(
                "turn ended without a final envelope".into(),
            ))
        }
    }
}
