//! Length-prefixed framing of turn envelopes.
//!
//! ```text
//! frame   := u32be(len) turn-header-json  segment*
//! segment := u32be(len) segment-header-json  u32be(len) wav-bytes
//! ```
//!
//! The turn header announces `segment_count`. A response body is a plain
//! concatenation of frames.

use serde_json::Value;

use super::command::ActionCommand;
use super::envelope::{
    SegmentEnvelope, SegmentHeader, TurnEnvelope, SEGMENT_HEADER_KEYS, TURN_HEADER_KEYS,
};
use super::json::{self, Fields};
use super::ProtocolError;

/// Upper bound on any JSON header.
pub const MAX_HEADER_LEN: usize = 1 << 20;
/// Upper bound on one segment's audio (about nine minutes at the fixed rate).
pub const MAX_AUDIO_LEN: usize = 16 << 20;
pub const MAX_SEGMENTS_PER_ENVELOPE: u64 = 4096;

/// Serialize one envelope after checking its invariants.
pub fn frame_turn(env: &TurnEnvelope) -> Result<Vec<u8>, ProtocolError> {
    env.validate()?;
    let mut out = Vec::new();
    let header = serde_json::to_vec(&env.header()).expect("header serialization is infallible");
    push_block(&mut out, "turn header", &header, MAX_HEADER_LEN)?;
    for seg in &env.segments {
        let header = serde_json::to_vec(&SegmentHeader {
            segment_id: seg.segment_id,
            text: &seg.text,
            audio_duration_ms: seg.audio_duration_ms,
            actions: &seg.actions,
        })
        .expect("header serialization is infallible");
        push_block(&mut out, "segment header", &header, MAX_HEADER_LEN)?;
        push_block(&mut out, "segment audio", &seg.audio, MAX_AUDIO_LEN)?;
    }
    Ok(out)
}

fn push_block(
    out: &mut Vec<u8>,
    what: &'static str,
    bytes: &[u8],
    max: usize,
) -> Result<(), ProtocolError> {
    if bytes.len() > max {
        return Err(ProtocolError::FrameTooLarge {
            what,
            len: bytes.len(),
            max,
        });
    }
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
    Ok(())
}

/// Decode exactly one framed envelope.
pub fn unframe_turn(bytes: &[u8]) -> Result<TurnEnvelope, ProtocolError> {
    match parse_frame(bytes)? {
        Parsed::Complete(env, used) if used == bytes.len() => Ok(env),
        Parsed::Complete(_, used) => Err(ProtocolError::Framing(format!(
            "{} trailing bytes after the frame",
            bytes.len() - used
        ))),
        Parsed::Incomplete { what, needed } => Err(ProtocolError::Truncated { what, needed }),
    }
}

/// Decode a complete response body of concatenated frames.
pub fn unframe_stream(bytes: &[u8]) -> Result<Vec<TurnEnvelope>, ProtocolError> {
    let mut decoder = FrameDecoder::new();
    decoder.extend(bytes);
    let mut out = Vec::new();
    while let Some(env) = decoder.next_envelope()? {
        out.push(env);
    }
    decoder.finish()?;
    Ok(out)
}

/// Incremental decoder for envelopes arriving over a byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete envelope, or `None` when more bytes are needed.
    pub fn next_envelope(&mut self) -> Result<Option<TurnEnvelope>, ProtocolError> {
        if self.buf.is_empty() {
            return Ok(None);
        }
        match parse_frame(&self.buf)? {
            Parsed::Complete(env, used) => {
                self.buf.drain(..used);
                Ok(Some(env))
            }
            Parsed::Incomplete { .. } => Ok(None),
        }
    }

    /// Fail if the stream ended inside a frame.
    pub fn finish(&self) -> Result<(), ProtocolError> {
        if self.buf.is_empty() {
            return Ok(());
        }
        match parse_frame(&self.buf)? {
            Parsed::Incomplete { what, needed } => Err(ProtocolError::Truncated { what, needed }),
            Parsed::Complete(..) => Err(ProtocolError::Framing(
                "undrained frame at end of stream".into(),
            )),
        }
    }
}

enum Parsed {
    Complete(TurnEnvelope, usize),
    Incomplete { what: &'static str, needed: usize },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], Parsed> {
        let rest = self.bytes.len() - self.pos;
        if rest < n {
            return Err(Parsed::Incomplete {
                what,
                needed: n - rest,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn block(
        &mut self,
        what: &'static str,
        max: usize,
    ) -> Result<Result<&'a [u8], ProtocolError>, Parsed> {
        let len = self.take(4, what)?;
        let len = u32::from_be_bytes([len[0], len[1], len[2], len[3]]) as usize;
        if len > max {
            return Ok(Err(ProtocolError::FrameTooLarge { what, len, max }));
        }
        self.take(len, what).map(Ok)
    }
}

macro_rules! step {
    ($e:expr) => {
        match $e {
            Ok(Ok(v)) => v,
            Ok(Err(err)) => return Err(err),
            Err(parsed) => return Ok(parsed),
        }
    };
}

fn parse_frame(bytes: &[u8]) -> Result<Parsed, ProtocolError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let header = step!(cur.block("turn header", MAX_HEADER_LEN));
    let header = json::parse(header)?;
    let h = Fields::new(&header, "turn")?;
    h.version()?;
    h.only(&TURN_HEADER_KEYS)?;
    let session_id = h.str("session_id")?.to_string();
    let turn_id = h.u64("turn_id")?;
    let final_ = h.bool("final")?;
    let count = h.u64("segment_count")?;
    if count > MAX_SEGMENTS_PER_ENVELOPE {
        return Err(h.invalid(
            "segment_count",
            format!("more than {MAX_SEGMENTS_PER_ENVELOPE} segments"),
        ));
    }
    let emitted_at_ms = h.u64("emitted_at_ms")?;
    let failure = h.opt_str("failure")?.map(str::to_string);

    let mut segments = Vec::with_capacity(count as usize);
    for i in 0..count {
        let header = step!(cur.block("segment header", MAX_HEADER_LEN));
        let header = json::parse(header)?;
        let audio = step!(cur.block("segment audio", MAX_AUDIO_LEN));
        segments.push(segment_from_header(
            &header,
            &format!("segments[{i}]"),
            audio.to_vec(),
        )?);
    }
    let env = TurnEnvelope {
        session_id,
        turn_id,
        segments,
        final_,
        emitted_at_ms,
        failure,
    };
    env.validate()?;
    Ok(Parsed::Complete(env, cur.pos))
}

fn segment_from_header(
    header: &Value,
    prefix: &str,
    audio: Vec<u8>,
) -> Result<SegmentEnvelope, ProtocolError> {
    let f = Fields::new(header, prefix)?;
    f.only(&SEGMENT_HEADER_KEYS)?;
    let actions = f
        .array("actions")?
        .iter()
        .enumerate()
        .map(|(i, v)| ActionCommand::from_value(v, &format!("{prefix}.actions[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SegmentEnvelope {
        segment_id: f.u64("segment_id")?,
        text: f.str("text")?.to_string(),
        audio,
        audio_duration_ms: f.u64("audio_duration_ms")?,
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::audio::beep_marked_silence;
    use crate::protocol::vocab::{ExpressionName, GestureName};

    fn segment(id: u64, ms: u64) -> SegmentEnvelope {
        let actions = vec![
            ActionCommand::expression("s1", 4, id, ExpressionName::Happy, 0, ms),
            ActionCommand::gesture("s1", 4, id, GestureName::Nod, 0, ms.min(1200)),
        ];
        SegmentEnvelope::new(
            id,
            format!("segment {id}."),
            beep_marked_silence(ms),
            actions,
        )
        .unwrap()
    }

    fn turn(segments: Vec<SegmentEnvelope>) -> TurnEnvelope {
        TurnEnvelope {
            session_id: "s1".into(),
            turn_id: 4,
            segments,
            final_: true,
            emitted_at_ms: 4500,
            failure: None,
        }
    }

    #[test]
    fn header_only_frame_round_trips() {
        let env = turn(vec![]);
        let bytes = frame_turn(&env).unwrap();
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 4 + len);
        assert_eq!(unframe_turn(&bytes).unwrap(), env);
    }

    #[test]
    fn three_segments_come_back_in_order() {
        let env = turn(vec![segment(0, 2400), segment(1, 600), segment(2, 1800)]);
        let back = unframe_turn(&frame_turn(&env).unwrap()).unwrap();
        let ids: Vec<_> = back.segments.iter().map(|s| s.segment_id).collect();
        assert_eq!(ids, [0, 1, 2]);
        assert_eq!(back, env);
    }

    #[test]
    fn audio_length_field_larger_than_payload_is_truncation() {
        let env = turn(vec![segment(0, 600)]);
        let mut bytes = frame_turn(&env).unwrap();
        let audio_len = beep_marked_silence(600).len();
        let field = bytes.len() - audio_len - 4;
        bytes[field..field + 4].copy_from_slice(&((audio_len + 10) as u32).to_be_bytes());
        assert!(matches!(
            unframe_turn(&bytes),
            Err(ProtocolError::Truncated {
                what: "segment audio",
                ..
            })
        ));
    }

    #[test]
    fn audio_length_field_smaller_than_payload_is_rejected() {
        let env = turn(vec![segment(0, 600)]);
        let mut bytes = frame_turn(&env).unwrap();
        let audio_len = beep_marked_silence(600).len();
        let field = bytes.len() - audio_len - 4;
        bytes[field..field + 4].copy_from_slice(&((audio_len - 64) as u32).to_be_bytes());
        assert!(unframe_turn(&bytes).is_err());
    }

    #[test]
    fn oversize_header_is_refused_before_reading() {
        let mut bytes = ((MAX_HEADER_LEN + 1) as u32).to_be_bytes().to_vec();
        bytes.extend_from_slice(b"{}");
        assert!(matches!(
            unframe_turn(&bytes),
            Err(ProtocolError::FrameTooLarge { .. })
        ));

        let mut env = turn(vec![segment(0, 600)]);
        env.segments[0].text = "a".repeat(MAX_HEADER_LEN);
        assert!(matches!(
            frame_turn(&env),
            Err(ProtocolError::FrameTooLarge { .. })
        ));
    }

    #[test]
    fn decoder_yields_envelopes_as_bytes_arrive() {
        let a = TurnEnvelope {
            final_: false,
            ..turn(vec![segment(0, 600)])
        };
        let b = turn(vec![segment(1, 900)]);
        let mut stream = frame_turn(&a).unwrap();
        stream.extend(frame_turn(&b).unwrap());

        let mut decoder = FrameDecoder::new();
        let mut seen = Vec::new();
        for chunk in stream.chunks(97) {
            decoder.extend(chunk);
            while let Some(env) = decoder.next_envelope().unwrap() {
                seen.push(env);
            }
        }
        decoder.finish().unwrap();
        assert_eq!(seen, [a, b]);
    }

    #[test]
    fn overlapping_gestures_on_one_channel_are_rejected() {
        let mut seg = segment(0, 2400);
        seg.actions.push(ActionCommand::gesture(
            "s1",
            4,
            0,
            GestureName::Idle,
            600,
            400,
        ));
        assert!(matches!(
            frame_turn(&turn(vec![seg])),
            Err(ProtocolError::InvalidField { .. })
        ));
    }

    #[test]
    fn actions_past_the_tail_tolerance_are_rejected() {
        let mut seg = segment(0, 600);
        seg.actions[0].duration_ms = 600 + 251;
        assert!(frame_turn(&turn(vec![seg.clone()])).is_err());
        seg.actions[0].duration_ms = 600 + 250;
        assert!(frame_turn(&turn(vec![seg])).is_ok());
    }
}
