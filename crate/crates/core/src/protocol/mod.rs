//! Wire format between the gateway and the device.
//!
//! Action commands are canonical JSON documents; turns travel as
//! length-prefixed frames carrying a JSON header per segment followed by
//! its WAV audio. `docs/protocol.md` is the normative description.

pub mod audio;
mod command;
mod device;
mod envelope;
mod frame;
mod json;
pub mod vocab;

pub use command::{decode_command, encode_command, ActionCommand};
pub use device::{DeviceEvent, DeviceEventKind};
pub use envelope::{SegmentEnvelope, TurnEnvelope, TurnStreamValidator, ACTION_TAIL_TOLERANCE_MS};
pub use frame::{
    frame_turn, unframe_stream, unframe_turn, FrameDecoder, MAX_AUDIO_LEN, MAX_HEADER_LEN,
    MAX_SEGMENTS_PER_ENVELOPE,
};
pub use vocab::{Action, ActionKind, Channel, ExpressionName, GestureName};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(i64),
    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("segment {segment_id} audio: {source}")]
    Audio {
        segment_id: u64,
        source: audio::AudioError,
    },
    #[error("{what} of {len} bytes exceeds the {max}-byte limit")]
    FrameTooLarge {
        what: &'static str,
        len: usize,
        max: usize,
    },
    #[error("stream ended {needed} bytes short while reading {what}")]
    Truncated { what: &'static str, needed: usize },
    #[error("framing error: {0}")]
    Framing(String),
    #[error("invalid turn stream: {0}")]
    Stream(String),
}

impl ProtocolError {
    /// Qualify field paths with the enclosing document path.
    pub(crate) fn within(self, prefix: &str) -> Self {
        let qualify = |f: String| {
            if prefix.is_empty() || f.starts_with(prefix) {
                f
            } else {
                format!("{prefix}.{f}")
            }
        };
        match self {
            ProtocolError::MissingField(f) => ProtocolError::MissingField(qualify(f)),
            ProtocolError::UnknownField(f) => ProtocolError::UnknownField(qualify(f)),
            ProtocolError::InvalidField { field, reason } => ProtocolError::InvalidField {
                field: qualify(field),
                reason,
            },
            other => other,
        }
    }
}
