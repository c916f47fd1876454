use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::json::{self, Fields};
use super::vocab::{Action, ActionKind, ExpressionName, GestureName};
use super::{ProtocolError, PROTOCOL_VERSION};

const COMMAND_KEYS: [&str; 8] = [
    "version",
    "session_id",
    "turn_id",
    "segment_id",
    "kind",
    "name",
    "start_ms",
    "duration_ms",
];

/// One timed gesture or expression bound to an utterance segment.
///
/// `start_ms` is an offset from the start of the segment's audio. Field
/// declaration order is the canonical key order on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionCommand {
    pub version: u32,
    pub session_id: String,
    pub turn_id: u64,
    pub segment_id: u64,
    pub kind: ActionKind,
    pub name: String,
    pub start_ms: u64,
    pub duration_ms: u64,
}

impl ActionCommand {
    pub fn gesture(
        session_id: &str,
        turn_id: u64,
        segment_id: u64,
        gesture: GestureName,
        start_ms: u64,
        duration_ms: u64,
    ) -> Self {
        Self::new(
            session_id,
            turn_id,
            segment_id,
            ActionKind::Gesture,
            gesture.as_str(),
            start_ms,
            duration_ms,
        )
    }

    pub fn expression(
        session_id: &str,
        turn_id: u64,
        segment_id: u64,
        expression: ExpressionName,
        start_ms: u64,
        duration_ms: u64,
    ) -> Self {
        Self::new(
            session_id,
            turn_id,
            segment_id,
            ActionKind::Expression,
            expression.as_str(),
            start_ms,
            duration_ms,
        )
    }

    fn new(
        session_id: &str,
        turn_id: u64,
        segment_id: u64,
        kind: ActionKind,
        name: &str,
        start_ms: u64,
        duration_ms: u64,
    ) -> Self {
        ActionCommand {
            version: PROTOCOL_VERSION,
            session_id: session_id.to_string(),
            turn_id,
            segment_id,
            kind,
            name: name.to_string(),
            start_ms,
            duration_ms,
        }
    }

    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.duration_ms
    }

    /// Resolve the name against the vocabulary of its kind.
    pub fn action(&self) -> Result<Action, ProtocolError> {
        Action::resolve(self.kind, &self.name).map_err(|_| ProtocolError::InvalidField {
            field: "name".into(),
            reason: format!(
                "`{}` is not a registered {} name",
                self.name,
                self.kind.as_str()
            ),
        })
    }

    /// Check the command-local invariants.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.version != PROTOCOL_VERSION {
            return Err(ProtocolError::UnsupportedVersion(i64::from(self.version)));
        }
        if self.session_id.is_empty() {
            return Err(ProtocolError::InvalidField {
                field: "session_id".into(),
                reason: "must not be empty".into(),
            });
        }
        if self.duration_ms == 0 {
            return Err(ProtocolError::InvalidField {
                field: "duration_ms".into(),
                reason: "must be positive".into(),
            });
        }
        self.action().map(|_| ())
    }

    pub(crate) fn from_value(value: &Value, prefix: &str) -> Result<Self, ProtocolError> {
        let f = Fields::new(value, prefix)?;
        f.version()?;
        f.only(&COMMAND_KEYS)?;
        let kind = f.str("kind")?;
        let kind = kind
            .parse::<ActionKind>()
            .map_err(|_| f.invalid("kind", format!("`{kind}` is not gesture or expression")))?;
        let cmd = ActionCommand {
            version: PROTOCOL_VERSION,
            session_id: f.str("session_id")?.to_string(),
            turn_id: f.u64("turn_id")?,
            segment_id: f.u64("segment_id")?,
            kind,
            name: f.str("name")?.to_string(),
            start_ms: f.u64("start_ms")?,
            duration_ms: f.u64("duration_ms")?,
        };
        cmd.validate().map_err(|e| e.within(prefix))?;
        Ok(cmd)
    }
}

/// Canonical JSON: fixed key order, no insignificant whitespace.
pub fn encode_command(cmd: &ActionCommand) -> Result<String, ProtocolError> {
    cmd.validate()?;
    Ok(serde_json::to_string(cmd).expect("command serialization is infallible"))
}

pub fn decode_command(text: &str) -> Result<ActionCommand, ProtocolError> {
    let value = json::parse(text.as_bytes())?;
    ActionCommand::from_value(&value, "")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nod() -> ActionCommand {
        ActionCommand::gesture("a", 0, 0, GestureName::Nod, 0, 1200)
    }

    #[test]
    fn canonical_encoding_of_reference_command() {
        assert_eq!(
            encode_command(&nod()).unwrap(),
            r#"{"version":1,"session_id":"a","turn_id":0,"segment_id":0,"kind":"gesture","name":"nod","start_ms":0,"duration_ms":1200}"#
        );
    }

    #[test]
    fn expression_named_nod_is_rejected() {
        let mut cmd = nod();
        cmd.kind = ActionKind::Expression;
        match encode_command(&cmd) {
            Err(ProtocolError::InvalidField { field, .. }) => assert_eq!(field, "name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decode_inverts_encode() {
        let text = encode_command(&nod()).unwrap();
        assert_eq!(decode_command(&text).unwrap(), nod());
    }

    #[test]
    fn version_two_is_unsupported() {
        let text = encode_command(&nod())
            .unwrap()
            .replace(r#""version":1"#, r#""version":2"#);
        assert_eq!(
            decode_command(&text),
            Err(ProtocolError::UnsupportedVersion(2))
        );
    }

    #[test]
    fn missing_and_extra_fields_are_named() {
        let text = encode_command(&nod())
            .unwrap()
            .replace(r#","start_ms":0"#, "");
        assert_eq!(
            decode_command(&text),
            Err(ProtocolError::MissingField("start_ms".into()))
        );

        let text = encode_command(&nod())
            .unwrap()
            .replace('}', r#","color":"red"}"#);
        assert_eq!(
            decode_command(&text),
            Err(ProtocolError::UnknownField("color".into()))
        );
    }

    #[test]
    fn every_truncation_fails_with_parse_error() {
        let text = encode_command(&nod()).unwrap();
        for cut in 0..text.len() {
            match decode_command(&text[..cut]) {
                Err(ProtocolError::Parse { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut at {cut}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn zero_duration_is_invalid() {
        let mut cmd = nod();
        cmd.duration_ms = 0;
        assert!(matches!(
            encode_command(&cmd),
            Err(ProtocolError::InvalidField { .. })
        ));
    }
}
