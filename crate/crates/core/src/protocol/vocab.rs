//! Registered gesture and expression vocabulary shared by the gateway and the device.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Discriminates the two families of action commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Gesture,
    Expression,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Gesture => "gesture",
            ActionKind::Expression => "expression",
        }
    }
}

impl FromStr for ActionKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gesture" => Ok(ActionKind::Gesture),
            "expression" => Ok(ActionKind::Expression),
            other => Err(UnknownName(other.to_string())),
        }
    }
}

/// A name that is not part of the registered vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unregistered name `{0}`")]
pub struct UnknownName(pub String);

/// Physical output a command occupies while it runs.
///
/// At most one command may hold a channel at any instant within a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Matrix,
    HeadPitch,
    HeadYaw,
    Arm,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Matrix => "matrix",
            Channel::HeadPitch => "head_pitch",
            Channel::HeadYaw => "head_yaw",
            Channel::Arm => "arm",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Body gestures the robot can perform. There is deliberately no hug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureName {
    Nod,
    HeadTurnLeft,
    HeadTurnRight,
    Wave,
    Idle,
}

impl GestureName {
    pub const ALL: [GestureName; 5] = [
        GestureName::Nod,
        GestureName::HeadTurnLeft,
        GestureName::HeadTurnRight,
        GestureName::Wave,
        GestureName::Idle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GestureName::Nod => "nod",
            GestureName::HeadTurnLeft => "head_turn_left",
            GestureName::HeadTurnRight => "head_turn_right",
            GestureName::Wave => "wave",
            GestureName::Idle => "idle",
        }
    }

    /// Servo channel driven by this gesture. Idle returns the head to rest.
    pub fn channel(self) -> Channel {
        match self {
            GestureName::Nod | GestureName::Idle => Channel::HeadPitch,
            GestureName::HeadTurnLeft | GestureName::HeadTurnRight => Channel::HeadYaw,
            GestureName::Wave => Channel::Arm,
        }
    }
}

impl fmt::Display for GestureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GestureName {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GestureName::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| UnknownName(s.to_string()))
    }
}

/// The seven faces the dot matrix can show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpressionName {
    Happy,
    Sad,
    Surprised,
    Neutral,
    Curious,
    Encouraging,
    Sleepy,
}

impl ExpressionName {
    pub const ALL: [ExpressionName; 7] = [
        ExpressionName::Happy,
        ExpressionName::Sad,
        ExpressionName::Surprised,
        ExpressionName::Neutral,
        ExpressionName::Curious,
        ExpressionName::Encouraging,
        ExpressionName::Sleepy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExpressionName::Happy => "happy",
            ExpressionName::Sad => "sad",
            ExpressionName::Surprised => "surprised",
            ExpressionName::Neutral => "neutral",
            ExpressionName::Curious => "curious",
            ExpressionName::Encouraging => "encouraging",
            ExpressionName::Sleepy => "sleepy",
        }
    }
}

impl fmt::Display for ExpressionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpressionName {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExpressionName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| UnknownName(s.to_string()))
    }
}

/// A command name resolved against the vocabulary for its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Gesture(GestureName),
    Expression(ExpressionName),
}

impl Action {
    pub fn resolve(kind: ActionKind, name: &str) -> Result<Action, UnknownName> {
        match kind {
            ActionKind::Gesture => name.parse().map(Action::Gesture),
            ActionKind::Expression => name.parse().map(Action::Expression),
        }
    }

    pub fn channel(self) -> Channel {
        match self {
            Action::Gesture(g) => g.channel(),
            Action::Expression(_) => Channel::Matrix,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_has_no_hug() {
        for kind in [ActionKind::Gesture, ActionKind::Expression] {
            for name in ["hug", "hugging", "Hug"] {
                assert!(Action::resolve(kind, name).is_err());
            }
        }
        assert!(GestureName::ALL.iter().all(|g| !g.as_str().contains("hug")));
    }

    #[test]
    fn names_round_trip_through_strings() {
        for g in GestureName::ALL {
            assert_eq!(g.as_str().parse::<GestureName>().unwrap(), g);
        }
        for e in ExpressionName::ALL {
            assert_eq!(e.as_str().parse::<ExpressionName>().unwrap(), e);
        }
    }

    #[test]
    fn gesture_names_are_not_expressions() {
        assert!(Action::resolve(ActionKind::Expression, "nod").is_err());
        assert!(Action::resolve(ActionKind::Gesture, "happy").is_err());
    }
}
