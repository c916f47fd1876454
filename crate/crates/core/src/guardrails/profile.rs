use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::emotion_gesture::AffectTag;
use crate::protocol::GestureName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "5-7")]
    FiveToSeven,
    #[serde(rename = "8-10")]
    EightToTen,
    #[serde(rename = "11-13")]
    ElevenToThirteen,
}

impl AgeBand {
    pub fn label(self) -> &'static str {
        match self {
            AgeBand::FiveToSeven => "5-7",
            AgeBand::EightToTen => "8-10",
            AgeBand::ElevenToThirteen => "11-13",
        }
    }

    /// Repo default (sentences, characters) per turn for the band.
    pub fn default_limits(self) -> (u32, u32) {
        match self {
            AgeBand::FiveToSeven => (2, 140),
            AgeBand::EightToTen => (3, 220),
            AgeBand::ElevenToThirteen => (4, 320),
        }
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReinforcementPolicy {
    /// Praise right after a completed target behavior.
    Immediate,
    /// Let reinforcement emerge from the conversation; never inject praise.
    #[default]
    Natural,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    #[default]
    En,
    Ko,
}

/// A behavior the caregiver wants to encourage and the gesture the robot
/// should model when the matching affect comes up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetBehavior {
    pub behavior: String,
    pub preferred_gesture: String,
    #[serde(default = "default_cue")]
    pub cue: AffectTag,
}

fn default_cue() -> AffectTag {
    AffectTag::Praise
}

fn default_retention_days() -> u32 {
    90
}

/// Caregiver-editable settings governing one child's interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub profile_id: String,
    pub child_age_band: AgeBand,
    pub max_sentences_per_turn: u32,
    pub max_chars_per_turn: u32,
    #[serde(default)]
    pub allowed_topics: Vec<String>,
    #[serde(default)]
    pub blocked_topics: Vec<String>,
    #[serde(default)]
    pub target_behaviors: Vec<TargetBehavior>,
    #[serde(default)]
    pub reinforcement_policy: ReinforcementPolicy,
    #[serde(default)]
    pub appearance_variant: String,
    #[serde(default)]
    pub language: Language,
    #[serde(default)]
    pub voice_id: String,
    #[serde(default = "default_retention_days")]
    pub retention_days: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid profile: {}", .issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect::<Vec<_>>().join("; "))]
pub struct ProfileValidationError {
    pub issues: Vec<FieldIssue>,
}

impl ProfileValidationError {
    pub fn fields(&self) -> Vec<String> {
        self.issues.iter().map(|i| i.field.clone()).collect()
    }
}

fn topic_key(topic: &str) -> String {
    crate::text::normalize_whitespace(topic).to_lowercase()
}

impl Profile {
    /// A profile with the band's default limits and no customisation.
    pub fn new(profile_id: impl Into<String>, band: AgeBand) -> Self {
        let (sentences, chars) = band.default_limits();
        Profile {
            profile_id: profile_id.into(),
            child_age_band: band,
            max_sentences_per_turn: sentences,
            max_chars_per_turn: chars,
            allowed_topics: Vec::new(),
            blocked_topics: Vec::new(),
            target_behaviors: Vec::new(),
            reinforcement_policy: ReinforcementPolicy::Natural,
            appearance_variant: "classic".into(),
            language: Language::En,
            voice_id: "default".into(),
            retention_days: default_retention_days(),
        }
    }

    /// The profile every gateway starts with.
    pub fn default_profile() -> Self {
        Self::new("default", AgeBand::EightToTen)
    }

    pub fn validate(&self) -> Result<(), ProfileValidationError> {
        let mut issues = Vec::new();
        let mut issue = |field: &str, message: String| {
            issues.push(FieldIssue {
                field: field.into(),
                message,
            })
        };

        if self.profile_id.is_empty()
            || !self
                .profile_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            issue(
                "profile_id",
                "must be non-empty ASCII letters, digits, '-' or '_'".into(),
            );
        }
        if self.max_sentences_per_turn < 1 {
            issue("max_sentences_per_turn", "must be at least 1".into());
        }
        if self.max_chars_per_turn < 1 {
            issue("max_chars_per_turn", "must be at least 1".into());
        }
        if self.retention_days < 1 {
            issue("retention_days", "must be at least 1".into());
        }
        for (field, topics) in [
            ("allowed_topics", &self.allowed_topics),
            ("blocked_topics", &self.blocked_topics),
        ] {
            if topics.iter().any(|t| t.trim().is_empty()) {
                issue(field, "topics must not be blank".into());
            }
        }
        let allowed: HashSet<String> = self.allowed_topics.iter().map(|t| topic_key(t)).collect();
        let overlap: Vec<&str> = self
            .blocked_topics
            .iter()
            .filter(|t| allowed.contains(&topic_key(t)))
            .map(String::as_str)
            .collect();
        if !overlap.is_empty() {
            let message = format!("both allowed and blocked: {}", overlap.join(", "));
            issue("allowed_topics", message.clone());
            issue("blocked_topics", message);
        }
        for (i, b) in self.target_behaviors.iter().enumerate() {
            if b.behavior.trim().is_empty() {
                issue(
                    &format!("target_behaviors[{i}].behavior"),
                    "must not be blank".into(),
                );
            }
            if b.preferred_gesture.parse::<GestureName>().is_err() {
                issue(
                    &format!("target_behaviors[{i}].preferred_gesture"),
                    format!("`{}` is not a registered gesture", b.preferred_gesture),
                );
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ProfileValidationError { issues })
        }
    }

    /// Gesture preferred for an affect cue, if the caregiver set one.
    pub fn preferred_gesture(&self, cue: AffectTag) -> Option<&str> {
        self.target_behaviors
            .iter()
            .find(|b| b.cue == cue)
            .map(|b| b.preferred_gesture.as_str())
    }
}
