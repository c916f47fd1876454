use std::path::Path;

use super::profile::{Language, Profile, ReinforcementPolicy};

const DEFAULT_TEMPLATE: &str = include_str!("../../assets/prompt_template.txt");

const PLACEHOLDERS: [&str; 8] = [
    "age_band",
    "max_sentences",
    "max_chars",
    "language_clause",
    "topics_clause",
    "blocked_clause",
    "behaviors_clause",
    "reinforcement_clause",
];

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template line {line}: unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { line: usize, name: String },
    #[error("template line {line}: unclosed `{{`")]
    Unclosed { line: usize },
    #[error("template renders an empty prompt")]
    Empty,
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(&'static str),
}

/// System-prompt template with `{name}` placeholders. A line that holds
/// only placeholders and renders empty is dropped.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    lines: Vec<Vec<Piece>>,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let mut pieces = Vec::new();
            let mut rest = raw.trim_end_matches('\r');
            while let Some(open) = rest.find('{') {
                if open > 0 {
                    pieces.push(Piece::Text(rest[..open].to_string()));
                }
                let close = rest[open..]
                    .find('}')
                    .ok_or(TemplateError::Unclosed { line })?
                    + open;
                let name = &rest[open + 1..close];
                let slot = PLACEHOLDERS
                    .into_iter()
                    .find(|p| *p == name)
                    .ok_or_else(|| TemplateError::UnknownPlaceholder {
                        line,
                        name: name.to_string(),
                    })?;
                pieces.push(Piece::Slot(slot));
                rest = &rest[close + 1..];
            }
            if !rest.is_empty() {
                pieces.push(Piece::Text(rest.to_string()));
            }
            lines.push(pieces);
        }
        if lines.iter().all(|l| l.is_empty()) {
            return Err(TemplateError::Empty);
        }
        Ok(PromptTemplate { lines })
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn render(&self, profile: &Profile) -> String {
        let mut out = String::new();
        for pieces in &self.lines {
            let only_slots =
                !pieces.is_empty() && pieces.iter().all(|p| matches!(p, Piece::Slot(_)));
            let line: String = pieces
                .iter()
                .map(|p| match p {
                    Piece::Text(t) => t.clone(),
                    Piece::Slot(name) => slot_value(name, profile),
                })
                .collect();
            if only_slots && line.trim().is_empty() {
                continue;
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

fn list(items: &[String]) -> String {
    items
        .iter()
        .map(|s| s.trim())
        .collect::<Vec<_>>()
        .join(", ")
}

fn slot_value(name: &str, p: &Profile) -> String {
    match name {
        "age_band" => p.child_age_band.label().to_string(),
        "max_sentences" => p.max_sentences_per_turn.to_string(),
        "max_chars" => p.max_chars_per_turn.to_string(),
        "language_clause" => match p.language {
            Language::En => "Reply in English.".into(),
            Language::Ko => "Reply in Korean.".into(),
        },
        "topics_clause" if p.allowed_topics.is_empty() => "Follow the child's interests.".into(),
        "topics_clause" => format!("Good topics to talk about: {}.", list(&p.allowed_topics)),
        "blocked_clause" if p.blocked_topics.is_empty() => String::new(),
        "blocked_clause" => format!(
            "Never talk about: {}. If the child brings one up, gently change the subject.",
            list(&p.blocked_topics)
        ),
        "behaviors_clause" if p.target_behaviors.is_empty() => String::new(),
        "behaviors_clause" => {
            let names: Vec<String> = p
                .target_behaviors
                .iter()
                .map(|b| b.behavior.clone())
                .collect();
            format!("Gently invite the child to practice: {}.", list(&names))
        }
        "reinforcement_clause" => match p.reinforcement_policy {
            ReinforcementPolicy::Immediate => {
                "When the child does one of these behaviors, praise it right away.".into()
            }
            ReinforcementPolicy::Natural => {
                "Let encouragement come up naturally in the conversation.".into()
            }
        },
        _ => unreachable!("placeholders are checked at parse time"),
    }
}

/// Prompt for `profile` from the bundled template.
pub fn assemble_system_prompt(profile: &Profile) -> String {
    PromptTemplate::default().render(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guardrails::AgeBand;

    #[test]
    fn default_prompt_has_positivity_and_age() {
        let prompt = assemble_system_prompt(&Profile::default_profile());
        assert!(prompt.contains("Always be positive and encouraging."));
        assert!(prompt.contains("aged 8-10"));
        assert_eq!(prompt, assemble_system_prompt(&Profile::default_profile()));
    }

    #[test]
    fn age_band_only_changes_the_age_line() {
        let a = Profile::default_profile();
        let mut b = a.clone();
        b.child_age_band = AgeBand::FiveToSeven;
        let (pa, pb) = (assemble_system_prompt(&a), assemble_system_prompt(&b));
        let diff: Vec<(&str, &str)> = pa.lines().zip(pb.lines()).filter(|(x, y)| x != y).collect();
        assert_eq!(
            diff,
            [(
                "You are talking with a child aged 8-10.",
                "You are talking with a child aged 5-7."
            )]
        );
        assert_eq!(pa.lines().count(), pb.lines().count());
    }

    #[test]
    fn bad_templates() {
        assert!(matches!(
            PromptTemplate::parse("hi {nope}"),
            Err(TemplateError::UnknownPlaceholder { line: 1, .. })
        ));
        assert!(matches!(
            PromptTemplate::parse("x\n{age_band"),
            Err(TemplateError::Unclosed { line: 2 })
        ));
        assert!(matches!(
            PromptTemplate::parse(""),
            Err(TemplateError::Empty)
        ));
    }
}
