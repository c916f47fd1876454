use serde::{Deserialize, Serialize};

const EXCERPT_CHARS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    PositiveFeedback,
    TopicRedirect,
    SentenceLimit,
    CharLimit,
    TruncatedEllipsis,
    Reinforcement,
    ReinforcementSuppressed,
}

impl RuleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::PositiveFeedback => "positive_feedback",
            RuleId::TopicRedirect => "topic_redirect",
            RuleId::SentenceLimit => "sentence_limit",
            RuleId::CharLimit => "char_limit",
            RuleId::TruncatedEllipsis => "truncated_ellipsis",
            RuleId::Reinforcement => "reinforcement",
            RuleId::ReinforcementSuppressed => "reinforcement_suppressed",
        }
    }
}

/// One rule firing: which rule, what it saw, what it did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub rule: RuleId,
    pub excerpt: String,
    pub action: String,
}

impl AuditEntry {
    pub fn new(rule: RuleId, input: &str, action: String) -> Self {
        AuditEntry {
            rule,
            excerpt: excerpt(input),
            action,
        }
    }
}

/// At most 60 characters of `text`, marked with `…` when cut.
pub fn excerpt(text: &str) -> String {
    let mut chars = text.chars();
    let head: String = chars.by_ref().take(EXCERPT_CHARS).collect();
    if chars.next().is_some() {
        head + "…"
    } else {
        head
    }
}

/// Append-only audit trail of one turn.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GuardrailAudit {
    entries: Vec<AuditEntry>,
}

impl GuardrailAudit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: AuditEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = AuditEntry>) {
        self.entries.extend(entries);
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, rule: RuleId) -> usize {
        self.entries.iter().filter(|e| e.rule == rule).count()
    }
}

impl From<Vec<AuditEntry>> for GuardrailAudit {
    fn from(entries: Vec<AuditEntry>) -> Self {
        GuardrailAudit { entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excerpts_are_bounded() {
        assert_eq!(excerpt("short"), "short");
        let long = "x".repeat(100);
        assert_eq!(excerpt(&long).chars().count(), 61);
        assert!(excerpt(&long).ends_with('…'));
    }

    #[test]
    fn audit_serializes_as_list() {
        let mut a = GuardrailAudit::new();
        a.push(AuditEntry::new(RuleId::CharLimit, "abc", "cut".into()));
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(
            json,
            r#"[{"rule":"char_limit","excerpt":"abc","action":"cut"}]"#
        );
        assert_eq!(a.count(RuleId::CharLimit), 1);
    }
}
