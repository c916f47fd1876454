use serde::{Deserialize, Serialize};

use super::audit::{AuditEntry, GuardrailAudit, RuleId};
use super::filter::{clean_sentence, filter_text, is_single_sentence, Blocklist, TopicRules};
use super::limiter::{limit_text, truncate_with_ellipsis};
use super::profile::{Profile, ReinforcementPolicy};
use super::prompt::PromptTemplate;
use crate::text::{char_len, normalize_whitespace};

pub const DEFAULT_PRAISE: &str = "Good job!";
pub const DEFAULT_TOPIC_REDIRECT: &str = "Let's talk about something else!";

/// What the turn knows beyond the text itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnContext {
    /// Target behavior the child just completed, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_behavior: Option<String>,
}

impl TurnContext {
    pub fn completed(behavior: impl Into<String>) -> Self {
        TurnContext {
            completed_behavior: Some(behavior.into()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{what} `{text}` must be one terminated sentence free of blocked phrases")]
pub struct GuardConfigError {
    pub what: &'static str,
    pub text: String,
}

/// Guarded text and the rules that fired producing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Guarded {
    pub text: String,
    pub audit: GuardrailAudit,
}

/// The composed guard: filter, then limiter, then reinforcement.
#[derive(Debug, Clone)]
pub struct Guardrails {
    blocklist: Blocklist,
    template: PromptTemplate,
    praise: String,
    redirect: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Praise {
    Off,
    On,
    NoRoom,
}

impl Default for Guardrails {
    fn default() -> Self {
        Guardrails::new(Blocklist::default(), PromptTemplate::default())
    }
}

impl Guardrails {
    pub fn new(blocklist: Blocklist, template: PromptTemplate) -> Self {
        Guardrails {
            blocklist,
            template,
            praise: DEFAULT_PRAISE.into(),
            redirect: DEFAULT_TOPIC_REDIRECT.into(),
        }
    }

    pub fn with_praise(mut self, praise: &str) -> Result<Self, GuardConfigError> {
        self.praise = self.checked("praise phrase", praise)?;
        Ok(self)
    }

    pub fn with_topic_redirect(mut self, redirect: &str) -> Result<Self, GuardConfigError> {
        self.redirect = self.checked("topic redirect", redirect)?;
        Ok(self)
    }

    fn checked(&self, what: &'static str, text: &str) -> Result<String, GuardConfigError> {
        let text = normalize_whitespace(text);
        if !is_single_sentence(&text) || !self.blocklist.hits(&text).is_empty() {
            return Err(GuardConfigError { what, text });
        }
        Ok(text)
    }

    pub fn blocklist(&self) -> &Blocklist {
        &self.blocklist
    }

    pub fn praise_phrase(&self) -> &str {
        &self.praise
    }

    pub fn system_prompt(&self, profile: &Profile) -> String {
        self.template.render(profile)
    }

    pub fn topic_rules(&self, profile: &Profile) -> TopicRules {
        TopicRules::new(&profile.blocked_topics, &self.redirect)
    }

    /// Blocklist and topic filter.
    pub fn filter(&self, text: &str, profile: &Profile) -> (String, Vec<AuditEntry>) {
        filter_text(text, &self.blocklist, &self.topic_rules(profile))
    }

    /// Praise prefix for a decorated reply, ignoring limits.
    pub fn decorate(
        &self,
        text: &str,
        profile: &Profile,
        ctx: &TurnContext,
    ) -> (String, Option<AuditEntry>) {
        if !wants_praise(profile, ctx) {
            return (text.to_string(), None);
        }
        let entry = AuditEntry::new(
            RuleId::Reinforcement,
            text,
            format!("prepended `{}`", self.praise),
        );
        let out = if text.is_empty() {
            self.praise.clone()
        } else {
            format!("{} {text}", self.praise)
        };
        (out, Some(entry))
    }

    fn praise_plan(&self, profile: &Profile, ctx: &TurnContext) -> Praise {
        if !wants_praise(profile, ctx) {
            Praise::Off
        } else if profile.max_sentences_per_turn >= 2
            && profile.max_chars_per_turn as usize >= char_len(&self.praise) + 2
        {
            Praise::On
        } else {
            Praise::NoRoom
        }
    }

    /// Sentence and character budget left for the reply body.
    fn body_budget(&self, profile: &Profile, praise: Praise) -> (usize, usize) {
        let (s, c) = (
            profile.max_sentences_per_turn as usize,
            profile.max_chars_per_turn as usize,
        );
        match praise {
            Praise::On => (s - 1, c - char_len(&self.praise) - 1),
            _ => (s, c),
        }
    }

    fn suppressed_entry(&self, ctx: &TurnContext) -> AuditEntry {
        AuditEntry::new(
            RuleId::ReinforcementSuppressed,
            ctx.completed_behavior.as_deref().unwrap_or_default(),
            format!("no room for `{}` within the profile limits", self.praise),
        )
    }

    /// Full-text guarding. The praise phrase counts against the limits: the
    /// body budget shrinks to make room, or the praise is skipped.
    pub fn apply(&self, text: &str, profile: &Profile, ctx: &TurnContext) -> Guarded {
        let mut audit = GuardrailAudit::new();
        let (filtered, entries) = self.filter(text, profile);
        let filtered = if entries.is_empty() {
            filtered
        } else {
            normalize_whitespace(&filtered)
        };
        audit.extend(entries);
        let praise = self.praise_plan(profile, ctx);
        let (max_s, max_c) = self.body_budget(profile, praise);
        let (limited, entries) = limit_text(&filtered, max_s, max_c);
        audit.extend(entries);
        let text = match praise {
            Praise::On => {
                let (out, entry) = self.decorate(&limited, profile, ctx);
                audit.extend(entry);
                out
            }
            Praise::NoRoom => {
                audit.push(self.suppressed_entry(ctx));
                limited
            }
            Praise::Off => limited,
        };
        Guarded { text, audit }
    }

    /// Sentence-at-a-time guard for streamed replies.
    pub fn incremental<'a>(&'a self, profile: &Profile, ctx: &TurnContext) -> IncrementalGuard<'a> {
        let praise = self.praise_plan(profile, ctx);
        let (max_sentences, max_chars) = self.body_budget(profile, praise);
        let mut audit = GuardrailAudit::new();
        if praise == Praise::NoRoom {
            audit.push(self.suppressed_entry(ctx));
        }
        IncrementalGuard {
            guard: self,
            topics: self.topic_rules(profile),
            praise: (praise == Praise::On).then(|| {
                AuditEntry::new(
                    RuleId::Reinforcement,
                    "",
                    format!("prepended `{}`", self.praise),
                )
            }),
            max_sentences,
            max_chars,
            sentences: 0,
            chars: 0,
            stopped: false,
            audit,
        }
    }
}

fn wants_praise(profile: &Profile, ctx: &TurnContext) -> bool {
    profile.reinforcement_policy == ReinforcementPolicy::Immediate
        && ctx.completed_behavior.is_some()
}

/// Outcome of offering one completed sentence to an [`IncrementalGuard`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admit {
    /// Speak these sentences; more may follow.
    Continue(Vec<String>),
    /// Speak these sentences, then stop generating.
    Last(Vec<String>),
}

impl Admit {
    pub fn sentences(&self) -> &[String] {
        match self {
            Admit::Continue(s) | Admit::Last(s) => s,
        }
    }

    pub fn is_last(&self) -> bool {
        matches!(self, Admit::Last(_))
    }
}

/// Applies the composed guard one sentence at a time. Feeding it the
/// sentences of a whitespace-normalized reply yields exactly the sentences
/// of [`Guardrails::apply`] on that reply.
#[derive(Debug)]
pub struct IncrementalGuard<'a> {
    guard: &'a Guardrails,
    topics: TopicRules,
    praise: Option<AuditEntry>,
    max_sentences: usize,
    max_chars: usize,
    sentences: usize,
    chars: usize,
    stopped: bool,
    audit: GuardrailAudit,
}

impl IncrementalGuard<'_> {
    fn with_praise(&mut self, mut out: Vec<String>) -> Vec<String> {
        if let Some(entry) = self.praise.take() {
            out.insert(0, self.guard.praise.clone());
            self.audit.push(entry);
        }
        out
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Offer the next completed sentence of the reply.
    pub fn push(&mut self, sentence: &str) -> Admit {
        if self.stopped {
            return Admit::Last(Vec::new());
        }
        let sentence = normalize_whitespace(sentence);
        if sentence.is_empty() {
            return Admit::Continue(Vec::new());
        }
        let mut entries = Vec::new();
        let cleaned = clean_sentence(&sentence, &self.guard.blocklist, &self.topics, &mut entries);
        self.audit.extend(entries);
        let Some(cleaned) = cleaned else {
            return Admit::Continue(Vec::new());
        };
        let len = char_len(&cleaned);
        let added = if self.sentences == 0 { len } else { len + 1 };
        if self.sentences == self.max_sentences {
            self.stop(RuleId::SentenceLimit, &cleaned);
            return Admit::Last(Vec::new());
        }
        if self.chars + added > self.max_chars {
            if self.sentences == 0 {
                let cut = truncate_with_ellipsis(&cleaned, self.max_chars);
                let action = format!(
                    "first sentence cut to {} characters with ellipsis",
                    char_len(&cut)
                );
                self.audit
                    .push(AuditEntry::new(RuleId::TruncatedEllipsis, &cleaned, action));
                self.stopped = true;
                return Admit::Last(self.with_praise(vec![cut]));
            }
            self.stop(RuleId::CharLimit, &cleaned);
            return Admit::Last(Vec::new());
        }
        self.sentences += 1;
        self.chars += added;
        Admit::Continue(self.with_praise(vec![cleaned]))
    }

    fn stop(&mut self, rule: RuleId, sentence: &str) {
        self.stopped = true;
        let action = format!("stopped after {} sentences", self.sentences);
        self.audit.push(AuditEntry::new(rule, sentence, action));
    }

    /// End of reply; returns any sentence still owed (a lone praise phrase).
    pub fn finish(&mut self) -> Vec<String> {
        self.stopped = true;
        self.with_praise(Vec::new())
    }

    pub fn audit(&self) -> &GuardrailAudit {
        &self.audit
    }

    pub fn into_audit(self) -> GuardrailAudit {
        self.audit
    }
}
