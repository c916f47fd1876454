//! Deterministic transformations that keep replies child-appropriate:
//! positive rewording, topic control, length limits and reinforcement.

mod audit;
mod filter;
mod guard;
mod limiter;
mod profile;
mod prompt;
pub mod splitter;

pub use audit::{excerpt, AuditEntry, GuardrailAudit, RuleId};
pub use filter::{filter_text, positive_feedback_filter, Blocklist, BlocklistError, TopicRules};
pub use guard::{
    Admit, GuardConfigError, Guarded, Guardrails, IncrementalGuard, TurnContext, DEFAULT_PRAISE,
    DEFAULT_TOPIC_REDIRECT,
};
pub use limiter::{limit_text, truncate_with_ellipsis, utterance_limiter, ELLIPSIS};
pub use profile::{
    AgeBand, FieldIssue, Language, Profile, ProfileValidationError, ReinforcementPolicy,
    TargetBehavior,
};
pub use prompt::{assemble_system_prompt, PromptTemplate, TemplateError};

/// Prepend the default praise phrase when the profile and turn call for it.
pub fn reinforcement_decorator(text: &str, profile: &Profile, ctx: &TurnContext) -> String {
    Guardrails::default().decorate(text, profile, ctx).0
}
