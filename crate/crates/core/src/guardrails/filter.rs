use std::path::Path;

use regex::Regex;

use super::audit::{AuditEntry, RuleId};
use super::splitter::{is_terminator, split_spans};
use crate::text::{phrase_regex, tsv_rows};

const DEFAULT_TABLE: &str = include_str!("../../assets/blocklist.tsv");

#[derive(Debug, thiserror::Error)]
pub enum BlocklistError {
    #[error("blocklist line {line}: {reason}")]
    Row { line: usize, reason: String },
    #[error("reading blocklist {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
struct Entry {
    phrase: String,
    matcher: Regex,
    rewrite: String,
}

/// Discouraging phrases and the encouraging sentence each is replaced with.
#[derive(Debug, Clone)]
pub struct Blocklist {
    entries: Vec<Entry>,
}

/// True when `text` is exactly one sentence closed by a terminator.
pub(crate) fn is_single_sentence(text: &str) -> bool {
    let spans = split_spans(text);
    spans.len() == 1 && spans[0].terminated && spans[0].range == (0..text.len())
}

impl Blocklist {
    pub fn parse(table: &str) -> Result<Self, BlocklistError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (line, cols) in tsv_rows(table) {
            let err = |reason: String| BlocklistError::Row { line, reason };
            let [phrase, rewrite] = cols[..] else {
                return Err(err(format!("expected 2 columns, found {}", cols.len())));
            };
            let (phrase, rewrite) = (phrase.trim(), rewrite.trim());
            if phrase.is_empty() || phrase.chars().any(is_terminator) {
                return Err(err(
                    "phrase must be non-empty and free of sentence terminators".into(),
                ));
            }
            if !is_single_sentence(rewrite) {
                return Err(err(format!(
                    "rewrite `{rewrite}` must be a single terminated sentence"
                )));
            }
            if entries
                .iter()
                .any(|e| e.phrase.eq_ignore_ascii_case(phrase))
            {
                return Err(err(format!("duplicate phrase `{phrase}`")));
            }
            let matcher = phrase_regex(phrase).map_err(|e| err(e.to_string()))?;
            entries.push(Entry {
                phrase: phrase.to_string(),
                matcher,
                rewrite: rewrite.to_string(),
            });
        }
        let table = Blocklist { entries };
        for (i, e) in table.entries.iter().enumerate() {
            if let Some(hit) = table.first_hit(&e.rewrite) {
                return Err(BlocklistError::Row {
                    line: i + 1,
                    reason: format!(
                        "rewrite `{}` contains blocked phrase `{}`",
                        e.rewrite, hit.phrase
                    ),
                });
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, BlocklistError> {
        let text = std::fs::read_to_string(path).map_err(|source| BlocklistError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    fn first_hit(&self, text: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.matcher.is_match(text))
    }

    /// Every blocked phrase occurring in `text`.
    pub fn hits(&self, text: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.matcher.is_match(text))
            .map(|e| e.phrase.as_str())
            .collect()
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.phrase.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for Blocklist {
    fn default() -> Self {
        Blocklist::parse(DEFAULT_TABLE).expect("bundled blocklist is valid")
    }
}

/// Blocked-topic matchers compiled from a profile.
#[derive(Debug, Clone, Default)]
pub struct TopicRules {
    topics: Vec<(String, Regex)>,
    redirect: String,
}

impl TopicRules {
    pub fn new<S: AsRef<str>>(blocked: &[S], redirect: &str) -> Self {
        let topics = blocked
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| !t.trim().is_empty())
            .filter_map(|t| phrase_regex(t).ok().map(|re| (t.to_string(), re)))
            .collect();
        TopicRules {
            topics,
            redirect: redirect.to_string(),
        }
    }

    fn first_hit(&self, text: &str) -> Option<&str> {
        self.topics
            .iter()
            .find(|(_, re)| re.is_match(text))
            .map(|(t, _)| t.as_str())
    }
}

/// Replace one sentence until no rule fires. A sentence every candidate
/// replacement would still trip is dropped, so the result is always clean.
pub(crate) fn clean_sentence(
    sentence: &str,
    blocklist: &Blocklist,
    topics: &TopicRules,
    audit: &mut Vec<AuditEntry>,
) -> Option<String> {
    let mut current = sentence.to_string();
    // Rewrites are blocklist-clean, so the worst chain is
    // rewrite -> redirect -> give up.
    for _ in 0..3 {
        if let Some(entry) = blocklist.first_hit(&current) {
            audit.push(AuditEntry::new(
                RuleId::PositiveFeedback,
                &current,
                format!("replaced sentence containing `{}`", entry.phrase),
            ));
            current = entry.rewrite.clone();
            continue;
        }
        if let Some(topic) = topics.first_hit(&current) {
            if current == topics.redirect {
                break;
            }
            audit.push(AuditEntry::new(
                RuleId::TopicRedirect,
                &current,
                format!("redirected blocked topic `{topic}`"),
            ));
            current = topics.redirect.clone();
            continue;
        }
        return Some(current);
    }
    audit.push(AuditEntry::new(
        RuleId::TopicRedirect,
        &current,
        "dropped sentence with no safe replacement".into(),
    ));
    None
}

/// Sentence-wise rewrite of `text`: every sentence containing a blocked
/// phrase or topic is replaced in place. Idempotent.
pub fn filter_text(
    text: &str,
    blocklist: &Blocklist,
    topics: &TopicRules,
) -> (String, Vec<AuditEntry>) {
    let mut audit = Vec::new();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for span in split_spans(text) {
        let sentence = &text[span.range.clone()];
        out.push_str(&text[last..span.range.start]);
        last = span.range.end;
        let before = audit.len();
        let cleaned = clean_sentence(sentence, blocklist, topics, &mut audit);
        if audit.len() == before {
            out.push_str(sentence);
            continue;
        }
        if let Some(c) = cleaned {
            out.push_str(&c);
            // Keep the boundary when the original ran straight into the
            // next sentence after an ideographic stop.
            if text[last..].starts_with(|ch: char| !ch.is_whitespace()) {
                out.push(' ');
            }
        }
    }
    out.push_str(&text[last..]);
    (out, audit)
}

/// Blocklist-only filter with the bundled table.
pub fn positive_feedback_filter(text: &str) -> (String, Vec<AuditEntry>) {
    thread_local! {
        static TABLE: Blocklist = Blocklist::default();
    }
    TABLE.with(|t| filter_text(text, t, &TopicRules::default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewrites_whole_sentence() {
        let (out, audit) = positive_feedback_filter("That is wrong.");
        assert_eq!(out, "Let's try that another way!");
        assert_eq!(audit.len(), 1);
        assert_eq!(audit[0].rule, RuleId::PositiveFeedback);
    }

    #[test]
    fn clean_text_passes_through() {
        let (out, audit) = positive_feedback_filter("Great thinking!");
        assert_eq!(out, "Great thinking!");
        assert!(audit.is_empty());
    }

    #[test]
    fn only_offending_sentences_change() {
        let (out, audit) = positive_feedback_filter("Hi there!  That was a BAD job. See you.");
        assert_eq!(out, "Hi there!  Nice effort, let's keep going! See you.");
        assert_eq!(audit.len(), 1);
    }

    #[test]
    fn topics_redirect_and_stay_idempotent() {
        let topics = TopicRules::new(&["dinosaur fights"], "Let's talk about something else!");
        let bl = Blocklist::default();
        let (out, audit) = filter_text("Dinosaur  fights are cool. Trains too.", &bl, &topics);
        assert_eq!(out, "Let's talk about something else! Trains too.");
        assert_eq!(audit[0].rule, RuleId::TopicRedirect);
        assert_eq!(filter_text(&out, &bl, &topics).0, out);
    }

    #[test]
    fn unsafe_redirect_drops_the_sentence() {
        let topics = TopicRules::new(&["else"], "Let's talk about something else!");
        let (out, _) = filter_text("Something else. Fine.", &Blocklist::default(), &topics);
        assert_eq!(out, " Fine.");
    }

    #[test]
    fn rewrite_after_ideographic_stop_keeps_boundary() {
        let (out, _) = positive_feedback_filter("틀렸어。좋아요.");
        assert_eq!(out, "다른 방법으로 해 볼까요? 좋아요.");
        assert_eq!(positive_feedback_filter(&out).0, out);
    }

    #[test]
    fn malformed_tables() {
        assert!(Blocklist::parse("wrong\tBad. Two sentences.").is_err());
        assert!(Blocklist::parse("wrong\tThat is wrong!").is_err());
        assert!(Blocklist::parse("wrong.\tOk!").is_err());
        assert!(Blocklist::parse("wrong\tOk!\nWRONG\tFine!").is_err());
        assert!(Blocklist::parse("only-one-column").is_err());
    }

    #[test]
    fn bundled_table_loads() {
        let bl = Blocklist::default();
        assert!(bl.len() >= 10);
        assert!(bl.phrases().any(|p| p == "you can't"));
    }
}
