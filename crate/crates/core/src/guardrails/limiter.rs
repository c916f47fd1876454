use super::audit::{AuditEntry, RuleId};
use super::profile::Profile;
use super::splitter::split_spans;
use crate::text::char_len;

pub const ELLIPSIS: char = '…';

/// Cut `sentence` at a word boundary so that it plus a trailing ellipsis
/// fits in `max_chars`.
pub fn truncate_with_ellipsis(sentence: &str, max_chars: usize) -> String {
    let budget = max_chars.saturating_sub(1);
    let mut cut = 0;
    for (i, c) in sentence.char_indices() {
        if i > 0 && c.is_whitespace() && char_len(&sentence[..i]) <= budget {
            cut = i;
        }
    }
    let mut out = sentence[..cut].trim_end().to_string();
    out.push(ELLIPSIS);
    out
}

/// Keep the longest run of leading sentences within both limits. Text
/// already within limits comes back unchanged.
pub fn limit_text(text: &str, max_sentences: usize, max_chars: usize) -> (String, Vec<AuditEntry>) {
    let spans = split_spans(text);
    if spans.len() <= max_sentences && char_len(text) <= max_chars {
        return (text.to_string(), Vec::new());
    }
    let Some(first) = spans.first() else {
        return (
            String::new(),
            vec![AuditEntry::new(
                RuleId::CharLimit,
                text,
                "dropped blank padding".into(),
            )],
        );
    };
    let start = first.range.start;
    let mut kept = 0;
    let mut stopped_by = RuleId::SentenceLimit;
    for span in &spans {
        if kept == max_sentences {
            break;
        }
        if char_len(&text[start..span.range.end]) > max_chars {
            stopped_by = RuleId::CharLimit;
            break;
        }
        kept += 1;
    }
    if kept == 0 {
        let first = &text[spans[0].range.clone()];
        let out = truncate_with_ellipsis(first, max_chars);
        let action = format!(
            "first sentence cut to {} characters with ellipsis",
            char_len(&out)
        );
        return (
            out,
            vec![AuditEntry::new(RuleId::TruncatedEllipsis, first, action)],
        );
    }
    if kept == spans.len() {
        // Only surrounding whitespace pushed it over.
        let out = text[start..spans[kept - 1].range.end].to_string();
        return (
            out,
            vec![AuditEntry::new(
                RuleId::CharLimit,
                text,
                "trimmed surrounding whitespace".into(),
            )],
        );
    }
    let out = text[start..spans[kept - 1].range.end].to_string();
    let dropped = &text[spans[kept].range.start..];
    let action = format!("kept {kept} of {} sentences", spans.len());
    (out, vec![AuditEntry::new(stopped_by, dropped, action)])
}

pub fn utterance_limiter(text: &str, profile: &Profile) -> (String, Vec<AuditEntry>) {
    limit_text(
        text,
        profile.max_sentences_per_turn as usize,
        profile.max_chars_per_turn as usize,
    )
}
