//! Deterministic sentence splitter.
//!
//! A sentence ends at a run of terminators (`.`, `!`, `?`, `…`, or the
//! ideographic full stop `。`), optionally followed by closing quotes or
//! brackets, when the next character is whitespace or the end of the text.
//! The ideographic stop needs no following space. A lone `.` after a known
//! abbreviation does not end a sentence.

use std::ops::Range;

const TERMINATORS: [char; 6] = ['.', '!', '?', '…', '。', '．'];
const CLOSERS: [char; 6] = ['"', '\'', '”', '’', ')', ']'];
const ABBREVIATIONS: [&str; 9] = ["mr", "mrs", "ms", "dr", "prof", "st", "vs", "e.g", "i.e"];

pub fn is_terminator(c: char) -> bool {
    TERMINATORS.contains(&c)
}

/// A sentence's byte range and whether it closed with a terminator (as
/// opposed to running into the end of the text).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub range: Range<usize>,
    pub terminated: bool,
}

pub fn split_spans(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(pos);
        }
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && is_terminator(chars[i].1) {
            i += 1;
        }
        let run_end = i;
        while i < chars.len() && CLOSERS.contains(&chars[i].1) {
            i += 1;
        }
        let end = chars.get(i).map_or(text.len(), |&(p, _)| p);
        let next_is_break = chars.get(i).is_none_or(|&(_, n)| n.is_whitespace());
        let ideographic = chars[run_start..run_end]
            .iter()
            .any(|&(_, t)| t == '。' || t == '．');
        let single_dot = run_end - run_start == 1 && chars[run_start].1 == '.';
        let boundary = (next_is_break || ideographic)
            && !(single_dot && follows_abbreviation(text, chars[run_start].0));
        if boundary {
            out.push(SentenceSpan {
                range: start.take().unwrap()..end,
                terminated: true,
            });
        }
    }
    if let Some(s) = start {
        let end = s + text[s..].trim_end().len();
        out.push(SentenceSpan {
            range: s..end,
            terminated: false,
        });
    }
    out
}

fn follows_abbreviation(text: &str, dot: usize) -> bool {
    let word_start = text[..dot]
        .rfind(char::is_whitespace)
        .map_or(0, |p| p + text[p..].chars().next().unwrap().len_utf8());
    let word = text[word_start..dot]
        .trim_start_matches(['"', '\'', '(', '“', '‘'])
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Byte ranges of each sentence, trimmed of surrounding whitespace.
pub fn split_sentences(text: &str) -> Vec<Range<usize>> {
    split_spans(text).into_iter().map(|s| s.range).collect()
}

/// Sentence slices of `text`.
pub fn sentences(text: &str) -> Vec<&str> {
    split_sentences(text)
        .into_iter()
        .map(|r| &text[r])
        .collect()
}

pub fn sentence_count(text: &str) -> usize {
    split_spans(text).len()
}
