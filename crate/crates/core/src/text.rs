//! Small text helpers shared by the rule tables.

use regex::{Regex, RegexBuilder};

/// Case-insensitive whole-word matcher for a phrase; inner spaces match any
/// whitespace run.
pub fn phrase_regex(phrase: &str) -> Result<Regex, regex::Error> {
    let words: Vec<String> = phrase.split_whitespace().map(regex::escape).collect();
    let body = words.join(r"\s+");
    // \b only applies next to word characters; phrases may start or end with
    // punctuation ("you can't!"), so guard each edge separately.
    let lead = if phrase
        .trim_start()
        .starts_with(|c: char| c.is_alphanumeric())
    {
        r"\b"
    } else {
        ""
    };
    let tail = if phrase.trim_end().ends_with(|c: char| c.is_alphanumeric()) {
        r"\b"
    } else {
        ""
    };
    RegexBuilder::new(&format!("{lead}{body}{tail}"))
        .case_insensitive(true)
        .build()
}

/// Collapse every whitespace run to one space and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Iterate non-empty, non-comment lines of a tab-separated table, yielding
/// the 1-based line number and the split columns.
pub fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrases_match_whole_words_only() {
        let re = phrase_regex("bad job").unwrap();
        assert!(re.is_match("That was a BAD  job."));
        assert!(!re.is_match("badjob"));
        assert!(!phrase_regex("wrong").unwrap().is_match("wrongly"));
        assert!(phrase_regex("you can't")
            .unwrap()
            .is_match("No, you can't."));
    }

    #[test]
    fn whitespace_is_collapsed() {
        assert_eq!(normalize_whitespace("  a \n\t b  "), "a b");
    }
}
