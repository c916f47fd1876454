use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::protocol::ExpressionName;
use crate::text::{phrase_regex, tsv_rows};

const DEFAULT_RULES: &str = include_str!("../../assets/affect_rules.tsv");

/// Coarse affect of a piece of robot speech.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectTag {
    Positive,
    Negative,
    Surprise,
    Question,
    Praise,
    Calm,
    Neutral,
}

impl AffectTag {
    pub const ALL: [AffectTag; 7] = [
        AffectTag::Positive,
        AffectTag::Negative,
        AffectTag::Surprise,
        AffectTag::Question,
        AffectTag::Praise,
        AffectTag::Calm,
        AffectTag::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AffectTag::Positive => "positive",
            AffectTag::Negative => "negative",
            AffectTag::Surprise => "surprise",
            AffectTag::Question => "question",
            AffectTag::Praise => "praise",
            AffectTag::Calm => "calm",
            AffectTag::Neutral => "neutral",
        }
    }
}

impl fmt::Display for AffectTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AffectTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AffectTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown affect tag `{s}`"))
    }
}

/// Face shown for each affect.
pub fn expression_for_affect(tag: AffectTag) -> ExpressionName {
    match tag {
        AffectTag::Praise => ExpressionName::Encouraging,
        AffectTag::Positive => ExpressionName::Happy,
        AffectTag::Negative => ExpressionName::Sad,
        AffectTag::Surprise => ExpressionName::Surprised,
        AffectTag::Question => ExpressionName::Curious,
        AffectTag::Calm => ExpressionName::Sleepy,
        AffectTag::Neutral => ExpressionName::Neutral,
    }
}

/// Anything that can tag robot speech with an affect.
pub trait AffectClassifier: Send + Sync {
    fn classify(&self, text: &str) -> AffectTag;
}

#[derive(Debug, thiserror::Error)]
#[error("affect rules line {line}: {reason}")]
pub struct RuleTableError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
enum Matcher {
    Keyword(Regex),
    Suffix(String),
}

/// Ordered first-match rule table loaded from a TSV file.
#[derive(Debug, Clone)]
pub struct RuleClassifier {
    rules: Vec<(AffectTag, Matcher)>,
}

impl RuleClassifier {
    pub fn parse(table: &str) -> Result<Self, RuleTableError> {
        let mut rules = Vec::new();
        for (line, cols) in tsv_rows(table) {
            let err = |reason: String| RuleTableError { line, reason };
            let [tag, kind, pattern] = cols[..] else {
                return Err(err(format!("expected 3 columns, found {}", cols.len())));
            };
            let tag: AffectTag = tag.parse().map_err(err)?;
            if pattern.trim().is_empty() {
                return Err(err("empty pattern".into()));
            }
            let matcher = match kind {
                "keyword" => {
                    Matcher::Keyword(phrase_regex(pattern).map_err(|e| err(e.to_string()))?)
                }
                "suffix" => Matcher::Suffix(pattern.to_string()),
                other => return Err(err(format!("unknown match kind `{other}`"))),
            };
            rules.push((tag, matcher));
        }
        Ok(RuleClassifier { rules })
    }
}

impl Default for RuleClassifier {
    fn default() -> Self {
        RuleClassifier::parse(DEFAULT_RULES).expect("bundled affect rules parse")
    }
}

impl AffectClassifier for RuleClassifier {
    fn classify(&self, text: &str) -> AffectTag {
        let trimmed = text.trim().trim_end_matches(['"', '\'', '”', '’', ')']);
        self.rules
            .iter()
            .find(|(_, m)| match m {
                Matcher::Keyword(re) => re.is_match(text),
                Matcher::Suffix(s) => trimmed.ends_with(s.as_str()),
            })
            .map_or(AffectTag::Neutral, |(tag, _)| *tag)
    }
}

/// Classify with the bundled rule table.
pub fn classify_affect(text: &str) -> AffectTag {
    thread_local! {
        static RULES: RuleClassifier = RuleClassifier::default();
    }
    RULES.with(|r| r.classify(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_rule_goldens() {
        let cases = [
            ("Good job! I am proud of you.", AffectTag::Praise),
            ("", AffectTag::Neutral),
            ("What is that?", AffectTag::Question),
            ("Wow, a rainbow!", AffectTag::Surprise),
            ("Oh no, the tower fell.", AffectTag::Negative),
            ("I am happy to see you.", AffectTag::Positive),
            ("Let's breathe slowly together.", AffectTag::Calm),
            ("The bus is blue.", AffectTag::Neutral),
            ("Are you happy?", AffectTag::Question),
        ];
        for (text, tag) in cases {
            assert_eq!(classify_affect(text), tag, "{text:?}");
        }
    }

    #[test]
    fn mapping_table() {
        let expected = [
            (AffectTag::Praise, ExpressionName::Encouraging),
            (AffectTag::Positive, ExpressionName::Happy),
            (AffectTag::Negative, ExpressionName::Sad),
            (AffectTag::Surprise, ExpressionName::Surprised),
            (AffectTag::Question, ExpressionName::Curious),
            (AffectTag::Calm, ExpressionName::Sleepy),
            (AffectTag::Neutral, ExpressionName::Neutral),
        ];
        for (tag, face) in expected {
            assert_eq!(expression_for_affect(tag), face);
        }
    }

    #[test]
    fn malformed_tables_report_the_line() {
        let err = RuleClassifier::parse("# c\npraise\tkeyword\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(RuleClassifier::parse("joy\tkeyword\tyay").is_err());
        assert!(RuleClassifier::parse("calm\tregex\tzz").is_err());
    }
}
