use companion_core::guardrails::splitter::{sentence_count, sentences};
use companion_core::guardrails::{
    AgeBand, Guardrails, Profile, ReinforcementPolicy, TargetBehavior, TurnContext,
};
use companion_core::text::{char_len, normalize_whitespace, phrase_regex};
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "you",
    "can",
    "build",
    "a",
    "tower",
    "blocks",
    "red",
    "dinosaurs",
    "monsters",
    "wrong",
    "WRONG",
    "Wrong",
    "can't",
    "can’t",
    "never",
    "not",
    "good",
    "enough",
    "bad",
    "job",
    "give",
    "up",
    "stupid",
    "hopeless",
    "failed",
    "Dr.",
    "e.g.",
    "3.5",
    "\"great\"",
    "(really)",
    "틀렸어",
    "바보",
    "같이",
    "scary",
    "movies",
    "play",
    "count",
    "nice",
    "wow",
    "…",
    "wrongly",
];
const PHRASES: &[&str] = &[
    "you can't",
    "You Can’t",
    "not good enough",
    "bad job",
    "you never",
    "give up",
    "no good",
    "You failed",
    "scary movies",
    "Dinosaurs",
];
const TERMINATORS: &[&str] = &[".", "!", "?", "…", "。", "!?", ""];
const TOPICS: &[&str] = &["dinosaurs", "scary movies", "monsters", "trains"];

fn sentence() -> impl Strategy<Value = String> {
    (
        proptest::collection::vec(prop_oneof![4 => proptest::sample::select(WORDS), 1 => proptest::sample::select(PHRASES)], 1..10),
        proptest::sample::select(TERMINATORS),
    )
        .prop_map(|(words, term)| format!("{}{term}", words.join(" ")))
}

fn corpus_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        (
            sentence(),
            proptest::sample::select(&[" ", "  ", "\n", " \t "][..]),
        ),
        0..8,
    )
    .prop_map(|parts| {
        parts
            .into_iter()
            .map(|(s, sep)| format!("{s}{sep}"))
            .collect::<String>()
    })
}

fn profile() -> impl Strategy<Value = (Profile, TurnContext)> {
    (
        1u32..6,
        1u32..320,
        proptest::sample::subsequence(TOPICS, 0..=TOPICS.len()),
        any::<bool>(),
        proptest::option::of(proptest::sample::select(&["counting", "sharing"][..])),
    )
        .prop_map(|(max_s, max_c, blocked, immediate, done)| {
            let mut p = Profile::new("p", AgeBand::EightToTen);
            p.max_sentences_per_turn = max_s;
            p.max_chars_per_turn = max_c;
            p.blocked_topics = blocked.into_iter().map(String::from).collect();
            p.target_behaviors = vec![TargetBehavior {
                behavior: "counting".into(),
                preferred_gesture: "nod".into(),
                cue: companion_core::emotion_gesture::AffectTag::Praise,
            }];
            if immediate {
                p.reinforcement_policy = ReinforcementPolicy::Immediate;
            }
            let ctx = done.map(TurnContext::completed).unwrap_or_default();
            (p, ctx)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn composed_output_is_safe_and_within_limits(text in corpus_text(), (profile, ctx) in profile()) {
        let guard = Guardrails::default();
        let out = guard.apply(&text, &profile, &ctx);
        prop_assert!(guard.blocklist().hits(&out.text).is_empty(), "blocklisted phrase survived: {:?}", out.text);
        for topic in &profile.blocked_topics {
            prop_assert!(!phrase_regex(topic).unwrap().is_match(&out.text), "blocked topic {topic:?} in {:?}", out.text);
        }
        prop_assert!(sentence_count(&out.text) <= profile.max_sentences_per_turn as usize, "{:?}", out.text);
        prop_assert!(char_len(&out.text) <= profile.max_chars_per_turn as usize, "{:?}", out.text);
        if out.text != text {
            prop_assert!(!out.audit.is_empty(), "changed without an audit entry");
        }
    }

    #[test]
    fn filter_is_idempotent(text in corpus_text(), (profile, _ctx) in profile()) {
        let guard = Guardrails::default();
        let (once, _) = guard.filter(&text, &profile);
        let (twice, audit) = guard.filter(&once, &profile);
        prop_assert_eq!(&twice, &once);
        prop_assert!(audit.is_empty());
    }

    #[test]
    fn incremental_guard_matches_batch(text in corpus_text(), (profile, ctx) in profile()) {
        let guard = Guardrails::default();
        let text = normalize_whitespace(&text);
        let batch = guard.apply(&text, &profile, &ctx).text;
        let mut inc = guard.incremental(&profile, &ctx);
        let mut out = Vec::new();
        for s in sentences(&text) {
            let admit = inc.push(s);
            out.extend(admit.sentences().iter().cloned());
            if admit.is_last() {
                break;
            }
        }
        out.extend(inc.finish());
        prop_assert_eq!(out.join(" "), batch);
    }
}
