use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use companion_core::guardrails::{AgeBand, AuditEntry, GuardrailAudit, Profile, RuleId};
use companion_core::pipeline::{InputKind, StageLatencies, StrategyKind, TurnRecord};
use companion_core::store::{LogQuery, MetricsWindow, Store, StoreError, DAY_MS};
use proptest::prelude::*;

const RULES: [RuleId; 4] = [
    RuleId::PositiveFeedback,
    RuleId::SentenceLimit,
    RuleId::CharLimit,
    RuleId::Reinforcement,
];

fn record(
    session: &str,
    turn_id: u64,
    started_at_ms: u64,
    first_audio: u64,
    kind: StrategyKind,
    rules: &[RuleId],
) -> TurnRecord {
    TurnRecord {
        session_id: session.into(),
        turn_id,
        profile_id: "kid".into(),
        started_at_ms,
        input_kind: InputKind::AacText,
        transcript: format!("turn {turn_id}"),
        raw_response: "Hi!".into(),
        guarded_response: "Hi!".into(),
        segments: Vec::new(),
        latencies: StageLatencies::default(),
        first_audio_latency_ms: first_audio,
        total_ms: first_audio,
        strategy: kind,
        audit: GuardrailAudit::from(
            rules
                .iter()
                .map(|&r| AuditEntry::new(r, "x", "y".into()))
                .collect::<Vec<_>>(),
        ),
        completed_behavior: None,
        failure: first_audio
            .is_multiple_of(7)
            .then(|| "tts_timeout".to_string()),
    }
}

fn store_with_sessions(n: usize) -> (Store, Vec<String>) {
    let store = Store::in_memory();
    store
        .put_profile(Profile::new("kid", AgeBand::FiveToSeven), 0)
        .unwrap();
    let ids = (0..n)
        .map(|_| store.create_session("kid", "bear", 0).unwrap().session_id)
        .collect();
    (store, ids)
}

/// Nearest-rank percentile computed from first principles.
fn rank(values: &[u64], p: u64) -> u64 {
    let mut v = values.to_vec();
    v.sort();
    if v.is_empty() {
        return 0;
    }
    let r = ((p * v.len() as u64) as f64 / 100.0).ceil().max(1.0) as usize;
    v[r - 1]
}

#[test]
fn first_turn_is_the_whole_log_and_duplicates_change_nothing() {
    let (store, ids) = store_with_sessions(1);
    let r = record(&ids[0], 0, 10, 4500, StrategyKind::Segmented, &[]);
    store.append_turn(&r).unwrap();
    assert_eq!(
        store
            .query_log(&ids[0], &LogQuery::default())
            .unwrap()
            .records,
        vec![r.clone()]
    );
    let dup = store.append_turn(&record(&ids[0], 0, 11, 1, StrategyKind::Monolithic, &[]));
    assert!(matches!(
        dup,
        Err(StoreError::DuplicateTurn { turn_id: 0, .. })
    ));
    assert_eq!(
        store
            .query_log(&ids[0], &LogQuery::default())
            .unwrap()
            .records,
        vec![r]
    );
    assert!(matches!(
        store.query_log("s99", &LogQuery::default()),
        Err(StoreError::UnknownSession(_))
    ));
    assert!(matches!(
        store.append_turn(&record("s99", 0, 0, 1, StrategyKind::Segmented, &[])),
        Err(StoreError::UnknownSession(_))
    ));
}

#[test]
fn range_and_pagination() {
    let (store, ids) = store_with_sessions(1);
    let sid = &ids[0];
    assert!(store
        .query_log(sid, &LogQuery::default())
        .unwrap()
        .records
        .is_empty());
    for t in 0..10 {
        store
            .append_turn(&record(sid, t, t * 100, 4000, StrategyKind::Segmented, &[]))
            .unwrap();
    }
    let q = LogQuery {
        from_ms: Some(300),
        to_ms: Some(600),
        ..Default::default()
    };
    let ids_in: Vec<u64> = store
        .query_log(sid, &q)
        .unwrap()
        .records
        .iter()
        .map(|r| r.turn_id)
        .collect();
    assert_eq!(ids_in, [3, 4, 5]);

    let q = LogQuery {
        from_ms: Some(500),
        limit: Some(2),
        ..Default::default()
    };
    let mut pages = Vec::new();
    let mut cursor = None;
    loop {
        let page = store
            .query_log(
                sid,
                &LogQuery {
                    after_turn: cursor,
                    ..q.clone()
                },
            )
            .unwrap();
        pages.push(page.records.iter().map(|r| r.turn_id).collect::<Vec<_>>());
        // Cursors are stable: asking again yields the same page.
        assert_eq!(
            store
                .query_log(
                    sid,
                    &LogQuery {
                        after_turn: cursor,
                        ..q.clone()
                    }
                )
                .unwrap(),
            page
        );
        match page.next_cursor {
            Some(c) => cursor = Some(c),
            None => break,
        }
    }
    assert_eq!(pages, [vec![5, 6], vec![7, 8], vec![9]]);
}

#[test]
fn hundred_turns_in_order() {
    let (store, ids) = store_with_sessions(2);
    for t in 0..100 {
        for sid in &ids {
            store
                .append_turn(&record(sid, t, t, 100 + t, StrategyKind::Segmented, &[]))
                .unwrap();
        }
    }
    for sid in &ids {
        let log = store.query_log(sid, &LogQuery::default()).unwrap().records;
        assert_eq!(
            log.iter().map(|r| r.turn_id).collect::<Vec<_>>(),
            (0..100).collect::<Vec<_>>()
        );
    }
}

#[test]
fn profiles_are_versioned_and_validated() {
    let store = Store::in_memory();
    let mut p = Profile::new("kid", AgeBand::FiveToSeven);
    let first = store.put_profile(p.clone(), 5).unwrap();
    assert_eq!((first.version, &first.profile), (1, &p));
    p.max_sentences_per_turn = 2;
    assert_eq!(store.put_profile(p.clone(), 6).unwrap().version, 2);
    assert_eq!(
        store
            .get_profile("kid")
            .unwrap()
            .profile
            .max_sentences_per_turn,
        2
    );
    p.allowed_topics = vec!["Trains".into()];
    p.blocked_topics = vec!["trains".into()];
    match store.put_profile(p, 7) {
        Err(StoreError::Validation(e)) => {
            assert_eq!(e.fields(), ["allowed_topics", "blocked_topics"])
        }
        other => panic!("expected validation error, got {other:?}"),
    }
    assert_eq!(store.get_profile("kid").unwrap().version, 2);
    assert!(matches!(
        store.create_session("nobody", "bear", 0),
        Err(StoreError::UnknownProfile(_))
    ));
}

#[test]
fn empty_window_is_zeroed() {
    let (store, _) = store_with_sessions(1);
    let m = store.metrics(&MetricsWindow::ALL);
    assert_eq!(m.turn_count, 0);
    assert!(m
        .strategies
        .values()
        .all(|s| s.turn_count == 0 && s.first_audio_p50_ms == 0 && s.first_audio_p95_ms == 0));
    assert!(m.rule_counts.is_empty());
}

#[test]
fn two_value_percentiles() {
    let (store, ids) = store_with_sessions(1);
    store
        .append_turn(&record(&ids[0], 0, 0, 8500, StrategyKind::Segmented, &[]))
        .unwrap();
    store
        .append_turn(&record(&ids[0], 1, 1, 4500, StrategyKind::Segmented, &[]))
        .unwrap();
    let s = store.metrics(&MetricsWindow::ALL).strategies[&StrategyKind::Segmented];
    assert_eq!((s.first_audio_p50_ms, s.first_audio_p95_ms), (4500, 8500));
}

#[test]
fn ended_sessions_take_no_turns() {
    let (store, ids) = store_with_sessions(1);
    store.end_session(&ids[0]).unwrap();
    assert!(matches!(
        store.append_turn(&record(&ids[0], 0, 0, 1, StrategyKind::Segmented, &[])),
        Err(StoreError::SessionEnded(_))
    ));
}

#[test]
fn purge_honours_retention_and_keeps_turn_ids_monotonic() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut p = Profile::new("kid", AgeBand::FiveToSeven);
    p.retention_days = 1;
    store.put_profile(p, 0).unwrap();
    let sid = store.create_session("kid", "bear", 0).unwrap().session_id;
    store
        .append_turn(&record(&sid, 0, 0, 10, StrategyKind::Segmented, &[]))
        .unwrap();
    store
        .append_turn(&record(&sid, 1, DAY_MS, 10, StrategyKind::Segmented, &[]))
        .unwrap();
    let report = store.purge(DAY_MS + 1).unwrap();
    assert_eq!((report.removed, report.retained), (1, 1));
    let report = store.purge(3 * DAY_MS).unwrap();
    assert_eq!((report.removed, report.retained), (1, 0));
    assert_eq!(store.next_turn_id(&sid).unwrap(), 2);
    drop(store);
    let store = Store::open(dir.path()).unwrap();
    assert!(store
        .query_log(&sid, &LogQuery::default())
        .unwrap()
        .records
        .is_empty());
    assert_eq!(store.next_turn_id(&sid).unwrap(), 2);
    assert!(store
        .append_turn(&record(&sid, 1, 0, 1, StrategyKind::Segmented, &[]))
        .is_err());
}

#[test]
fn export_writes_one_line_per_turn() {
    let (store, ids) = store_with_sessions(1);
    for t in 0..3 {
        store
            .append_turn(&record(
                &ids[0],
                t,
                t,
                5,
                StrategyKind::Monolithic,
                &[RuleId::CharLimit],
            ))
            .unwrap();
    }
    let mut out = Vec::new();
    assert_eq!(store.export_session(&ids[0], &mut out).unwrap(), 3);
    let lines: Vec<TurnRecord> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(
        lines,
        store
            .query_log(&ids[0], &LogQuery::default())
            .unwrap()
            .records
    );
}

#[test]
fn torn_final_line_is_discarded_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let sid = {
        let store = Store::open(dir.path()).unwrap();
        store
            .put_profile(Profile::new("kid", AgeBand::FiveToSeven), 0)
            .unwrap();
        let sid = store.create_session("kid", "bear", 0).unwrap().session_id;
        store
            .append_turn(&record(&sid, 0, 0, 10, StrategyKind::Segmented, &[]))
            .unwrap();
        sid
    };
    let line =
        serde_json::to_string(&record(&sid, 1, 0, 10, StrategyKind::Segmented, &[])).unwrap();
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(dir.path().join("turns.jsonl"))
        .unwrap();
    f.write_all(&line.as_bytes()[..line.len() / 2]).unwrap();
    drop(f);
    let store = Store::open(dir.path()).unwrap();
    let log = store.query_log(&sid, &LogQuery::default()).unwrap().records;
    assert_eq!(log.len(), 1);
    store
        .append_turn(&record(&sid, 1, 0, 10, StrategyKind::Segmented, &[]))
        .unwrap();
    drop(store);
    assert_eq!(
        Store::open(dir.path())
            .unwrap()
            .query_log(&sid, &LogQuery::default())
            .unwrap()
            .records
            .len(),
        2
    );
}

const WRITER_ENV: &str = "COMPANION_STORE_WRITER_DIR";

/// Child half of the durability test: append turns forever, reporting
/// each one only after `append_turn` has returned.
#[test]
fn durability_writer_child() {
    let Ok(dir) = std::env::var(WRITER_ENV) else {
        return;
    };
    let store = Store::open(std::path::Path::new(&dir)).unwrap();
    store
        .put_profile(Profile::new("kid", AgeBand::FiveToSeven), 0)
        .unwrap();
    let sid = store.create_session("kid", "bear", 0).unwrap().session_id;
    let mut stdout = std::io::stdout();
    for t in 0.. {
        store
            .append_turn(&record(
                &sid,
                t,
                t,
                100 + t,
                StrategyKind::Segmented,
                &[RuleId::CharLimit],
            ))
            .unwrap();
        writeln!(stdout, "COMMITTED {sid} {t}").unwrap();
        stdout.flush().unwrap();
    }
}

#[test]
fn kill_and_reopen_loses_no_committed_turn() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(std::env::current_exe().unwrap())
        .args([
            "--exact",
            "durability_writer_child",
            "--nocapture",
            "--test-threads=1",
        ])
        .env(WRITER_ENV, dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut committed: Option<(String, u64)> = None;
    for line in BufReader::new(child.stdout.take().unwrap()).lines() {
        let line = line.unwrap();
        let Some(rest) = line.strip_prefix("COMMITTED ") else {
            continue;
        };
        let (sid, t) = rest.split_once(' ').unwrap();
        committed = Some((sid.to_string(), t.parse().unwrap()));
        if committed.as_ref().unwrap().1 >= 200 {
            child.kill().unwrap();
            break;
        }
    }
    child.wait().unwrap();
    let (sid, last) = committed.expect("writer reported no commits");
    let store = Store::open(dir.path()).unwrap();
    let log = store.query_log(&sid, &LogQuery::default()).unwrap().records;
    assert!(
        log.len() as u64 > last,
        "lost committed turns: {} on disk, {} committed",
        log.len(),
        last + 1
    );
    assert!(log.iter().enumerate().all(|(i, r)| r.turn_id == i as u64));
}

fn arb_log() -> impl Strategy<Value = Vec<(usize, u64, u64, bool, Vec<usize>)>> {
    proptest::collection::vec(
        (
            0usize..3,
            0u64..1000,
            0u64..12_000,
            any::<bool>(),
            proptest::collection::vec(0usize..RULES.len(), 0..3),
        ),
        0..60,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// metrics(window) agrees with a recomputation from query_log.
    #[test]
    fn metrics_match_recomputation(entries in arb_log(), from in proptest::option::of(0u64..1000), span in proptest::option::of(0u64..1000)) {
        let (store, ids) = store_with_sessions(3);
        let mut next = [0u64; 3];
        for (s, start, first, seg, rules) in &entries {
            let kind = if *seg { StrategyKind::Segmented } else { StrategyKind::Monolithic };
            let rules: Vec<RuleId> = rules.iter().map(|&i| RULES[i]).collect();
            store.append_turn(&record(&ids[*s], next[*s], *start, *first, kind, &rules)).unwrap();
            next[*s] += 1;
        }
        let window = MetricsWindow { from_ms: from, to_ms: from.zip(span).map(|(f, s)| f + s) };
        let query = LogQuery { from_ms: window.from_ms, to_ms: window.to_ms, ..Default::default() };
        let mut seen = Vec::new();
        for sid in &ids {
            seen.extend(store.query_log(sid, &query).unwrap().records);
        }
        let m = store.metrics(&window);
        prop_assert_eq!(m.turn_count, seen.len() as u64);
        prop_assert_eq!(m.failed_turn_count, seen.iter().filter(|r| r.failure.is_some()).count() as u64);
        for kind in StrategyKind::ALL {
            let v: Vec<u64> = seen.iter().filter(|r| r.strategy == kind).map(|r| r.first_audio_latency_ms).collect();
            let s = m.strategies[&kind];
            prop_assert_eq!(s.turn_count, v.len() as u64);
            prop_assert_eq!(s.first_audio_p50_ms, rank(&v, 50));
            prop_assert_eq!(s.first_audio_p95_ms, rank(&v, 95));
            prop_assert!(s.first_audio_p50_ms <= s.first_audio_p95_ms);
        }
        let mut counts = BTreeMap::new();
        for e in seen.iter().flat_map(|r| r.audit.entries()) {
            *counts.entry(e.rule).or_insert(0u64) += 1;
        }
        prop_assert_eq!(m.rule_counts, counts);
    }
}
