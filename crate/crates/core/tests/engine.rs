use std::sync::Arc;

use companion_core::guardrails::{Guardrails, Profile, TurnContext};
use companion_core::pipeline::{
    DelayConfig, Engine, EngineError, ManualClock, ScriptedExchange, Strategy, TurnInput,
};
use companion_core::store::{LogQuery, Store};
use futures::executor::block_on;

fn engine() -> (Arc<Engine>, Arc<ManualClock>, ScriptedExchange) {
    let ex = ScriptedExchange::reference();
    let store = Arc::new(Store::in_memory());
    store.put_profile(Profile::default_profile(), 0).unwrap();
    let clock = Arc::new(ManualClock::new(1_000));
    let providers = DelayConfig::default().providers(&ex.fixtures(), 0, false);
    let engine = Engine::new(
        providers,
        Arc::new(Guardrails::default()),
        store,
        clock.clone(),
    );
    (Arc::new(engine), clock, ex)
}

fn run(
    engine: &Arc<Engine>,
    sid: &str,
    input: TurnInput,
) -> Result<companion_core::pipeline::TurnRecord, EngineError> {
    let permit = engine.begin_turn(sid)?;
    block_on(permit.run(
        input,
        TurnContext::default(),
        Strategy::default(),
        &mut |_| {},
    ))
}

#[test]
fn turns_are_numbered_persisted_and_timestamped() {
    let (engine, clock, ex) = engine();
    let sid = engine.create_session("default", "bear").unwrap().session_id;
    assert_eq!(sid, "s1");
    let first = run(&engine, &sid, TurnInput::Voice(ex.audio.clone())).unwrap();
    clock.advance(10_000);
    let second = run(&engine, &sid, TurnInput::AacText("nothing scripted".into())).unwrap();
    assert_eq!((first.turn_id, second.turn_id), (0, 1));
    assert_eq!((first.started_at_ms, second.started_at_ms), (1_000, 11_000));
    assert_eq!(first.first_audio_latency_ms, 4500);
    assert!(second.is_failure());
    let log = engine
        .store()
        .query_log(&sid, &LogQuery::default())
        .unwrap()
        .records;
    assert_eq!(log, vec![first, second]);
}

#[test]
fn one_turn_at_a_time_per_session() {
    let (engine, _, _) = engine();
    let a = engine.create_session("default", "bear").unwrap().session_id;
    let b = engine.create_session("default", "bear").unwrap().session_id;
    let held = engine.begin_turn(&a).unwrap();
    assert!(matches!(engine.begin_turn(&a), Err(EngineError::Busy(_))));
    let other = engine.begin_turn(&b).unwrap();
    drop(held);
    drop(other);
    assert!(engine.begin_turn(&a).is_ok());
}

#[test]
fn rejected_input_leaves_no_record() {
    let (engine, _, _) = engine();
    let sid = engine.create_session("default", "bear").unwrap().session_id;
    assert!(matches!(
        run(&engine, &sid, TurnInput::AacText("  \n".into())),
        Err(EngineError::EmptyInput)
    ));
    assert!(matches!(
        run(&engine, &sid, TurnInput::Voice(Vec::new())),
        Err(EngineError::EmptyInput)
    ));
    assert!(matches!(
        run(&engine, &sid, TurnInput::Voice(b"RIFFnope".to_vec())),
        Err(EngineError::InvalidAudio(_))
    ));
    assert!(matches!(
        run(&engine, "s42", TurnInput::AacText("hi".into())),
        Err(EngineError::UnknownSession(_))
    ));
    assert!(engine
        .store()
        .query_log(&sid, &LogQuery::default())
        .unwrap()
        .records
        .is_empty());
    // The slot is free again after every rejection.
    assert!(engine.begin_turn(&sid).is_ok());
}

#[test]
fn profile_edits_apply_to_the_next_turn() {
    let (engine, _, ex) = engine();
    let sid = engine.create_session("default", "bear").unwrap().session_id;
    let before = run(&engine, &sid, TurnInput::AacText(ex.transcript.clone())).unwrap();
    let mut p = Profile::default_profile();
    p.max_sentences_per_turn = 1;
    engine.store().put_profile(p, 5).unwrap();
    let after = run(&engine, &sid, TurnInput::AacText(ex.transcript.clone())).unwrap();
    assert_eq!(before.segments.len(), 3);
    assert_eq!(
        after.guarded_response,
        "Wow, you made a really tall block tower!"
    );
}

#[test]
fn ended_sessions_refuse_turns() {
    let (engine, _, _) = engine();
    let sid = engine.create_session("default", "bear").unwrap().session_id;
    engine.store().end_session(&sid).unwrap();
    assert!(matches!(
        engine.begin_turn(&sid),
        Err(EngineError::SessionEnded(_))
    ));
}
