use std::path::PathBuf;
use std::sync::Arc;

use companion_core::pipeline::{ManualClock, TurnRecord};
use companion_core::protocol::{DeviceEvent, DeviceEventKind};
use companion_device::{run_session, DeviceConfig, GatewayClient, Script, SessionOutcome};
use companion_gateway::{spawn, GatewayConfig, RunningGateway};

const TOKEN: &str = "device-secret";

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn demo_script() -> Script {
    Script::load(&repo_root().join("fixtures/demo_script.json")).unwrap()
}

async fn gateway() -> RunningGateway {
    let mut c = GatewayConfig::default();
    c.server.bind = "127.0.0.1:0".into();
    c.server.token = Some(TOKEN.into());
    c.providers.fixtures = repo_root().join("fixtures/fixtures.json");
    spawn(&c, Arc::new(ManualClock::new(1_700_000_000_000)))
        .await
        .unwrap()
}

fn device(gw: &RunningGateway) -> DeviceConfig {
    DeviceConfig {
        server: gw.base_url(),
        token: Some(TOKEN.into()),
        ..DeviceConfig::default()
    }
}

async fn run_demo() -> (SessionOutcome, Vec<TurnRecord>) {
    let gw = gateway().await;
    let outcome = run_session(&device(&gw), &demo_script()).await.unwrap();
    let sid = outcome.session_id.clone().unwrap();
    let records = GatewayClient::new(&gw.base_url(), Some(TOKEN.into()))
        .log(&sid)
        .await
        .unwrap();
    gw.shutdown().await.unwrap();
    (outcome, records)
}

fn of_kind(events: &[DeviceEvent], kind: DeviceEventKind) -> Vec<&DeviceEvent> {
    events.iter().filter(|e| e.kind == kind).collect()
}

fn kinds(outcome: &SessionOutcome) -> Vec<DeviceEventKind> {
    outcome.log.events().iter().map(|e| e.kind).collect()
}

#[tokio::test]
async fn demo_session_is_reproducible() {
    let (a, _) = run_demo().await;
    let (b, _) = run_demo().await;
    assert!(!a.has_errors(), "{}", a.log.to_jsonl());
    assert_eq!(a.turns_completed, 3);
    assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
}

#[tokio::test]
async fn playback_starts_when_the_first_audio_arrives() {
    let (outcome, records) = run_demo().await;
    let events = outcome.log.events();
    let ends = of_kind(events, DeviceEventKind::CaptureEnd);
    assert_eq!(records.len(), 3);
    for (record, end) in records.iter().zip(&ends) {
        let first = events
            .iter()
            .find(|e| {
                e.kind == DeviceEventKind::PlaybackStart && e.payload["turn_id"] == record.turn_id
            })
            .unwrap();
        let measured = first.timestamp_ms - end.timestamp_ms;
        assert!(
            measured.abs_diff(record.first_audio_latency_ms) <= 5,
            "turn {}: device {measured} ms, gateway {} ms",
            record.turn_id,
            record.first_audio_latency_ms
        );
        assert_eq!(first.payload["latency_ms"], measured);
    }
    // The voice turns stream in segments on the reference timing.
    assert_eq!(records[1].first_audio_latency_ms, 4500);
}

#[tokio::test]
async fn segments_play_in_order_without_overlap() {
    let (outcome, records) = run_demo().await;
    let events = outcome.log.events();
    let mut playing = None;
    let mut order = Vec::new();
    let mut played_ms = 0;
    for e in events {
        match e.kind {
            DeviceEventKind::PlaybackStart => {
                assert!(
                    playing.is_none(),
                    "overlapping playback at {}",
                    e.timestamp_ms
                );
                playing = Some(e);
                order.push((
                    e.payload["turn_id"].as_u64().unwrap(),
                    e.payload["segment_id"].as_u64().unwrap(),
                ));
            }
            DeviceEventKind::PlaybackEnd => {
                let start = playing.take().expect("end without start");
                assert_eq!(start.payload["segment_id"], e.payload["segment_id"]);
                let d = start.payload["audio_duration_ms"].as_u64().unwrap();
                assert_eq!(e.timestamp_ms - start.timestamp_ms, d);
                played_ms += d;
            }
            _ => {}
        }
    }
    assert!(playing.is_none());
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
    let expected: Vec<_> = records
        .iter()
        .flat_map(|r| r.segments.iter().map(move |s| (r.turn_id, s.segment_id)))
        .collect();
    assert_eq!(order, expected);
    let total: u64 = records
        .iter()
        .flat_map(|r| &r.segments)
        .map(|s| s.audio_duration_ms)
        .sum();
    assert_eq!(played_ms, total);
}

#[tokio::test]
async fn capture_lights_the_led_and_actions_move_hardware() {
    let (outcome, _) = run_demo().await;
    let events = outcome.log.events();
    let leds: Vec<_> = of_kind(events, DeviceEventKind::LedSet)
        .iter()
        .map(|e| e.payload["on"].as_bool().unwrap())
        .collect();
    assert_eq!(leds, [true, false, true, false]);
    let presses = of_kind(events, DeviceEventKind::ButtonPress);
    assert_eq!(presses.len(), 4);
    assert_eq!(presses[0].payload["action"], "start_capture");
    assert!(!of_kind(events, DeviceEventKind::FrameShown).is_empty());
    assert!(!of_kind(events, DeviceEventKind::ServoSet).is_empty());
    let first = &events[0];
    assert_eq!(first.kind, DeviceEventKind::Connected);
    assert_eq!(events.last().unwrap().kind, DeviceEventKind::Disconnected);
}

#[tokio::test]
async fn empty_script_connects_and_leaves() {
    let gw = gateway().await;
    let outcome = run_session(&device(&gw), &Script::default()).await.unwrap();
    assert_eq!(
        kinds(&outcome),
        [DeviceEventKind::Connected, DeviceEventKind::Disconnected]
    );
    assert!(!outcome.has_errors());
}

#[tokio::test]
async fn unreachable_gateway_backs_off_then_gives_up() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let config = DeviceConfig {
        server: format!("http://127.0.0.1:{port}"),
        ..DeviceConfig::default()
    };
    let outcome = run_session(&config, &demo_script()).await.unwrap();
    assert!(outcome.session_id.is_none());
    let errors = of_kind(outcome.log.events(), DeviceEventKind::Error);
    let at: Vec<_> = errors.iter().map(|e| e.timestamp_ms).collect();
    assert_eq!(at, [0, 500, 1500, 3500, 7500, 15500]);
    let waits: Vec<_> = errors
        .iter()
        .map(|e| e.payload["next_retry_ms"].as_u64())
        .collect();
    assert_eq!(
        waits,
        [
            Some(500),
            Some(1000),
            Some(2000),
            Some(4000),
            Some(8000),
            None
        ]
    );
    assert_eq!(errors.last().unwrap().payload["terminal"], true);
    assert_eq!(outcome.log.events().len(), errors.len());
}

#[tokio::test]
async fn rejected_credentials_fail_without_retrying() {
    let gw = gateway().await;
    let config = DeviceConfig {
        token: Some("wrong".into()),
        ..device(&gw)
    };
    let outcome = run_session(&config, &demo_script()).await.unwrap();
    let errors = of_kind(outcome.log.events(), DeviceEventKind::Error);
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0].payload["terminal"], true);
    assert!(errors[0].payload["reason"]
        .as_str()
        .unwrap()
        .contains("401"));
}

#[tokio::test]
async fn a_refused_turn_is_logged_and_the_script_continues() {
    let gw = gateway().await;
    let dir = tempfile::tempdir().unwrap();
    // The second press names a session that has ended in the meantime.
    let client = GatewayClient::new(&gw.base_url(), Some(TOKEN.into()));
    let meta = client.create_session("default", "test").await.unwrap();
    reqwest::Client::new()
        .post(format!(
            "{}/v1/sessions/{}/end",
            gw.base_url(),
            meta.session_id
        ))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap();
    std::fs::write(dir.path().join("s.json"), r#"[{"press_at_ms": 0, "aac_text": "hello teddy"}, {"press_at_ms": 10, "aac_text": "hello teddy"}]"#).unwrap();
    let script = Script::load(&dir.path().join("s.json")).unwrap();
    let config = DeviceConfig {
        session_id: Some(meta.session_id),
        ..device(&gw)
    };
    let outcome = run_session(&config, &script).await.unwrap();
    let errors = of_kind(outcome.log.events(), DeviceEventKind::Error);
    assert_eq!(errors.len(), 2, "{}", outcome.log.to_jsonl());
    assert!(errors.iter().all(|e| e.payload.get("terminal").is_none()));
    assert!(errors[0].payload["reason"]
        .as_str()
        .unwrap()
        .contains("session_ended"));
    assert_eq!(outcome.turns_completed, 0);
    assert_eq!(
        outcome.log.events().last().unwrap().kind,
        DeviceEventKind::Disconnected
    );
}

#[tokio::test]
async fn events_are_relayed_to_the_live_stream() {
    use futures::StreamExt;

    let gw = gateway().await;
    let client = GatewayClient::new(&gw.base_url(), Some(TOKEN.into()));
    let sid = client
        .create_session("default", "watcher")
        .await
        .unwrap()
        .session_id;
    let live = reqwest::Client::new()
        .get(format!("{}/v1/sessions/{sid}/live", gw.base_url()))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap();
    assert!(live.status().is_success());
    let config = DeviceConfig {
        session_id: Some(sid),
        ..device(&gw)
    };
    let outcome = run_session(&config, &demo_script()).await.unwrap();
    // Everything after `connected` and before `disconnected` is relayed.
    let expected_device = outcome.log.events().len() - 2;

    let mut body = live.bytes_stream();
    let mut text = String::new();
    let count = |text: &str, name: &str| {
        text.lines()
            .filter(|l| *l == format!("event: {name}"))
            .count()
    };
    let read = async {
        while count(&text, "device") < expected_device || count(&text, "turn") < 3 {
            text.push_str(std::str::from_utf8(&body.next().await.unwrap().unwrap()).unwrap());
        }
    };
    tokio::time::timeout(std::time::Duration::from_secs(10), read)
        .await
        .expect("live stream stalled");
    assert_eq!(count(&text, "turn"), 3);
    assert_eq!(count(&text, "device"), expected_device);
}
