//! Turning segment actions into timed matrix frames and servo positions.

use companion_core::emotion_gesture::{expand_gesture, ExpressionFrame, ExpressionSet};
use companion_core::protocol::{
    ActionKind, DeviceEvent, DeviceEventKind, GestureName, SegmentEnvelope,
};
use serde_json::json;

use crate::config::ServoChannels;

/// Output hardware of the simulated robot.
#[derive(Debug, Clone)]
pub struct Hardware {
    pub expressions: ExpressionSet,
    pub channels: ServoChannels,
}

impl Hardware {
    pub fn new(channels: ServoChannels) -> Self {
        Hardware {
            expressions: ExpressionSet::default(),
            channels,
        }
    }
}

/// Render a face and the event recording that it was shown at `at_ms`.
pub fn render_matrix(frame: &ExpressionFrame, at_ms: u64) -> (String, DeviceEvent) {
    let text = frame.render();
    let event = DeviceEvent::new(
        at_ms,
        DeviceEventKind::FrameShown,
        json!({"expression": frame.name.as_str(), "matrix": text}),
    );
    (text, event)
}

/// Events for a segment's actions when its audio starts at
/// `playback_start_ms`, sorted by time. Actions that cannot be executed
/// become error events and the rest still run.
pub fn execute_actions(
    segment: &SegmentEnvelope,
    playback_start_ms: u64,
    hw: &Hardware,
) -> Vec<DeviceEvent> {
    let mut events = Vec::new();
    for cmd in &segment.actions {
        let at = playback_start_ms + cmd.start_ms;
        let error = |reason: String| {
            DeviceEvent::new(
                at,
                DeviceEventKind::Error,
                json!({"segment_id": segment.segment_id, "action": cmd.name, "reason": reason}),
            )
        };
        match cmd.kind {
            ActionKind::Expression => match hw.expressions.by_name(&cmd.name) {
                Some(frame) => events.push(render_matrix(frame, at).1),
                None => events.push(error(format!("unregistered expression `{}`", cmd.name))),
            },
            ActionKind::Gesture => {
                let Ok(gesture) = cmd.name.parse::<GestureName>() else {
                    events.push(error(format!("unknown gesture `{}`", cmd.name)));
                    continue;
                };
                match expand_gesture(gesture, cmd.duration_ms) {
                    Ok(k) => {
                        let output = hw.channels.output(k.channel);
                        events.extend(k.frames.iter().map(|f| {
                            DeviceEvent::new(
                                at + f.time_ms,
                                DeviceEventKind::ServoSet,
                                json!({
                                    "gesture": gesture.as_str(),
                                    "channel": k.channel.as_str(),
                                    "output": output,
                                    "angle": f.angle,
                                }),
                            )
                        }));
                    }
                    Err(e) => events.push(error(e.to_string())),
                }
            }
        }
    }
    events.sort_by_key(|e| e.timestamp_ms);
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use companion_core::protocol::{audio, ActionCommand, ExpressionName};

    fn segment(actions: Vec<ActionCommand>) -> SegmentEnvelope {
        SegmentEnvelope::new(0, "Great job!", audio::beep_marked_silence(1500), actions).unwrap()
    }

    fn times(events: &[DeviceEvent], kind: DeviceEventKind) -> Vec<u64> {
        events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.timestamp_ms)
            .collect()
    }

    #[test]
    fn expression_and_nod() {
        let hw = Hardware::new(ServoChannels::default());
        let seg = segment(vec![
            ActionCommand::expression("s1", 0, 0, ExpressionName::Happy, 0, 1500),
            ActionCommand::gesture("s1", 0, 0, GestureName::Nod, 0, 1200),
        ]);
        let events = execute_actions(&seg, 10_000, &hw);
        assert_eq!(times(&events, DeviceEventKind::FrameShown), [10_000]);
        assert_eq!(
            times(&events, DeviceEventKind::ServoSet),
            [10_000, 10_300, 10_600, 10_900, 11_200]
        );
        let angles: Vec<_> = events
            .iter()
            .filter_map(|e| e.payload.get("angle"))
            .collect();
        assert_eq!(angles, [90, 70, 90, 70, 90]);
        assert_eq!(events[1].payload["output"], 0);
        assert_eq!(
            events[0].payload["matrix"],
            ExpressionSet::bundled_asset(ExpressionName::Happy)
        );
    }

    #[test]
    fn no_actions_no_events() {
        assert!(execute_actions(
            &segment(vec![]),
            0,
            &Hardware::new(ServoChannels::default())
        )
        .is_empty());
    }

    #[test]
    fn unknown_names_become_errors_and_playback_continues() {
        let hw = Hardware::new(ServoChannels::default());
        let mut hug = ActionCommand::gesture("s1", 0, 0, GestureName::Wave, 0, 800);
        hug.name = "hug".into();
        let mut blank = ActionCommand::expression("s1", 0, 0, ExpressionName::Sad, 900, 200);
        blank.name = "smirk".into();
        let wave = ActionCommand::gesture("s1", 0, 0, GestureName::Wave, 900, 600);
        let events = execute_actions(&segment(vec![hug, blank, wave]), 0, &hw);
        let errors = times(&events, DeviceEventKind::Error);
        assert_eq!(errors, [0, 900]);
        assert_eq!(times(&events, DeviceEventKind::ServoSet).len(), 5);
    }

    #[test]
    fn every_face_renders_its_asset() {
        let hw = Hardware::new(ServoChannels::default());
        let mut seen = std::collections::HashSet::new();
        for name in ExpressionName::ALL {
            let (text, event) = render_matrix(hw.expressions.get(name), 5);
            assert_eq!(text, ExpressionSet::bundled_asset(name));
            assert_eq!(text.lines().count(), 8);
            assert_eq!(event.kind, DeviceEventKind::FrameShown);
            seen.insert(text);
        }
        assert_eq!(seen.len(), 7);
    }
}
