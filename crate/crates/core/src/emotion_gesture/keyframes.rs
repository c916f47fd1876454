use serde::{Deserialize, Serialize};

use crate::protocol::{Channel, GestureName};

/// Neutral servo angle every gesture starts and ends at.
pub const REST_ANGLE: u16 = 90;
/// Shortest window any gesture can be expanded into.
pub const MIN_GESTURE_MS: u64 = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time_ms: u64,
    pub angle: u16,
}

/// Servo trajectory for one gesture on one channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureKeyframes {
    pub gesture: GestureName,
    pub channel: Channel,
    pub frames: Vec<Keyframe>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{gesture} needs at least {MIN_GESTURE_MS} ms, got {duration_ms} ms")]
pub struct TooShort {
    pub gesture: GestureName,
    pub duration_ms: u64,
}

fn pattern(gesture: GestureName) -> &'static [u16] {
    match gesture {
        GestureName::Nod => &[90, 70, 90, 70, 90],
        GestureName::HeadTurnLeft => &[90, 60, 90],
        GestureName::HeadTurnRight => &[90, 120, 90],
        GestureName::Wave => &[90, 150, 90, 150, 90],
        GestureName::Idle => &[REST_ANGLE],
    }
}

/// Expand a gesture into evenly spaced keyframes that end exactly at
/// `duration_ms`. Idle is a single rest keyframe.
pub fn expand_gesture(
    gesture: GestureName,
    duration_ms: u64,
) -> Result<GestureKeyframes, TooShort> {
    if duration_ms < MIN_GESTURE_MS {
        return Err(TooShort {
            gesture,
            duration_ms,
        });
    }
    let angles = pattern(gesture);
    let steps = (angles.len() as u64).saturating_sub(1).max(1);
    let frames = angles
        .iter()
        .enumerate()
        .map(|(i, &angle)| Keyframe {
            time_ms: i as u64 * duration_ms / steps,
            angle,
        })
        .collect();
    Ok(GestureKeyframes {
        gesture,
        channel: gesture.channel(),
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(k: &GestureKeyframes) -> Vec<(u64, u16)> {
        k.frames.iter().map(|f| (f.time_ms, f.angle)).collect()
    }

    #[test]
    fn nod_over_1200_ms() {
        let k = expand_gesture(GestureName::Nod, 1200).unwrap();
        assert_eq!(k.channel, Channel::HeadPitch);
        assert_eq!(
            pairs(&k),
            [(0, 90), (300, 70), (600, 90), (900, 70), (1200, 90)]
        );
    }

    #[test]
    fn head_turns_and_wave() {
        assert_eq!(
            pairs(&expand_gesture(GestureName::HeadTurnLeft, 1000).unwrap()),
            [(0, 90), (500, 60), (1000, 90)]
        );
        assert_eq!(
            pairs(&expand_gesture(GestureName::HeadTurnRight, 1000).unwrap()),
            [(0, 90), (500, 120), (1000, 90)]
        );
        let wave = expand_gesture(GestureName::Wave, 1600).unwrap();
        assert_eq!(wave.channel, Channel::Arm);
        assert_eq!(
            pairs(&wave),
            [(0, 90), (400, 150), (800, 90), (1200, 150), (1600, 90)]
        );
    }

    #[test]
    fn idle_is_one_rest_frame() {
        for d in [400, 777, 60_000] {
            assert_eq!(
                pairs(&expand_gesture(GestureName::Idle, d).unwrap()),
                [(0, 90)]
            );
        }
    }

    #[test]
    fn too_short() {
        assert_eq!(
            expand_gesture(GestureName::Nod, 100),
            Err(TooShort {
                gesture: GestureName::Nod,
                duration_ms: 100
            })
        );
    }

    proptest! {
        #[test]
        fn keyframes_increase_and_end_on_time(idx in 0usize..4, d in MIN_GESTURE_MS..100_000) {
            let g = [GestureName::Nod, GestureName::HeadTurnLeft, GestureName::HeadTurnRight, GestureName::Wave][idx];
            let k = expand_gesture(g, d).unwrap();
            prop_assert_eq!(k.frames[0].time_ms, 0);
            prop_assert_eq!(k.frames.last().unwrap().time_ms, d);
            prop_assert!(k.frames.windows(2).all(|w| w[0].time_ms < w[1].time_ms));
            prop_assert_eq!(k.frames[0].angle, REST_ANGLE);
            prop_assert_eq!(k.frames.last().unwrap().angle, REST_ANGLE);
            prop_assert!(k.frames.iter().all(|f| f.angle <= 180));
        }
    }
}
