use crate::guardrails::Profile;
use crate::protocol::{ActionCommand, GestureName};

use super::affect::{expression_for_affect, AffectTag};
use super::keyframes::MIN_GESTURE_MS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("{segments} segments but {tags} affect tags")]
    LengthMismatch { segments: usize, tags: usize },
    #[error("profile prefers unregistered gesture `{name}` for {cue}")]
    UnknownGesture { name: String, cue: AffectTag },
    #[error("segment {0} has zero duration")]
    ZeroDuration(u64),
}

/// Natural length of a gesture; idle fills whatever window it is given.
pub fn default_gesture_ms(gesture: GestureName) -> Option<u64> {
    match gesture {
        GestureName::Nod => Some(1200),
        GestureName::HeadTurnLeft | GestureName::HeadTurnRight => Some(1000),
        GestureName::Wave => Some(1600),
        GestureName::Idle => None,
    }
}

/// Gesture for an affect: the profile's preference if any, else the default.
pub fn gesture_for(tag: AffectTag, profile: &Profile) -> Result<GestureName, PlanError> {
    if let Some(name) = profile.preferred_gesture(tag) {
        return name.parse().map_err(|_| PlanError::UnknownGesture {
            name: name.to_string(),
            cue: tag,
        });
    }
    Ok(match tag {
        AffectTag::Praise => GestureName::Nod,
        AffectTag::Question => GestureName::HeadTurnRight,
        _ => GestureName::Idle,
    })
}

/// Commands for one segment: a face spanning the whole segment, then at
/// most one gesture starting with the audio. A gesture that cannot fit its
/// minimum window is dropped rather than squeezed.
pub fn plan_segment(
    session_id: &str,
    turn_id: u64,
    segment_id: u64,
    duration_ms: u64,
    tag: AffectTag,
    profile: &Profile,
) -> Result<Vec<ActionCommand>, PlanError> {
    if duration_ms == 0 {
        return Err(PlanError::ZeroDuration(segment_id));
    }
    let gesture = gesture_for(tag, profile)?;
    let mut out = vec![ActionCommand::expression(
        session_id,
        turn_id,
        segment_id,
        expression_for_affect(tag),
        0,
        duration_ms,
    )];
    let gesture_ms = default_gesture_ms(gesture).map_or(duration_ms, |d| d.min(duration_ms));
    if gesture_ms >= MIN_GESTURE_MS {
        out.push(ActionCommand::gesture(
            session_id, turn_id, segment_id, gesture, 0, gesture_ms,
        ));
    }
    Ok(out)
}

/// Plan every segment of a turn; `durations[i]` and `tags[i]` describe
/// segment `i`.
pub fn plan_actions(
    session_id: &str,
    turn_id: u64,
    durations: &[u64],
    tags: &[AffectTag],
    profile: &Profile,
) -> Result<Vec<Vec<ActionCommand>>, PlanError> {
    if durations.len() != tags.len() {
        return Err(PlanError::LengthMismatch {
            segments: durations.len(),
            tags: tags.len(),
        });
    }
    durations
        .iter()
        .zip(tags)
        .enumerate()
        .map(|(i, (&d, &tag))| plan_segment(session_id, turn_id, i as u64, d, tag, profile))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guardrails::TargetBehavior;
    use crate::protocol::{encode_command, ActionKind};

    fn summary(cmds: &[ActionCommand]) -> Vec<(ActionKind, &str, u64, u64)> {
        cmds.iter()
            .map(|c| (c.kind, c.name.as_str(), c.start_ms, c.duration_ms))
            .collect()
    }

    #[test]
    fn praise_segment() {
        let plan = plan_actions(
            "s",
            0,
            &[2400],
            &[AffectTag::Praise],
            &Profile::default_profile(),
        )
        .unwrap();
        assert_eq!(
            summary(&plan[0]),
            [
                (ActionKind::Expression, "encouraging", 0, 2400),
                (ActionKind::Gesture, "nod", 0, 1200)
            ]
        );
    }

    #[test]
    fn empty_plan() {
        assert!(plan_actions("s", 0, &[], &[], &Profile::default_profile())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn preference_overrides_default() {
        let mut p = Profile::default_profile();
        p.target_behaviors.push(TargetBehavior {
            behavior: "sharing".into(),
            preferred_gesture: "wave".into(),
            cue: AffectTag::Praise,
        });
        let plan = plan_segment("s", 0, 0, 2400, AffectTag::Praise, &p).unwrap();
        assert_eq!(summary(&plan)[1], (ActionKind::Gesture, "wave", 0, 1600));
    }

    #[test]
    fn unknown_preference_is_an_error() {
        let mut p = Profile::default_profile();
        p.target_behaviors.push(TargetBehavior {
            behavior: "greeting".into(),
            preferred_gesture: "hug".into(),
            cue: AffectTag::Positive,
        });
        assert_eq!(
            plan_segment("s", 0, 0, 2400, AffectTag::Positive, &p),
            Err(PlanError::UnknownGesture {
                name: "hug".into(),
                cue: AffectTag::Positive
            })
        );
    }

    #[test]
    fn short_segments_clamp_or_drop_gestures() {
        let p = Profile::default_profile();
        let plan = plan_segment("s", 0, 0, 900, AffectTag::Praise, &p).unwrap();
        assert_eq!(summary(&plan)[1], (ActionKind::Gesture, "nod", 0, 900));
        let plan = plan_segment("s", 0, 0, 300, AffectTag::Praise, &p).unwrap();
        assert_eq!(plan.len(), 1);
        let plan = plan_segment("s", 0, 0, 5000, AffectTag::Neutral, &p).unwrap();
        assert_eq!(summary(&plan)[1], (ActionKind::Gesture, "idle", 0, 5000));
    }

    #[test]
    fn mismatched_inputs() {
        let p = Profile::default_profile();
        assert_eq!(
            plan_actions("s", 0, &[100], &[], &p),
            Err(PlanError::LengthMismatch {
                segments: 1,
                tags: 0
            })
        );
        assert_eq!(
            plan_segment("s", 0, 3, 0, AffectTag::Calm, &p),
            Err(PlanError::ZeroDuration(3))
        );
    }

    #[test]
    fn every_tag_and_duration_plans_valid_commands() {
        let p = Profile::default_profile();
        for tag in AffectTag::ALL {
            for d in [1, 399, 400, 1000, 1200, 1600, 60_000] {
                let plan = plan_segment("s", 2, 1, d, tag, &p).unwrap();
                for cmd in &plan {
                    cmd.validate().unwrap();
                    assert!(cmd.end_ms() <= d);
                    encode_command(cmd).unwrap();
                }
                assert_eq!(plan[0].kind, ActionKind::Expression);
                assert_eq!((plan[0].start_ms, plan[0].duration_ms), (0, d));
            }
        }
    }
}
