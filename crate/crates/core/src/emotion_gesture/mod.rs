//! Affect tagging, dot-matrix faces, gesture planning and servo keyframes.

mod affect;
mod expressions;
mod keyframes;
mod planner;

pub use affect::{
    classify_affect, expression_for_affect, AffectClassifier, AffectTag, RuleClassifier,
    RuleTableError,
};
pub use expressions::{Bitmap, ExpressionFrame, ExpressionSet, FrameError, MATRIX_SIZE};
pub use keyframes::{
    expand_gesture, GestureKeyframes, Keyframe, TooShort, MIN_GESTURE_MS, REST_ANGLE,
};
pub use planner::{default_gesture_ms, gesture_for, plan_actions, plan_segment, PlanError};
