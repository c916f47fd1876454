pub mod emotion_gesture;
pub mod guardrails;
pub mod pipeline;
pub mod protocol;
pub mod providers;
pub mod store;
pub mod text;
