//! Simulated companion robot.
//!
//! The simulator replays a script of button presses against a gateway,
//! plays back the streamed segments on a timeline, drives the dot matrix
//! and servos from each segment's actions, and records everything it does
//! as a JSON-lines event log.

pub mod actions;
pub mod client;
pub mod clock;
pub mod config;
pub mod log;
pub mod script;
pub mod sim;

pub use actions::{execute_actions, render_matrix, Hardware};
pub use client::{ClientError, GatewayClient, TurnResponse};
pub use clock::DeviceClock;
pub use config::{Backoff, DeviceConfig, InvalidDeviceConfig, ServoChannels, TimeSource};
pub use log::EventLog;
pub use script::{Script, ScriptError, ScriptInput, ScriptStep};
pub use sim::{run_session, SessionOutcome};
