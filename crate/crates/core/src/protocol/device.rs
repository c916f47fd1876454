use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// What happened on the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceEventKind {
    Connected,
    Disconnected,
    ButtonPress,
    CaptureStart,
    CaptureEnd,
    PlaybackStart,
    PlaybackEnd,
    FrameShown,
    ServoSet,
    LedSet,
    Error,
}

impl DeviceEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceEventKind::Connected => "connected",
            DeviceEventKind::Disconnected => "disconnected",
            DeviceEventKind::ButtonPress => "button_press",
            DeviceEventKind::CaptureStart => "capture_start",
            DeviceEventKind::CaptureEnd => "capture_end",
            DeviceEventKind::PlaybackStart => "playback_start",
            DeviceEventKind::PlaybackEnd => "playback_end",
            DeviceEventKind::FrameShown => "frame_shown",
            DeviceEventKind::ServoSet => "servo_set",
            DeviceEventKind::LedSet => "led_set",
            DeviceEventKind::Error => "error",
        }
    }
}

impl fmt::Display for DeviceEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of a device event log. Payload keys serialize sorted, so equal
/// events always produce equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEvent {
    pub timestamp_ms: u64,
    pub kind: DeviceEventKind,
    #[serde(default)]
    pub payload: Value,
}

impl DeviceEvent {
    pub fn new(timestamp_ms: u64, kind: DeviceEventKind, payload: Value) -> Self {
        DeviceEvent {
            timestamp_ms,
            kind,
            payload,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("device events serialize")
    }
}
