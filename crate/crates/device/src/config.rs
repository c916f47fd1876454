use companion_core::emotion_gesture::MATRIX_SIZE;
use companion_core::pipeline::StrategyKind;
use companion_core::protocol::Channel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid device config `{field}`: {reason}")]
pub struct InvalidDeviceConfig {
    pub field: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSource {
    /// Wall clock; captures and playback really take their duration.
    Real,
    /// A clock that only advances when the device waits; logs are exactly
    /// reproducible.
    #[default]
    Virtual,
}

/// PWM output numbers of the three servos.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServoChannels {
    pub head_pitch: u8,
    pub head_yaw: u8,
    pub arm: u8,
}

impl Default for ServoChannels {
    fn default() -> Self {
        ServoChannels {
            head_pitch: 0,
            head_yaw: 1,
            arm: 2,
        }
    }
}

impl ServoChannels {
    /// Output number for a servo channel; `None` for the matrix.
    pub fn output(&self, channel: Channel) -> Option<u8> {
        match channel {
            Channel::HeadPitch => Some(self.head_pitch),
            Channel::HeadYaw => Some(self.head_yaw),
            Channel::Arm => Some(self.arm),
            Channel::Matrix => None,
        }
    }
}

/// Reconnect schedule: `base_ms` doubling up to `cap_ms`, `max_tries` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backoff {
    pub base_ms: u64,
    pub cap_ms: u64,
    pub max_tries: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base_ms: 500,
            cap_ms: 8_000,
            max_tries: 5,
        }
    }
}

impl Backoff {
    /// Wait before retry `n` (0-based).
    pub fn delay_ms(&self, n: u32) -> u64 {
        self.base_ms
            .saturating_mul(1u64.checked_shl(n).unwrap_or(u64::MAX))
            .min(self.cap_ms)
    }

    pub fn delays(&self) -> Vec<u64> {
        (0..self.max_tries).map(|n| self.delay_ms(n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceConfig {
    /// Gateway base URL, e.g. `http://127.0.0.1:8080`.
    pub server: String,
    pub token: Option<String>,
    /// Profile for a new session; ignored when `session_id` is set.
    pub profile_id: String,
    /// Join this existing session instead of creating one.
    pub session_id: Option<String>,
    pub device_label: String,
    pub channels: ServoChannels,
    pub matrix_size: usize,
    pub button_id: u8,
    pub led_id: u8,
    pub time_source: TimeSource,
    pub strategy: StrategyKind,
    pub backoff: Backoff,
    /// Relay each turn's events to the gateway's live stream.
    pub publish_events: bool,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            server: "http://127.0.0.1:8080".into(),
            token: None,
            profile_id: "default".into(),
            session_id: None,
            device_label: "simulator".into(),
            channels: ServoChannels::default(),
            matrix_size: MATRIX_SIZE,
            button_id: 17,
            led_id: 27,
            time_source: TimeSource::Virtual,
            strategy: StrategyKind::Segmented,
            backoff: Backoff::default(),
            publish_events: true,
        }
    }
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<(), InvalidDeviceConfig> {
        let bad = |field, reason: &str| {
            Err(InvalidDeviceConfig {
                field,
                reason: reason.into(),
            })
        };
        if self.matrix_size != MATRIX_SIZE {
            return bad("matrix_size", "the dot matrix is 8x8");
        }
        let c = self.channels;
        if c.head_pitch == c.head_yaw || c.head_pitch == c.arm || c.head_yaw == c.arm {
            return bad("channels", "servo outputs must be distinct");
        }
        if self.button_id == self.led_id {
            return bad("led_id", "LED and button cannot share a pin");
        }
        if !(self.server.starts_with("http://") || self.server.starts_with("https://")) {
            return bad("server", "must be an http:// or https:// URL");
        }
        if self.backoff.base_ms == 0 || self.backoff.cap_ms < self.backoff.base_ms {
            return bad("backoff", "need 0 < base_ms <= cap_ms");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_backoff_schedule() {
        assert_eq!(Backoff::default().delays(), [500, 1000, 2000, 4000, 8000]);
        let long = Backoff {
            max_tries: 8,
            ..Backoff::default()
        };
        assert_eq!(long.delays()[5..], [8000, 8000, 8000]);
        assert_eq!(Backoff::default().delay_ms(200), 8000);
    }

    #[test]
    fn validation() {
        assert!(DeviceConfig::default().validate().is_ok());
        let mut c = DeviceConfig::default();
        c.channels.arm = c.channels.head_pitch;
        assert_eq!(c.validate().unwrap_err().field, "channels");
        let c = DeviceConfig {
            matrix_size: 16,
            ..DeviceConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().field, "matrix_size");
        let c = DeviceConfig {
            server: "localhost:8080".into(),
            ..DeviceConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().field, "server");
    }
}
