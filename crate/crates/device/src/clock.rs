use std::time::Duration;

use tokio::time::Instant;

use crate::config::TimeSource;

/// Device time in milliseconds since the simulator started.
#[derive(Debug)]
pub enum DeviceClock {
    /// Advances only through [`DeviceClock::sleep_until`], instantly.
    Virtual {
        now_ms: u64,
    },
    Real {
        origin: Instant,
    },
}

impl DeviceClock {
    pub fn new(source: TimeSource) -> Self {
        match source {
            TimeSource::Virtual => DeviceClock::Virtual { now_ms: 0 },
            TimeSource::Real => DeviceClock::Real {
                origin: Instant::now(),
            },
        }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, DeviceClock::Virtual { .. })
    }

    pub fn now_ms(&self) -> u64 {
        match self {
            DeviceClock::Virtual { now_ms } => *now_ms,
            DeviceClock::Real { origin } => origin.elapsed().as_millis() as u64,
        }
    }

    /// Wait until `t_ms`; returns at once if it has already passed.
    pub async fn sleep_until(&mut self, t_ms: u64) {
        match self {
            DeviceClock::Virtual { now_ms } => *now_ms = (*now_ms).max(t_ms),
            DeviceClock::Real { origin } => {
                tokio::time::sleep_until(*origin + Duration::from_millis(t_ms)).await
            }
        }
    }

    pub async fn sleep(&mut self, ms: u64) {
        let t = self.now_ms() + ms;
        self.sleep_until(t).await;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn virtual_time_never_rewinds() {
        let mut c = DeviceClock::new(TimeSource::Virtual);
        c.sleep_until(500).await;
        c.sleep_until(200).await;
        assert_eq!(c.now_ms(), 500);
        c.sleep(250).await;
        assert_eq!(c.now_ms(), 750);
    }
}
