use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Linear latency model of one provider stage:
/// `fixed_ms + round(per_char_ms * chars)`, shifted by a seeded uniform
/// jitter in `[-jitter_ms, +jitter_ms]` and clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDelayModel {
    pub fixed_ms: u64,
    pub per_char_ms: f64,
    #[serde(default)]
    pub jitter_ms: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("per_char_ms must be finite and non-negative, got {0}")]
pub struct InvalidDelayModel(pub f64);

impl StageDelayModel {
    pub const ZERO: StageDelayModel = StageDelayModel {
        fixed_ms: 0,
        per_char_ms: 0.0,
        jitter_ms: 0,
    };

    pub fn new(fixed_ms: u64, per_char_ms: f64, jitter_ms: u64) -> Result<Self, InvalidDelayModel> {
        let model = StageDelayModel {
            fixed_ms,
            per_char_ms,
            jitter_ms,
        };
        model.validate().map(|_| model)
    }

    pub fn validate(&self) -> Result<(), InvalidDelayModel> {
        if self.per_char_ms.is_finite() && self.per_char_ms >= 0.0 {
            Ok(())
        } else {
            Err(InvalidDelayModel(self.per_char_ms))
        }
    }

    /// Character-proportional part of the delay.
    pub fn char_cost(&self, chars: usize) -> u64 {
        (self.per_char_ms * chars as f64).round() as u64
    }

    /// Jitter-free delay for `chars` characters.
    pub fn base_delay(&self, chars: usize) -> u64 {
        self.fixed_ms + self.char_cost(chars)
    }

    /// Signed jitter offset drawn from `rng`; zero when jitter is disabled.
    pub fn jitter(&self, rng: &mut impl Rng) -> i64 {
        if self.jitter_ms == 0 {
            return 0;
        }
        let j = self.jitter_ms as i64;
        rng.random_range(-j..=j)
    }
}

/// Apply a signed offset to a delay, clamping at zero.
pub fn shift(ms: u64, offset: i64) -> u64 {
    (ms as i64 + offset).max(0) as u64
}

/// Deterministic per-call jitter source derived from the configured seed, a
/// stage salt, and the call's input.
pub fn jitter_rng(seed: u64, stage: &str, input: &[u8]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    hasher.update(input);
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
