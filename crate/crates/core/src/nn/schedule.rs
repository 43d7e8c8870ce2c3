use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Staircase exponential decay: `base * decay^floor(step / period)`.
pub fn lr_schedule(step: u64, base: f64, decay: f64, period: u64) -> f64 {
    base * decay.powi((step / period.max(1)) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub period: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 1e-3,
            decay: 0.9,
            period: 1000,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(Error::InvalidConfig(format!("base learning rate must be positive, got {}", self.base)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidConfig(format!("decay rate must be in (0, 1], got {}", self.decay)));
        }
        if self.period == 0 {
            return Err(Error::InvalidConfig("decay period must be at least 1".into()));
        }
        Ok(())
    }

    pub fn at(&self, step: u64) -> f64 {
        lr_schedule(step, self.base, self.decay, self.period)
    }
}
