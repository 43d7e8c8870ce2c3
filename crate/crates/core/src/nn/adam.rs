use serde::{Deserialize, Serialize};

use super::mlp::{MlpGrads, MlpParams};
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers and step counter for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f64> {
    pub m: MlpGrads<T>,
    pub v: MlpGrads<T>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &MlpParams<T>) -> Self {
        Self::with_config(params, AdamConfig::default())
    }

    pub fn with_config(params: &MlpParams<T>, config: AdamConfig) -> Self {
        Self {
            m: MlpGrads::zeros_like(params),
            v: MlpGrads::zeros_like(params),
            t: 0,
            config,
        }
    }

    pub fn cast<U: Real>(&self) -> AdamState<U> {
        AdamState {
            m: self.m.cast(),
            v: self.v.cast(),
            t: self.t,
            config: self.config,
        }
    }

    /// Applies one bias-corrected Adam update. Nothing is modified when the
    /// gradient contains a non-finite entry.
    pub fn update(&mut self, params: &mut MlpParams<T>, grads: &MlpGrads<T>, lr: f64) -> Result<()> {
        if !(grads.matches(params) && self.m.matches(params)) {
            return Err(Error::Shape("gradient layout does not match parameters".into()));
        }
        if !(lr > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
        }
        if let Some(path) = grads.first_non_finite() {
            return Err(Error::diverged(format!("non-finite gradient at {path}")));
        }
        self.t += 1;
        let c = self.config;
        let b1 = T::real(c.beta1);
        let b2 = T::real(c.beta2);
        let one = T::one();
        let bc1 = T::real(1.0 - c.beta1.powf(self.t as f64));
        let bc2 = T::real(1.0 - c.beta2.powf(self.t as f64));
        let lr = T::real(lr);
        let eps = T::real(c.eps);
        let entries = params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()));
        for ((w, &g), (m, v)) in entries {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Value-returning form of [`AdamState::update`].
pub fn adam_step<T: Real>(
    mut params: MlpParams<T>,
    grads: &MlpGrads<T>,
    mut state: AdamState<T>,
    lr: f64,
) -> Result<(MlpParams<T>, AdamState<T>)> {
    state.update(&mut params, grads, lr)?;
    Ok((params, state))
}
