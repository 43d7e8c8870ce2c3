//! Gaussian-process sampling with an exponential-quadratic kernel.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative jitter added to the kernel diagonal before factorization.
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-10;
const JITTER_ESCALATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub length_scale: f64,
    /// Output scale `k`; the kernel amplitude is `k^2`.
    pub output_scale: f64,
    /// Diagonal jitter; `None` means `1e-10 * k^2`.
    pub jitter: Option<f64>,
}

impl GpConfig {
    pub fn new(length_scale: f64, output_scale: f64) -> Self {
        Self {
            length_scale,
            output_scale,
            jitter: None,
        }
    }

    /// Output scale `10^alpha`.
    pub fn with_log_scale(length_scale: f64, alpha: f64) -> Self {
        Self::new(length_scale, 10f64.powf(alpha))
    }

    pub fn jitter(&self) -> f64 {
        // k = 0 still needs a positive diagonal to factor
        self.jitter
            .unwrap_or(DEFAULT_RELATIVE_JITTER * (self.output_scale * self.output_scale).max(1e-20))
    }

    fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("length scale must be positive, got {}", self.length_scale)));
        }
        if !self.output_scale.is_finite() || self.output_scale < 0.0 {
            return Err(Error::InvalidConfig(format!("output scale must be non-negative, got {}", self.output_scale)));
        }
        if !(self.jitter() > 0.0) {
            return Err(Error::InvalidConfig("jitter must be positive".into()));
        }
        Ok(())
    }
}

/// `k^2 exp(-(a-b)^2 / (2 l^2))`.
pub fn rbf_kernel(a: f64, b: f64, length_scale: f64, output_scale: f64) -> f64 {
    let d = (a - b) / length_scale;
    output_scale * output_scale * (-0.5 * d * d).exp()
}

/// A factorized GP prior on a fixed grid, reusable for many draws.
#[derive(Debug, Clone)]
pub struct GpSampler {
    factor: DMatrix<f64>,
    jitter: f64,
}

impl GpSampler {
    pub fn new(cfg: &GpConfig, grid: &[f64]) -> Result<Self> {
        cfg.validate()?;
        if grid.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        let n = grid.len();
        let kernel = DMatrix::from_fn(n, n, |i, j| rbf_kernel(grid[i], grid[j], cfg.length_scale, cfg.output_scale));
        let mut jitter = cfg.jitter();
        for attempt in 0..=JITTER_ESCALATIONS {
            let mut k = kernel.clone();
            for i in 0..n {
                k[(i, i)] += jitter;
            }
            if let Some(ch) = Cholesky::new(k) {
                return Ok(Self {
                    factor: ch.unpack(),
                    jitter,
                });
            }
            if attempt < JITTER_ESCALATIONS {
                jitter *= 10.0;
            }
        }
        Err(Error::NotPositiveDefinite { jitter })
    }

    /// Jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One draw `L z`, `z ~ N(0, I)`, multiplied by `scale`.
    pub fn sample_scaled<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Vec<f64> {
        let n = self.len();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += self.factor[(i, j)] * zj;
            }
            *o = scale * acc;
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_scaled(1.0, rng)
    }
}

/// `count` independent draws from `N(0, K + jitter I)` on `grid`.
pub fn gp_sample<R: Rng + ?Sized>(cfg: &GpConfig, grid: &[f64], count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let sampler = GpSampler::new(cfg, grid)?;
    Ok((0..count).map(|_| sampler.sample(rng)).collect())
}
