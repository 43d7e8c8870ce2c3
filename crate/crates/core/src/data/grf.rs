//! Periodic Gaussian random fields with covariance `25^2 (-Laplacian + 25 I)^-2`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Standard deviation of the coefficient of wavenumber `kappa`.
pub fn grf_mode_std(kappa: usize) -> f64 {
    let w = 2.0 * PI * kappa as f64;
    25.0 / (w * w + 25.0)
}

/// A sample plus the largest imaginary part left by the inverse transform.
#[derive(Debug, Clone)]
pub struct GrfSample {
    pub values: Vec<f64>,
    pub imag_residue: f64,
}

/// Draws on the periodic grid `x_j = j / n`, `j = 0..n`.
///
/// The field is `sum_kappa std_kappa * xi_kappa * e_kappa(x)` with `e_kappa`
/// the orthonormal real Fourier basis (`1`, `sqrt 2 cos`, `sqrt 2 sin`, and the
/// alternating Nyquist mode for even `n`) and `xi ~ N(0, 1)`.
pub fn grf_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<GrfSample> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("periodic grid needs at least 2 points, got {n}")));
    }
    let mut coef = vec![Complex64::new(0.0, 0.0); n];
    coef[0] = Complex64::new(grf_mode_std(0) * rng.sample::<f64, _>(StandardNormal), 0.0);
    let half = (n - 1) / 2;
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    for kappa in 1..=half {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let c = Complex64::new(a, -b) * (grf_mode_std(kappa) * r2);
        coef[kappa] = c;
        coef[n - kappa] = c.conj();
    }
    if n % 2 == 0 {
        let a: f64 = rng.sample(StandardNormal);
        coef[n / 2] = Complex64::new(grf_mode_std(n / 2) * a, 0.0);
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut coef);
    let imag_residue = coef.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    Ok(GrfSample {
        values: coef.iter().map(|c| c.re).collect(),
        imag_residue,
    })
}

/// Coefficient of `sqrt 2 cos(2 pi kappa x)` (or the constant mode) in a sample.
pub fn cosine_mode(values: &[f64], kappa: usize) -> f64 {
    let n = values.len() as f64;
    let w = if kappa == 0 { 1.0 } else { 2f64.sqrt() };
    values
        .iter()
        .enumerate()
        .map(|(j, v)| v * w * (2.0 * PI * kappa as f64 * j as f64 / n).cos())
        .sum::<f64>()
        / n
}
