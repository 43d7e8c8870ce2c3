//! Viscous Burgers `s_t + s s_x = nu s_xx` on the periodic unit interval.
//!
//! Fourier pseudo-spectral in space with 2/3-rule dealiasing, and fourth-order
//! Runge-Kutta in time with an integrating factor for the viscous term.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::reaction_diffusion::SpaceTimeField;

/// Largest `dt * max|s| * k_max` accepted; RK4's stability interval on the
/// imaginary axis is `2 sqrt 2`.
const CFL_LIMIT: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burgers {
    pub nu: f64,
    /// Internal collocation points; must be a multiple of the input grid size.
    pub n_internal: usize,
    pub dt_max: f64,
}

impl Default for Burgers {
    fn default() -> Self {
        Self {
            nu: 0.01,
            n_internal: 400,
            dt_max: 2e-4,
        }
    }
}

/// Sampled solution plus conserved and dissipated quantities at each output time,
/// computed from the full spectral state.
#[derive(Debug, Clone)]
pub struct BurgersSolution {
    pub field: SpaceTimeField,
    /// `int_0^1 s dx`.
    pub mean: Vec<f64>,
    /// `int_0^1 s^2 dx`.
    pub energy: Vec<f64>,
}

struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `2 pi kappa` per FFT slot.
    wave: Vec<f64>,
    keep: Vec<bool>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let cutoff = n / 3;
        let mut wave = vec![0.0; n];
        let mut keep = vec![false; n];
        for (j, (w, k)) in wave.iter_mut().zip(keep.iter_mut()).enumerate() {
            let kappa = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
            *w = 2.0 * PI * kappa as f64;
            *k = kappa.unsigned_abs() as usize <= cutoff && !(n % 2 == 0 && j == n / 2);
        }
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            wave,
            keep,
            scratch: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Dealiased `-(s^2 / 2)_x` in normalized coefficients.
    fn nonlinear(&mut self, c: &[Complex64], out: &mut [Complex64]) {
        self.scratch.copy_from_slice(c);
        self.inverse.process(&mut self.scratch);
        for v in self.scratch.iter_mut() {
            *v = Complex64::new(0.5 * v.re * v.re, 0.0);
        }
        self.forward.process(&mut self.scratch);
        let inv_n = 1.0 / self.n as f64;
        for j in 0..self.n {
            out[j] = if self.keep[j] {
                -Complex64::new(0.0, self.wave[j]) * self.scratch[j] * inv_n
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }

    fn to_physical(&mut self, c: &[Complex64]) -> Vec<f64> {
        self.scratch.copy_from_slice(c);
        self.inverse.process(&mut self.scratch);
        self.scratch.iter().map(|v| v.re).collect()
    }
}

impl Burgers {
    fn validate(&self, n_in: usize) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("viscosity must be positive, got {}", self.nu)));
        }
        if n_in < 2 || self.n_internal < n_in || self.n_internal % n_in != 0 {
            return Err(Error::InvalidGrid(format!(
                "internal grid of {} points must be a multiple of the {}-point input grid",
                self.n_internal, n_in
            )));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::InvalidConfig("time step must be positive".into()));
        }
        Ok(())
    }

    /// Evolves `u0` (given on `x_j = j / n`) and samples the solution on the same
    /// grid at the increasing times `out_t`.
    pub fn solve(&self, u0: &[f64], out_t: &[f64]) -> Result<BurgersSolution> {
        let n_in = u0.len();
        self.validate(n_in)?;
        if out_t.is_empty() || out_t[0] < 0.0 || out_t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("output times must be non-negative and increasing".into()));
        }
        let n = self.n_internal;
        let stride = n / n_in;
        let mut sp = Spectral::new(n);

        // trigonometric interpolation of the input onto the internal grid
        let mut small: Vec<Complex64> = u0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n_in).process(&mut small);
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        for (j, v) in small.iter().enumerate() {
            let v = v / n_in as f64;
            if n_in % 2 == 0 && j == n_in / 2 {
                if n > n_in {
                    c[n_in / 2] += v * 0.5;
                    c[n - n_in / 2] += v * 0.5;
                } else {
                    c[j] = v;
                }
            } else if j <= n_in / 2 {
                c[j] = v;
            } else {
                c[n - (n_in - j)] = v;
            }
        }

        let mut k1 = vec![Complex64::new(0.0, 0.0); n];
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut tmp = k1.clone();
        let mut values = Vec::with_capacity(out_t.len() * n_in);
        let mut mean = Vec::with_capacity(out_t.len());
        let mut energy = Vec::with_capacity(out_t.len());
        let mut t = 0.0;
        let kmax = sp.wave.iter().zip(&sp.keep).filter(|(_, k)| **k).map(|(w, _)| w.abs()).fold(0.0, f64::max);
        for &target in out_t {
            let span = target - t;
            if span > 0.0 {
                let steps = (span / self.dt_max - 1e-9).ceil().max(1.0) as usize;
                let dt = span / steps as f64;
                let e: Vec<f64> = sp.wave.iter().map(|w| (-self.nu * w * w * dt).exp()).collect();
                let e2: Vec<f64> = sp.wave.iter().map(|w| (-self.nu * w * w * dt * 0.5).exp()).collect();
                let umax = sp.to_physical(&c).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let cfl = dt * umax * kmax;
                if cfl > CFL_LIMIT {
                    return Err(Error::SolverUnstable(format!(
                        "CFL number {cfl:.3} exceeds {CFL_LIMIT} at t = {t:.4}; use a smaller time step"
                    )));
                }
                for _ in 0..steps {
                    sp.nonlinear(&c, &mut k1);
                    for j in 0..n {
                        tmp[j] = e2[j] * (c[j] + 0.5 * dt * k1[j]);
                    }
                    sp.nonlinear(&tmp, &mut k2);
                    for j in 0..n {
                        tmp[j] = e2[j] * c[j] + 0.5 * dt * k2[j];
                    }
                    sp.nonlinear(&tmp, &mut k3);
                    for j in 0..n {
                        tmp[j] = e[j] * c[j] + dt * e2[j] * k3[j];
                    }
                    sp.nonlinear(&tmp, &mut k4);
                    for j in 0..n {
                        c[j] = e[j] * c[j] + dt / 6.0 * (e[j] * k1[j] + 2.0 * e2[j] * (k2[j] + k3[j]) + k4[j]);
                    }
                }
                t = target;
                let phys = sp.to_physical(&c);
                if phys.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SolverUnstable(format!(
                        "non-finite solution by t = {target:.4}; use a smaller time step"
                    )));
                }
                values.extend(phys.iter().step_by(stride));
            } else {
                values.extend(sp.to_physical(&c).iter().step_by(stride));
            }
            mean.push(c[0].re);
            energy.push(c.iter().map(|v| v.norm_sqr()).sum());
        }
        Ok(BurgersSolution {
            field: SpaceTimeField {
                x: (0..n_in).map(|j| j as f64 / n_in as f64).collect(),
                t: out_t.to_vec(),
                values,
            },
            mean,
            energy,
        })
    }
}
