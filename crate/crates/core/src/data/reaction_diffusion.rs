//! `s_t = nu s_xx + k s^2 + u(x)` on `[0, 1]`, zero initial and boundary values.
//!
//! Diffusion is Crank-Nicolson on a uniform grid with second-order central
//! differences; the reaction and source terms use second-order
//! Adams-Bashforth (forward Euler for the first step).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::antiderivative::unit_grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionDiffusion {
    pub nu: f64,
    pub k: f64,
    /// Internal grid points including both boundaries.
    pub nx: usize,
    /// Upper bound on the time step; the actual step divides every output interval.
    pub dt_max: f64,
}

impl Default for ReactionDiffusion {
    fn default() -> Self {
        Self {
            nu: 0.01,
            k: 0.01,
            nx: 101,
            dt_max: 1e-3,
        }
    }
}

/// Solution sampled on an output space-time grid, time-major: `values[it * nx_out + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn at(&self, it: usize, ix: usize) -> f64 {
        self.values[it * self.x.len() + ix]
    }
}

/// Linear interpolation of `(xs, ys)` at `x`; `xs` increasing.
pub(crate) fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let hi = xs.partition_point(|&v| v <= x).min(n - 1);
    let lo = hi - 1;
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}

impl ReactionDiffusion {
    fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("diffusion coefficient must be positive, got {}", self.nu)));
        }
        if !self.k.is_finite() {
            return Err(Error::InvalidConfig("reaction rate must be finite".into()));
        }
        if self.nx < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 internal grid points, got {}", self.nx)));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::InvalidConfig("time step must be positive".into()));
        }
        Ok(())
    }

    /// Integrates with the source given at `sensors` and samples the solution at
    /// `out_x` (in `[0, 1]`) and at the increasing times `out_t` (from 0).
    pub fn solve(&self, source: &[f64], sensors: &[f64], out_x: &[f64], out_t: &[f64]) -> Result<SpaceTimeField> {
        self.validate()?;
        if source.len() != sensors.len() || sensors.len() < 2 {
            return Err(Error::Shape(format!("{} source values on {} sensors", source.len(), sensors.len())));
        }
        if out_t.is_empty() || out_x.is_empty() || out_t[0] < 0.0 || out_t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("output times must be non-negative and increasing".into()));
        }
        let nx = self.nx;
        let xs = unit_grid(nx);
        let dx = 1.0 / (nx - 1) as f64;
        let f: Vec<f64> = xs.iter().map(|&x| interp_linear(sensors, source, x)).collect();

        // interior unknowns 1..nx-1; (I - r/2 D) s_new = (I + r/2 D) s + dt * rhs
        let ni = nx - 2;
        let mut s = vec![0.0; nx];
        let mut prev_rhs: Option<Vec<f64>> = None;
        let mut values = Vec::with_capacity(out_t.len() * out_x.len());
        let mut t = 0.0;
        let mut cached: Option<(f64, Tridiag)> = None;
        let mut rhs = vec![0.0; ni];
        let mut b = vec![0.0; ni];
        for &target in out_t {
            let span = target - t;
            if span > 0.0 {
                let steps = (span / self.dt_max - 1e-9).ceil().max(1.0) as usize;
                let dt = span / steps as f64;
                let r = self.nu * dt / (dx * dx);
                let solver = match &cached {
                    Some((cdt, sol)) if *cdt == dt => sol.clone(),
                    _ => {
                        // a new step size restarts the multistep history
                        prev_rhs = None;
                        let sol = Tridiag::new(ni, -0.5 * r, 1.0 + r);
                        cached = Some((dt, sol.clone()));
                        sol
                    }
                };
                for _ in 0..steps {
                    for i in 0..ni {
                        let v = s[i + 1];
                        rhs[i] = self.k * v * v + f[i + 1];
                    }
                    let growth = 2.0 * self.k.abs() * dt * s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if growth > 0.5 {
                        return Err(Error::SolverUnstable(format!(
                            "explicit reaction step too large at t = {t:.4} (k dt |s| = {growth:.3}); use a smaller time step"
                        )));
                    }
                    for i in 0..ni {
                        let lap = s[i] - 2.0 * s[i + 1] + s[i + 2];
                        let explicit = match &prev_rhs {
                            Some(p) => 1.5 * rhs[i] - 0.5 * p[i],
                            None => rhs[i],
                        };
                        b[i] = s[i + 1] + 0.5 * r * lap + dt * explicit;
                    }
                    solver.solve(&mut b);
                    s[1..nx - 1].copy_from_slice(&b);
                    match &mut prev_rhs {
                        Some(p) => p.copy_from_slice(&rhs),
                        None => prev_rhs = Some(rhs.clone()),
                    }
                    t += dt;
                }
                t = target;
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SolverUnstable(format!(
                        "non-finite solution by t = {target}; use a smaller time step"
                    )));
                }
            }
            values.extend(out_x.iter().map(|&x| interp_linear(&xs, &s, x)));
        }
        Ok(SpaceTimeField {
            x: out_x.to_vec(),
            t: out_t.to_vec(),
            values,
        })
    }
}

/// Constant-coefficient symmetric tridiagonal system, pre-factored (Thomas algorithm).
#[derive(Debug, Clone)]
struct Tridiag {
    off: f64,
    /// Modified super-diagonal `c'` and inverse pivots.
    c: Vec<f64>,
    inv: Vec<f64>,
}

impl Tridiag {
    fn new(n: usize, off: f64, diag: f64) -> Self {
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let pivot = diag - off * prev_c;
            inv[i] = 1.0 / pivot;
            c[i] = off * inv[i];
            prev_c = c[i];
        }
        Self { off, c, inv }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        let mut prev = 0.0;
        for i in 0..n {
            b[i] = (b[i] - self.off * prev) * self.inv[i];
            prev = b[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            b[i] -= self.c[i] * b[i + 1];
        }
    }
}

/// Closed-form solution of the linear (`k = 0`) problem for a source given by
/// its sine coefficients `u(x) = sum_n coef[n-1] sin(n pi x)`.
pub fn linear_series_solution(coef: &[f64], nu: f64, x: f64, t: f64) -> f64 {
    let pi = std::f64::consts::PI;
    coef.iter()
        .enumerate()
        .map(|(i, &c)| {
            let n = (i + 1) as f64;
            let lam = nu * n * n * pi * pi;
            c / lam * (1.0 - (-lam * t).exp()) * (n * pi * x).sin()
        })
        .sum()
}
