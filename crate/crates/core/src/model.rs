//! DeepONet with randomized priors.
//!
//! A DeepONet predicts `sum_i b_i(u) t_i(y)` from a branch network `b` fed
//! with the sensor values of the input function and a trunk network `t` fed
//! with a query location. The randomized-prior variant adds a frozen,
//! independently initialized copy of both networks scaled by `beta`:
//!
//! ```text
//! b_hat(u) = b_phi(u) + beta * b_Phi(u)
//! t_hat(y) = t_psi(y) + beta * t_Psi(y)
//! F(u)(y)  = sum_i b_hat_i(u) t_hat_i(y)
//! ```
//!
//! Only `phi` and `psi` are ever differentiated or updated.
//!
//! With `d_s > 1` output channels the `n * d_s` network outputs are split into
//! `d_s` consecutive blocks of `n` latent features, one block per channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::harmonic_expand;
use crate::error::{Error, Result};
use crate::nn::{gemm, Activation, MlpGrads, MlpParams, Real, View};

/// Shape of a DeepONet, shared by every member of an ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Branch widths: `[m * d_u, hidden.., n * d_s]`.
    pub branch_widths: Vec<usize>,
    /// Trunk widths: `[d_y * (2H + 1), hidden.., n * d_s]` (`d_y` when `H = 0`).
    pub trunk_widths: Vec<usize>,
    pub latent: usize,
    pub d_u: usize,
    pub d_s: usize,
    pub d_y: usize,
    /// Order of the harmonic feature expansion applied to query locations (0 = off).
    pub harmonics: usize,
    pub activation: Activation,
}

impl Architecture {
    /// Uniform hidden layers for both networks.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        sensors: usize,
        d_u: usize,
        d_y: usize,
        d_s: usize,
        depth: usize,
        width: usize,
        latent: usize,
        harmonics: usize,
    ) -> Result<Self> {
        let out = latent * d_s;
        let mut branch = vec![sensors * d_u];
        let mut trunk = vec![d_y * (2 * harmonics + 1)];
        for _ in 0..depth {
            branch.push(width);
            trunk.push(width);
        }
        branch.push(out);
        trunk.push(out);
        let arch = Self {
            branch_widths: branch,
            trunk_widths: trunk,
            latent,
            d_u,
            d_s,
            d_y,
            harmonics,
            activation: Activation::Tanh,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        crate::nn::validate_widths(&self.branch_widths)?;
        crate::nn::validate_widths(&self.trunk_widths)?;
        if self.latent == 0 || self.d_s == 0 || self.d_u == 0 || self.d_y == 0 {
            return Err(Error::InvalidArchitecture(
                "latent width and channel dimensions must be positive".into(),
            ));
        }
        let out = self.latent * self.d_s;
        if *self.branch_widths.last().unwrap() != out || *self.trunk_widths.last().unwrap() != out {
            return Err(Error::InvalidArchitecture(format!(
                "branch and trunk must both end in n*d_s = {out} features"
            )));
        }
        if self.trunk_widths[0] != self.trunk_input_dim() {
            return Err(Error::InvalidArchitecture(format!(
                "trunk input width {} does not match d_y = {} with {} harmonics",
                self.trunk_widths[0], self.d_y, self.harmonics
            )));
        }
        if self.branch_widths[0] % self.d_u != 0 {
            return Err(Error::InvalidArchitecture(format!(
                "branch input width {} is not a multiple of d_u = {}",
                self.branch_widths[0], self.d_u
            )));
        }
        Ok(())
    }

    pub fn sensors(&self) -> usize {
        self.branch_widths[0] / self.d_u
    }

    pub fn trunk_input_dim(&self) -> usize {
        self.d_y * (2 * self.harmonics + 1)
    }

    /// Maps raw query locations (`count x d_y`) to trunk inputs.
    pub fn trunk_features(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() % self.d_y != 0 {
            return Err(Error::Shape(format!(
                "query buffer of {} values is not a multiple of d_y = {}",
                y.len(),
                self.d_y
            )));
        }
        if self.harmonics == 0 {
            return Ok(y.to_vec());
        }
        let mut out = Vec::with_capacity(y.len() / self.d_y * self.trunk_input_dim());
        for point in y.chunks_exact(self.d_y) {
            out.extend(harmonic_expand(point, self.harmonics)?);
        }
        Ok(out)
    }
}

/// Branch and trunk parameters of one DeepONet.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepONetParams<T = f64> {
    pub branch: MlpParams<T>,
    pub trunk: MlpParams<T>,
    latent: usize,
    d_s: usize,
}

/// Gradients over one DeepONet's branch and trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepONetGrads<T = f64> {
    pub branch: MlpGrads<T>,
    pub trunk: MlpGrads<T>,
}

impl<T: Real> DeepONetGrads<T> {
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.branch.iter().chain(self.trunk.iter())
    }
}

impl<T: Real> DeepONetParams<T> {
    pub fn new(branch: MlpParams<T>, trunk: MlpParams<T>, latent: usize, d_s: usize) -> Result<Self> {
        if latent == 0 || d_s == 0 {
            return Err(Error::InvalidArchitecture("latent width and d_s must be positive".into()));
        }
        let out = latent * d_s;
        if branch.output_dim() != out || trunk.output_dim() != out {
            return Err(Error::InvalidArchitecture(format!(
                "branch ({}) and trunk ({}) outputs must equal n*d_s = {out}",
                branch.output_dim(),
                trunk.output_dim()
            )));
        }
        Ok(Self {
            branch,
            trunk,
            latent,
            d_s,
        })
    }

    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let branch = MlpParams::glorot(&arch.branch_widths, arch.activation, rng)?;
        let trunk = MlpParams::glorot(&arch.trunk_widths, arch.activation, rng)?;
        Self::new(branch, trunk, arch.latent, arch.d_s)
    }

    pub fn latent(&self) -> usize {
        self.latent
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.branch.iter().chain(self.trunk.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.branch.iter_mut().chain(self.trunk.iter_mut())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.latent == other.latent
            && self.d_s == other.d_s
            && self.branch.same_shape(&other.branch)
            && self.trunk.same_shape(&other.trunk)
    }

    pub fn cast<U: Real>(&self) -> DeepONetParams<U> {
        DeepONetParams {
            branch: self.branch.cast(),
            trunk: self.trunk.cast(),
            latent: self.latent,
            d_s: self.d_s,
        }
    }

    /// Predictions for every (function, query) combination: `(nu x nq x d_s)`.
    pub fn predict_grid(&self, u: &[T], nu: usize, y: &[T], nq: usize) -> Result<Vec<T>> {
        let b = self.branch.forward_batch(u, nu)?;
        let t = self.trunk.forward_batch(y, nq)?;
        Ok(contract(&b, nu, &t, nq, self.latent, self.d_s))
    }
}

/// Single-point DeepONet evaluation; returns `d_s` values.
pub fn deeponet_forward<T: Real>(p: &DeepONetParams<T>, u: &[T], y: &[T]) -> Result<Vec<T>> {
    p.predict_grid(u, 1, y, 1)
}

/// `out[i, j, c] = sum_k b[i, c*n + k] * t[j, c*n + k]`.
pub(crate) fn contract<T: Real>(b: &[T], nu: usize, t: &[T], nq: usize, latent: usize, d_s: usize) -> Vec<T> {
    let w = latent * d_s;
    let mut out = vec![T::zero(); nu * nq * d_s];
    if d_s == 1 {
        gemm(
            View::row_major(b, nu, latent, w),
            View::row_major(t, nq, latent, w).t(),
            T::zero(),
            &mut out,
            nq,
        );
        return out;
    }
    let mut tmp = vec![T::zero(); nu * nq];
    for c in 0..d_s {
        gemm(
            View::row_major(&b[c * latent..], nu, latent, w),
            View::row_major(&t[c * latent..], nq, latent, w).t(),
            T::zero(),
            &mut tmp,
            nq,
        );
        for (k, v) in tmp.iter().enumerate() {
            out[k * d_s + c] = *v;
        }
    }
    out
}

/// A DeepONet whose features are shifted by a frozen, `beta`-scaled prior.
#[derive(Debug, Clone, PartialEq)]
pub struct RpDeepONet<T = f64> {
    pub trainable: DeepONetParams<T>,
    prior: DeepONetParams<T>,
    beta: f64,
}

impl<T: Real> RpDeepONet<T> {
    pub fn new(trainable: DeepONetParams<T>, prior: DeepONetParams<T>, beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be a finite non-negative number, got {beta}")));
        }
        if !trainable.same_shape(&prior) {
            return Err(Error::InvalidArchitecture(
                "trainable and prior networks must share one architecture".into(),
            ));
        }
        Ok(Self {
            trainable,
            prior,
            beta,
        })
    }

    pub fn init<R: Rng + ?Sized>(arch: &Architecture, beta: f64, rng: &mut R) -> Result<Self> {
        let trainable = DeepONetParams::init(arch, rng)?;
        let prior = DeepONetParams::init(arch, rng)?;
        Self::new(trainable, prior, beta)
    }

    pub fn prior(&self) -> &DeepONetParams<T> {
        &self.prior
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cast<U: Real>(&self) -> RpDeepONet<U> {
        RpDeepONet {
            trainable: self.trainable.cast(),
            prior: self.prior.cast(),
            beta: self.beta,
        }
    }

    /// Prior branch features for `nu` inputs and prior trunk features for `nq` queries.
    pub fn prior_features(&self, u: &[T], nu: usize, y: &[T], nq: usize) -> Result<PriorFeatures<T>> {
        Ok(PriorFeatures {
            branch: self.prior.branch.forward_batch(u, nu)?,
            trunk: self.prior.trunk.forward_batch(y, nq)?,
        })
    }

    pub fn predict_grid(&self, u: &[T], nu: usize, y: &[T], nq: usize) -> Result<Vec<T>> {
        if self.beta == 0.0 {
            return self.trainable.predict_grid(u, nu, y, nq);
        }
        let prior = self.prior_features(u, nu, y, nq)?;
        self.predict_grid_with(u, nu, y, nq, &prior)
    }

    pub(crate) fn predict_grid_with(
        &self,
        u: &[T],
        nu: usize,
        y: &[T],
        nq: usize,
        prior: &PriorFeatures<T>,
    ) -> Result<Vec<T>> {
        let mut b = self.trainable.branch.forward_batch(u, nu)?;
        let mut t = self.trainable.trunk.forward_batch(y, nq)?;
        self.shift(&mut b, &prior.branch)?;
        self.shift(&mut t, &prior.trunk)?;
        Ok(contract(&b, nu, &t, nq, self.trainable.latent, self.trainable.d_s))
    }

    fn shift(&self, features: &mut [T], prior: &[T]) -> Result<()> {
        if self.beta == 0.0 {
            return Ok(());
        }
        if features.len() != prior.len() {
            return Err(Error::Shape(format!(
                "prior features have {} values, expected {}",
                prior.len(),
                features.len()
            )));
        }
        let beta = T::real(self.beta);
        for (f, &p) in features.iter_mut().zip(prior) {
            *f = *f + beta * p;
        }
        Ok(())
    }
}

/// Single-point randomized-prior prediction; returns `d_s` values.
pub fn rp_forward<T: Real>(m: &RpDeepONet<T>, u: &[T], y: &[T]) -> Result<Vec<T>> {
    m.predict_grid(u, 1, y, 1)
}

/// Frozen prior outputs on a set of inputs; they never depend on training.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorFeatures<T> {
    pub branch: Vec<T>,
    pub trunk: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Plain mean squared error.
    Unscaled,
    /// Squared error divided by the squared infinity norm of each target function.
    #[default]
    Scaled,
}

/// A grid mini-batch: `n_functions` input functions, each paired with the
/// same `n_queries` query points.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T = f64> {
    /// `(n_functions x branch input)` sensor values.
    pub u: Vec<T>,
    /// `(n_queries x trunk input)` query features.
    pub y: Vec<T>,
    /// `(n_functions x n_queries x d_s)` targets.
    pub s: Vec<T>,
    /// Per-function `|s|_inf`, computed over the full stored output function.
    pub s_inf: Vec<T>,
    pub n_functions: usize,
    pub n_queries: usize,
}

impl<T: Real> Batch<T> {
    pub fn new(u: Vec<T>, y: Vec<T>, s: Vec<T>, s_inf: Vec<T>, n_functions: usize, n_queries: usize) -> Result<Self> {
        if n_functions == 0 || n_queries == 0 {
            return Err(Error::EmptyBatch);
        }
        if s_inf.len() != n_functions || s.len() % (n_functions * n_queries) != 0 || u.len() % n_functions != 0 || y.len() % n_queries != 0 {
            return Err(Error::Shape(format!(
                "inconsistent batch: {} functions, {} queries, |u|={}, |y|={}, |s|={}, |s_inf|={}",
                n_functions,
                n_queries,
                u.len(),
                y.len(),
                s.len(),
                s_inf.len()
            )));
        }
        Ok(Self {
            u,
            y,
            s,
            s_inf,
            n_functions,
            n_queries,
        })
    }

    fn check_against(&self, m: &RpDeepONet<T>) -> Result<()> {
        if self.n_functions == 0 || self.n_queries == 0 {
            return Err(Error::EmptyBatch);
        }
        let d_s = m.trainable.d_s;
        if self.s.len() != self.n_functions * self.n_queries * d_s
            || self.u.len() != self.n_functions * m.trainable.branch.input_dim()
            || self.y.len() != self.n_queries * m.trainable.trunk.input_dim()
        {
            return Err(Error::Shape("batch does not match the model architecture".into()));
        }
        Ok(())
    }

    fn weights(&self, mode: LossMode) -> Result<Vec<T>> {
        match mode {
            LossMode::Unscaled => Ok(vec![T::one(); self.n_functions]),
            LossMode::Scaled => self
                .s_inf
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    if n > T::zero() && n.is_finite() {
                        Ok(T::one() / (n * n))
                    } else {
                        Err(Error::DegenerateTarget(format!("function {i} has |s|_inf = {n}")))
                    }
                })
                .collect(),
        }
    }
}

pub fn loss_unscaled<T: Real>(m: &RpDeepONet<T>, batch: &Batch<T>) -> Result<f64> {
    loss(m, batch, LossMode::Unscaled)
}

pub fn loss_scaled<T: Real>(m: &RpDeepONet<T>, batch: &Batch<T>) -> Result<f64> {
    loss(m, batch, LossMode::Scaled)
}

pub fn loss<T: Real>(m: &RpDeepONet<T>, batch: &Batch<T>, mode: LossMode) -> Result<f64> {
    batch.check_against(m)?;
    let pred = m.predict_grid(&batch.u, batch.n_functions, &batch.y, batch.n_queries)?;
    let weights = batch.weights(mode)?;
    Ok(weighted_mse(&pred, &batch.s, &weights, batch.n_queries, m.trainable.d_s).as_f64())
}

/// `1/(N P) sum_i w_i sum_{j,c} (pred - s)^2`.
fn weighted_mse<T: Real>(pred: &[T], s: &[T], weights: &[T], n_queries: usize, d_s: usize) -> T {
    let per_fn = n_queries * d_s;
    let mut total = T::zero();
    for ((pr, tr), &w) in pred.chunks_exact(per_fn).zip(s.chunks_exact(per_fn)).zip(weights) {
        let mut acc = T::zero();
        for (&a, &b) in pr.iter().zip(tr) {
            let r = a - b;
            acc = acc + r * r;
        }
        total = total + w * acc;
    }
    total / T::real((weights.len() * n_queries) as f64)
}

/// Loss and gradients with respect to the trainable parameters only.
pub fn loss_grad<T: Real>(m: &RpDeepONet<T>, batch: &Batch<T>, mode: LossMode) -> Result<(f64, DeepONetGrads<T>)> {
    batch.check_against(m)?;
    let prior = if m.beta == 0.0 {
        None
    } else {
        Some(m.prior_features(&batch.u, batch.n_functions, &batch.y, batch.n_queries)?)
    };
    loss_grad_with(m, batch, prior.as_ref(), mode)
}

/// [`loss_grad`] with precomputed prior features (ignored when `beta == 0`).
pub(crate) fn loss_grad_with<T: Real>(
    m: &RpDeepONet<T>,
    batch: &Batch<T>,
    prior: Option<&PriorFeatures<T>>,
    mode: LossMode,
) -> Result<(f64, DeepONetGrads<T>)> {
    batch.check_against(m)?;
    let weights = batch.weights(mode)?;
    let (nu, nq) = (batch.n_functions, batch.n_queries);
    let net = &m.trainable;
    let (latent, d_s) = (net.latent, net.d_s);

    let b_trace = net.branch.forward_trace(&batch.u, nu)?;
    let t_trace = net.trunk.forward_trace(&batch.y, nq)?;
    let mut b = b_trace.output().to_vec();
    let mut t = t_trace.output().to_vec();
    if m.beta != 0.0 {
        let prior = prior.ok_or_else(|| Error::Shape("missing prior features".into()))?;
        m.shift(&mut b, &prior.branch)?;
        m.shift(&mut t, &prior.trunk)?;
    }
    let pred = contract(&b, nu, &t, nq, latent, d_s);

    // residual gradient dL/dpred = 2 w_i (pred - s) / (N P)
    let per_fn = nq * d_s;
    let scale = T::real(2.0 / (nu * nq) as f64);
    let mut total = T::zero();
    let mut g = vec![T::zero(); pred.len()];
    for (i, &w) in weights.iter().enumerate() {
        let range = i * per_fn..(i + 1) * per_fn;
        let mut acc = T::zero();
        for k in range {
            let r = pred[k] - batch.s[k];
            acc = acc + r * r;
            g[k] = scale * w * r;
        }
        total = total + w * acc;
    }
    let loss = (total / T::real((nu * nq) as f64)).as_f64();

    let width = latent * d_s;
    let mut db = vec![T::zero(); nu * width];
    let mut dt = vec![T::zero(); nq * width];
    for c in 0..d_s {
        let g_c = View {
            data: &g[c..],
            rows: nu,
            cols: nq,
            rs: nq * d_s,
            cs: d_s,
        };
        // dB_c = G_c * T_c, dT_c = G_c^T * B_c
        gemm(
            g_c,
            View::row_major(&t[c * latent..], nq, latent, width),
            T::zero(),
            &mut db[c * latent..],
            width,
        );
        gemm(
            g_c.t(),
            View::row_major(&b[c * latent..], nu, latent, width),
            T::zero(),
            &mut dt[c * latent..],
            width,
        );
    }
    let (branch, _) = net.branch.backward(&b_trace, &db)?;
    let (trunk, _) = net.trunk.backward(&t_trace, &dt)?;
    Ok((loss, DeepONetGrads { branch, trunk }))
}

/// Largest relative gap between [`loss_grad`] and central differences of
/// [`loss`] with step `h`, over every trainable parameter.
///
/// Each entry is compared relative to `max(|analytic|, |numeric|, 1e-3 * g)`
/// where `g` is the largest analytic entry (at least 1): central differences
/// carry an absolute rounding error near `eps * loss / h`, which swamps
/// entries that are tiny next to the rest of the gradient.
pub fn gradient_check(m: &RpDeepONet<f64>, batch: &Batch<f64>, mode: LossMode, h: f64) -> Result<f64> {
    let (_, g) = loss_grad(m, batch, mode)?;
    let analytic: Vec<f64> = g.iter().copied().collect();
    let scale = analytic.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut probe = m.clone();
    let mut worst = 0.0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let orig = *probe.trainable.iter().nth(idx).unwrap();
        *probe.trainable.iter_mut().nth(idx).unwrap() = orig + h;
        let plus = loss(&probe, batch, mode)?;
        *probe.trainable.iter_mut().nth(idx).unwrap() = orig - h;
        let minus = loss(&probe, batch, mode)?;
        *probe.trainable.iter_mut().nth(idx).unwrap() = orig;
        let fd = (plus - minus) / (2.0 * h);
        let denom = a.abs().max(fd.abs()).max(1e-3 * scale);
        worst = worst.max((fd - a).abs() / denom);
    }
    Ok(worst)
}
