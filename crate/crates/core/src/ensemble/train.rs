//! Member-parallel training.
//!
//! Iterations run in chunks: the shared query draws for a chunk are made
//! once, then every member advances through the chunk on its own worker.
//! Within a member the arithmetic is sequential, so results do not depend on
//! the number of workers.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{loss_grad_with, Architecture, Batch, LossMode, PriorFeatures, RpDeepONet};
use crate::nn::{AdamState, LrSchedule, Real};

use super::sampler::HierarchicalSampler;
use super::EnsembleModel;

const CHUNK: u64 = 1000;
/// Loss is recorded at every iteration divisible by this.
pub const HISTORY_CADENCE: u64 = 100;
/// Prior outputs on the whole training set are cached when they fit in this many bytes.
const PRIOR_CACHE_LIMIT: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: u64,
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_steps: u64,
    /// Functions per member per iteration (`N_b`).
    pub batch_functions: usize,
    /// Query points per iteration, shared by all members (`P`).
    pub batch_queries: usize,
    pub loss: LossMode,
    pub seed: u64,
    pub precision: Precision,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            learning_rate: 1e-3,
            decay_rate: 0.9,
            decay_steps: 1000,
            batch_functions: 64,
            batch_queries: 64,
            loss: LossMode::Scaled,
            seed: 0,
            precision: Precision::F64,
            workers: None,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.learning_rate,
            decay: self.decay_rate,
            period: self.decay_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.batch_functions == 0 || self.batch_queries == 0 {
            return Err(Error::InvalidConfig("batch sizes must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        self.schedule().validate()
    }
}

/// Losses recorded every [`HISTORY_CADENCE`] iterations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub iterations: Vec<u64>,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub members: Vec<LossHistory>,
    pub elapsed: Duration,
}

/// Training set laid out for batching, in the working precision.
#[derive(Debug, Clone)]
pub struct TrainingData<T = f64> {
    /// `N x (m d_u)`.
    pub u: Vec<T>,
    /// `M x trunk input`, after any harmonic expansion.
    pub y: Vec<T>,
    /// `N x M x d_s`.
    pub s: Vec<T>,
    pub s_inf: Vec<T>,
    pub n_functions: usize,
    pub n_queries: usize,
    pub d_s: usize,
}

impl<T: Real> TrainingData<T> {
    pub fn new(arch: &Architecture, ds: &Dataset) -> Result<Self> {
        let cast = |v: &[f64]| v.iter().map(|&x| T::real(x)).collect::<Vec<T>>();
        let feats = arch.trunk_features(&ds.y)?;
        Ok(Self {
            u: ds.pairs.iter().flat_map(|p| cast(&p.u)).collect(),
            y: cast(&feats),
            s: ds.pairs.iter().flat_map(|p| cast(&p.s)).collect(),
            s_inf: ds.pairs.iter().map(|p| T::real(p.s_inf)).collect(),
            n_functions: ds.len(),
            n_queries: ds.queries(),
            d_s: arch.d_s,
        })
    }

    fn u_width(&self) -> usize {
        self.u.len() / self.n_functions
    }

    fn y_width(&self) -> usize {
        self.y.len() / self.n_queries
    }

    fn gather(&self, functions: &[usize], queries: &[usize], batch: &mut Batch<T>) {
        let (uw, yw, d_s) = (self.u_width(), self.y_width(), self.d_s);
        let row = self.n_queries * d_s;
        batch.u.clear();
        batch.y.clear();
        batch.s.clear();
        batch.s_inf.clear();
        for &f in functions {
            batch.u.extend_from_slice(&self.u[f * uw..(f + 1) * uw]);
            batch.s_inf.push(self.s_inf[f]);
            let s = &self.s[f * row..(f + 1) * row];
            for &q in queries {
                batch.s.extend_from_slice(&s[q * d_s..(q + 1) * d_s]);
            }
        }
        for &q in queries {
            batch.y.extend_from_slice(&self.y[q * yw..(q + 1) * yw]);
        }
        batch.n_functions = functions.len();
        batch.n_queries = queries.len();
    }
}

fn rows<T: Copy>(src: &[T], width: usize, idx: &[usize], out: &mut Vec<T>) {
    out.clear();
    for &i in idx {
        out.extend_from_slice(&src[i * width..(i + 1) * width]);
    }
}

/// The `N_b x P` grid batch of member `member` at `iteration`.
pub fn sample_batch<T: Real>(
    data: &TrainingData<T>,
    sampler: &HierarchicalSampler,
    member: u64,
    iteration: u64,
) -> Batch<T> {
    let queries = sampler.query_indices(iteration);
    let functions = sampler.function_indices(member, iteration);
    let mut batch = empty_batch();
    data.gather(&functions, &queries, &mut batch);
    batch
}

fn empty_batch<T>() -> Batch<T> {
    Batch {
        u: Vec::new(),
        y: Vec::new(),
        s: Vec::new(),
        s_inf: Vec::new(),
        n_functions: 0,
        n_queries: 0,
    }
}

struct Worker<T> {
    id: u64,
    model: RpDeepONet<T>,
    adam_branch: AdamState<T>,
    adam_trunk: AdamState<T>,
    history: LossHistory,
    prior_cache: Option<PriorFeatures<T>>,
    batch: Batch<T>,
    prior_batch: PriorFeatures<T>,
}

fn tag(err: Error, member: u64, iteration: u64) -> Error {
    match err {
        Error::TrainingDiverged(mut d) => {
            d.member = Some(member as usize);
            d.iteration = Some(iteration);
            Error::TrainingDiverged(d)
        }
        other => other,
    }
}

impl<T: Real> Worker<T> {
    fn advance(
        &mut self,
        data: &TrainingData<T>,
        sampler: &HierarchicalSampler,
        queries: &[Vec<usize>],
        first: u64,
        cfg: &TrainConfig,
        cache_prior: bool,
    ) -> Result<()> {
        let use_prior = self.model.beta() != 0.0;
        if use_prior && cache_prior && self.prior_cache.is_none() {
            self.prior_cache = Some(self.model.prior_features(&data.u, data.n_functions, &data.y, data.n_queries)?);
        }
        let width = self.model.trainable.latent() * self.model.trainable.d_s();
        let schedule = cfg.schedule();
        for (k, q) in queries.iter().enumerate() {
            let it = first + k as u64;
            let f = sampler.function_indices(self.id, it);
            data.gather(&f, q, &mut self.batch);
            let prior = if !use_prior {
                None
            } else if let Some(cache) = &self.prior_cache {
                rows(&cache.branch, width, &f, &mut self.prior_batch.branch);
                rows(&cache.trunk, width, q, &mut self.prior_batch.trunk);
                Some(&self.prior_batch)
            } else {
                self.prior_batch = self.model.prior_features(
                    &self.batch.u,
                    self.batch.n_functions,
                    &self.batch.y,
                    self.batch.n_queries,
                )?;
                Some(&self.prior_batch)
            };
            let (loss, grads) = loss_grad_with(&self.model, &self.batch, prior, cfg.loss)?;
            if !loss.is_finite() {
                return Err(tag(Error::diverged(format!("loss is {loss}")), self.id, it));
            }
            if it % HISTORY_CADENCE == 0 {
                self.history.iterations.push(it);
                self.history.losses.push(loss);
            }
            let lr = schedule.at(it);
            self.adam_branch
                .update(&mut self.model.trainable.branch, &grads.branch, lr)
                .map_err(|e| tag(e, self.id, it))?;
            self.adam_trunk
                .update(&mut self.model.trainable.trunk, &grads.trunk, lr)
                .map_err(|e| tag(e, self.id, it))?;
        }
        Ok(())
    }
}

fn run<T: Real>(e: &mut EnsembleModel, ds: &Dataset, cfg: &TrainConfig, sampler: &HierarchicalSampler) -> Result<Vec<LossHistory>> {
    let data = TrainingData::<T>::new(&e.arch, ds)?;
    let width = e.arch.latent * e.arch.d_s;
    let cache_bytes = e.len() * (data.n_functions + data.n_queries) * width * std::mem::size_of::<T>();
    let cache_prior = cache_bytes <= PRIOR_CACHE_LIMIT;
    let mut workers: Vec<Worker<T>> = e
        .members
        .iter()
        .map(|m| Worker {
            id: m.id,
            model: m.model.cast(),
            adam_branch: m.adam_branch.cast(),
            adam_trunk: m.adam_trunk.cast(),
            history: LossHistory::default(),
            prior_cache: None,
            batch: empty_batch(),
            prior_batch: PriorFeatures {
                branch: Vec::new(),
                trunk: Vec::new(),
            },
        })
        .collect();
    let end = e.step + cfg.iterations;
    let mut first = e.step;
    while first < end {
        let last = (first + CHUNK).min(end);
        let queries: Vec<Vec<usize>> = (first..last).map(|it| sampler.query_indices(it)).collect();
        workers
            .par_iter_mut()
            .map(|w| w.advance(&data, sampler, &queries, first, cfg, cache_prior))
            .collect::<Result<Vec<()>>>()?;
        first = last;
    }
    let mut histories = Vec::with_capacity(workers.len());
    for (m, w) in e.members.iter_mut().zip(workers) {
        m.model.trainable = w.model.trainable.cast();
        m.adam_branch = w.adam_branch.cast();
        m.adam_trunk = w.adam_trunk.cast();
        histories.push(w.history);
    }
    e.step = end;
    Ok(histories)
}

pub(crate) fn train_in_place(e: &mut EnsembleModel, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    e.check_dataset(ds)?;
    let sampler = HierarchicalSampler::new(cfg.seed, ds.len(), ds.queries(), cfg.batch_functions, cfg.batch_queries)?;
    let start = Instant::now();
    let go = |e: &mut EnsembleModel| match cfg.precision {
        Precision::F64 => run::<f64>(e, ds, cfg, &sampler),
        Precision::F32 => run::<f32>(e, ds, cfg, &sampler),
    };
    // train on a copy so a failure leaves the caller's ensemble untouched
    let mut work = e.clone();
    let members = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|err| Error::InvalidConfig(format!("cannot start {n} workers: {err}")))?
            .install(|| go(&mut work))?,
        None => go(&mut work)?,
    };
    *e = work;
    Ok(TrainHistory {
        members,
        elapsed: start.elapsed(),
    })
}

/// Value-returning form of [`EnsembleModel::train`].
pub fn train(mut ensemble: EnsembleModel, data: &Dataset, cfg: &TrainConfig) -> Result<(EnsembleModel, TrainHistory)> {
    let history = ensemble.train(data, cfg)?;
    Ok((ensemble, history))
}
