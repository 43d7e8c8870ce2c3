//! Ensembles of randomized-prior DeepONets: construction, member-parallel
//! training, Monte Carlo prediction, and checkpoints.

mod checkpoint;
mod sampler;
mod stats;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint_header, save_checkpoint, CheckpointHeader, CKPT_MAGIC, CKPT_VERSION};
pub use sampler::HierarchicalSampler;
pub use stats::{population_stats, PredictiveStats};
pub use train::{sample_batch, train, LossHistory, Precision, TrainConfig, TrainHistory, TrainingData};

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Architecture, DeepONetParams, RpDeepONet};
use crate::nn::{checksum, AdamState};
use crate::rng::RngStream;

/// One ensemble member with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    /// Batch-sampling stream id; stays attached to the member if it is
    /// moved into another ensemble.
    pub id: u64,
    pub model: RpDeepONet,
    pub adam_branch: AdamState,
    pub adam_trunk: AdamState,
}

impl Member {
    fn new(id: u64, model: RpDeepONet) -> Self {
        let adam_branch = AdamState::new(&model.trainable.branch);
        let adam_trunk = AdamState::new(&model.trainable.trunk);
        Self {
            id,
            model,
            adam_branch,
            adam_trunk,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    arch: Architecture,
    beta: f64,
    seed: u64,
    step: u64,
    members: Vec<Member>,
}

/// `n_members` members; member `i` initializes its trainable and prior
/// networks (in that order) from stream `i + n_members` and samples batches
/// from stream `i`.
pub fn init_ensemble(arch: &Architecture, beta: f64, n_members: usize, seed: u64) -> Result<EnsembleModel> {
    if n_members == 0 {
        return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
    }
    arch.validate()?;
    let members = (0..n_members)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, (i + n_members) as u64);
            let trainable = DeepONetParams::init(arch, &mut rng)?;
            let prior = DeepONetParams::init(arch, &mut rng)?;
            Ok(Member::new(i as u64, RpDeepONet::new(trainable, prior, beta)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        arch: arch.clone(),
        beta,
        seed,
        step: 0,
        members,
    })
}

impl EnsembleModel {
    pub(crate) fn from_parts(arch: Architecture, beta: f64, seed: u64, step: u64, members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        }
        arch.validate()?;
        let mut ids: Vec<u64> = members.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != members.len() {
            return Err(Error::InvalidConfig("member stream ids must be distinct".into()));
        }
        for m in &members {
            if m.model.beta() != beta {
                return Err(Error::InvalidConfig("all members must share one beta".into()));
            }
            if m.model.trainable.branch.widths() != arch.branch_widths || m.model.trainable.trunk.widths() != arch.trunk_widths {
                return Err(Error::InvalidArchitecture("member does not match the ensemble architecture".into()));
            }
        }
        Ok(Self {
            arch,
            beta,
            seed,
            step,
            members,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Training iterations completed so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// A new ensemble holding copies of the chosen members.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let members = indices
            .iter()
            .map(|&i| self.members.get(i).cloned().ok_or_else(|| Error::InvalidConfig(format!("no member {i}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(self.arch.clone(), self.beta, self.seed, self.step, members)
    }

    /// Fingerprint of every frozen prior parameter.
    pub fn prior_checksum(&self) -> u64 {
        checksum(self.members.iter().flat_map(|m| m.model.prior().iter()))
    }

    pub fn trainable_checksum(&self) -> u64 {
        checksum(self.members.iter().flat_map(|m| m.model.trainable.iter()))
    }

    /// Checks that a dataset fits the architecture.
    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        let a = &self.arch;
        let d = ds.dims;
        if d.d_u != a.d_u || d.d_s != a.d_s || d.d_y != a.d_y || ds.sensors() != a.sensors() {
            return Err(Error::Incompatible(format!(
                "model expects m={} d_u={} d_y={} d_s={}, dataset has m={} d_u={} d_y={} d_s={}",
                a.sensors(),
                a.d_u,
                a.d_y,
                a.d_s,
                ds.sensors(),
                d.d_u,
                d.d_y,
                d.d_s
            )));
        }
        Ok(())
    }

    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig) -> Result<TrainHistory> {
        train::train_in_place(self, data, cfg)
    }

    /// Every member's prediction for each (function, query) combination.
    ///
    /// `u` holds `nu` rows of sensor values, `y` holds `nq` raw query points.
    pub fn member_predictions(&self, u: &[f64], nu: usize, y: &[f64], nq: usize) -> Result<Vec<Vec<f64>>> {
        let a = &self.arch;
        if u.len() != nu * a.branch_widths[0] || y.len() != nq * a.d_y {
            return Err(Error::Shape(format!(
                "expected {nu} x {} sensor values and {nq} x {} query values",
                a.branch_widths[0], a.d_y
            )));
        }
        let feats = a.trunk_features(y)?;
        self.members
            .par_iter()
            .map(|m| m.model.predict_grid(u, nu, &feats, nq))
            .collect()
    }

    /// Ensemble mean and population variance over all members.
    pub fn predict_mean_var(&self, u: &[f64], nu: usize, y: &[f64], nq: usize) -> Result<PredictiveStats> {
        let preds = self.member_predictions(u, nu, y, nq)?;
        population_stats(&preds)
    }

    /// Statistics at every stored query point of every pair: `(N x M x d_s)`.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<PredictiveStats> {
        self.check_dataset(ds)?;
        let width = ds.queries() * self.arch.d_s;
        // bound the member-prediction buffer to roughly 256 MiB per block
        let per_fn = (self.len() * width * 8).max(1);
        let block = ((256usize << 20) / per_fn).clamp(1, ds.len());
        let mut mean = Vec::with_capacity(ds.len() * width);
        let mut var = Vec::with_capacity(ds.len() * width);
        for chunk in ds.pairs.chunks(block) {
            let u: Vec<f64> = chunk.iter().flat_map(|p| p.u.iter().copied()).collect();
            let s = self.predict_mean_var(&u, chunk.len(), &ds.y, ds.queries())?;
            mean.extend(s.mean);
            var.extend(s.var);
        }
        Ok(PredictiveStats { mean, var, members: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture::uniform(6, 1, 1, 1, 2, 8, 5, 0).unwrap()
    }

    #[test]
    fn single_member_without_prior() {
        let e = init_ensemble(&arch(), 0.0, 1, 3).unwrap();
        assert_eq!(e.len(), 1);
        let m = &e.members()[0].model;
        let u = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let a = crate::model::rp_forward(m, &u, &[0.3]).unwrap();
        let b = crate::model::deeponet_forward(&m.trainable, &u, &[0.3]).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn init_is_deterministic_and_members_differ() {
        let a = init_ensemble(&arch(), 1.0, 2, 11).unwrap();
        let b = init_ensemble(&arch(), 1.0, 2, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.members()[0].model, a.members()[1].model);
        assert_ne!(a.members()[0].model.trainable, *a.members()[0].model.prior());
    }

    #[test]
    fn zero_members_rejected() {
        assert!(matches!(init_ensemble(&arch(), 1.0, 0, 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn prediction_is_permutation_invariant() {
        let e = init_ensemble(&arch(), 1.0, 4, 2).unwrap();
        let u: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let y = [0.1, 0.6, 0.9];
        let s = e.predict_mean_var(&u, 2, &y, 3).unwrap();
        let p = e.select(&[2, 0, 3, 1]).unwrap().predict_mean_var(&u, 2, &y, 3).unwrap();
        for (a, b) in s.mean.iter().zip(&p.mean) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s.var.iter().zip(&p.var) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.var.iter().all(|&v| v >= 0.0));
    }
}
