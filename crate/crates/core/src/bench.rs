//! Experiment drivers shared by the command line and the Python bindings.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::{Benchmark, ExperimentConfig};
use crate::data::{build_dataset, ingest_grid_data, Dataset};
use crate::ensemble::{init_ensemble, EnsembleModel, TrainHistory};
use crate::metrics::EvalReport;
use crate::{Error, Result};

/// Seeds for the training and test datasets. Config seeds fit in 63 bits,
/// so setting the top bit can never collide with another run's training seed.
pub fn data_seeds(seed: u64) -> (u64, u64) {
    (seed, seed | 1 << 63)
}

/// Generates (or ingests, for gridded data) the training and test sets.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match (cfg.benchmark, cfg.generator()) {
        (Benchmark::Gridded, _) | (_, None) => {
            let g = cfg
                .data
                .gridded
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("gridded benchmark needs data.gridded".into()))?;
            Ok((ingest_grid_data(&g.train, g.stride)?, ingest_grid_data(&g.test, g.stride)?))
        }
        (_, Some(spec)) => {
            let (a, b) = data_seeds(cfg.seed);
            Ok((
                build_dataset(&spec, cfg.data.train_pairs, a)?,
                build_dataset(&spec, cfg.data.test_pairs, b)?,
            ))
        }
    }
}

/// Builds and trains an ensemble of `members` members at prior scale `beta`.
pub fn train_ensemble(
    cfg: &ExperimentConfig,
    train: &Dataset,
    members: usize,
    beta: f64,
) -> Result<(EnsembleModel, TrainHistory)> {
    let arch = cfg.architecture(train)?;
    let mut e = init_ensemble(&arch, beta, members, cfg.seed)?;
    let history = e.train(train, &cfg.train_config())?;
    Ok((e, history))
}

pub fn evaluate(ensemble: &EnsembleModel, ds: &Dataset) -> Result<EvalReport> {
    let stats = ensemble.predict_dataset(ds)?;
    EvalReport::from_predictions(ds, &stats)
}

/// `member,iteration,loss`.
pub fn loss_history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("member,iteration,loss\n");
    for (m, h) in history.members.iter().enumerate() {
        for (it, l) in h.iterations.iter().zip(&h.losses) {
            let _ = writeln!(out, "{m},{it},{l}");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub members: usize,
    pub beta: f64,
    pub report: EvalReport,
    pub train_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub members: usize,
    pub beta: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub worst_pair: usize,
    pub mean_uncertainty: f64,
}

impl SweepPoint {
    pub fn row(&self) -> Result<SweepRow> {
        let (worst_pair, max_error) = crate::metrics::worst_case(&self.report)?;
        Ok(SweepRow {
            members: self.members,
            beta: self.beta,
            mean_error: self.report.mean_error()?,
            max_error,
            worst_pair,
            mean_uncertainty: self.report.mean_uncertainty()?,
        })
    }
}

fn sweep_point(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset, members: usize, beta: f64) -> Result<SweepPoint> {
    let (e, h) = train_ensemble(cfg, train, members, beta)?;
    Ok(SweepPoint {
        members,
        beta,
        report: evaluate(&e, test)?,
        train_time: h.elapsed,
    })
}

/// Trains one ensemble per size (same seed, configured beta) and scores it on `test`.
pub fn robustness_sweep(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset, sizes: &[usize]) -> Result<Vec<SweepPoint>> {
    if sizes.is_empty() {
        return Err(Error::InvalidConfig("robustness sweep needs at least one size".into()));
    }
    sizes.iter().map(|&n| sweep_point(cfg, train, test, n, cfg.model.beta)).collect()
}

/// Trains one ensemble per beta (same seed, configured size) and scores it on `test`.
pub fn beta_sweep(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset, betas: &[f64]) -> Result<Vec<SweepPoint>> {
    if betas.is_empty() {
        return Err(Error::InvalidConfig("beta sweep needs at least one beta".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
        return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {b}")));
    }
    betas.iter().map(|&b| sweep_point(cfg, train, test, cfg.model.members, b)).collect()
}

/// `ensemble_size,max_rel_l2,mean_rel_l2,worst_pair,mean_rel_unc`.
pub fn robustness_csv(points: &[SweepPoint]) -> Result<String> {
    let mut out = String::from("ensemble_size,max_rel_l2,mean_rel_l2,worst_pair,mean_rel_unc\n");
    for p in points {
        let r = p.row()?;
        let _ = writeln!(out, "{},{},{},{},{}", r.members, r.max_error, r.mean_error, r.worst_pair, r.mean_uncertainty);
    }
    Ok(out)
}

/// `beta,mean_rel_l2,max_rel_l2,mean_rel_unc`.
pub fn beta_csv(points: &[SweepPoint]) -> Result<String> {
    let mut out = String::from("beta,mean_rel_l2,max_rel_l2,mean_rel_unc\n");
    for p in points {
        let r = p.row()?;
        let _ = writeln!(out, "{},{},{},{}", r.beta, r.mean_error, r.max_error, r.mean_uncertainty);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub members: usize,
    pub seconds: f64,
}

/// Wall-clock training time per ensemble size at a fixed iteration budget.
/// A short single-member run first warms caches and the thread pool; it is not reported.
pub fn scaling_bench(cfg: &ExperimentConfig, train: &Dataset, sizes: &[usize], iterations: u64) -> Result<Vec<TimingRow>> {
    if sizes.is_empty() {
        return Err(Error::InvalidConfig("scaling bench needs at least one size".into()));
    }
    let mut cfg = cfg.clone();
    cfg.train.iterations = iterations.min(50).max(1);
    train_ensemble(&cfg, train, 1, cfg.model.beta)?;
    cfg.train.iterations = iterations;
    let tc = cfg.train_config();
    tc.validate()?;
    let arch = cfg.architecture(train)?;
    sizes
        .iter()
        .map(|&n| {
            let mut e = init_ensemble(&arch, cfg.model.beta, n, cfg.seed)?;
            let t = Instant::now();
            e.train(train, &tc)?;
            Ok(TimingRow {
                members: n,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// One row per size: `ensemble_size,training_time_s`.
pub fn scaling_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("ensemble_size,training_time_s\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.3}", r.members, r.seconds);
    }
    out
}

/// The same data transposed: a size row over a time row, as in the published timing table.
pub fn scaling_table_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("Ensemble size");
    for r in rows {
        let _ = write!(out, ",{}", r.members);
    }
    out.push_str("\nTraining time (sec)");
    for r in rows {
        let _ = write!(out, ",{:.2}", r.seconds);
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::profile(Profile::Desk, Benchmark::Antiderivative);
        c.data.train_pairs = 20;
        c.data.test_pairs = 10;
        c.data.antiderivative.sensors = 12;
        c.data.antiderivative.alpha_groups = 2;
        c.model.width = 8;
        c.model.latent = 4;
        c.model.members = 2;
        c.train.iterations = 30;
        c.train.batch_functions = 4;
        c.train.batch_queries = 6;
        c
    }

    #[test]
    fn data_seeds_are_distinct() {
        let (a, b) = data_seeds(5);
        assert_ne!(a, b);
        let c = tiny();
        let (tr, te) = prepare_data(&c).unwrap();
        assert_eq!((tr.len(), te.len()), (20, 10));
        assert_ne!(tr.pairs[0].u, te.pairs[0].u);
    }

    #[test]
    fn sweeps_have_one_row_per_setting() {
        let c = tiny();
        let (tr, te) = prepare_data(&c).unwrap();
        let r = robustness_sweep(&c, &tr, &te, &[1]).unwrap();
        let csv = robustness_csv(&r).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("ensemble_size,max_rel_l2"));
        let b = beta_sweep(&c, &tr, &te, &[0.0, 2.0]).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].report.len(), 10);
        assert!(beta_csv(&b).unwrap().lines().nth(1).unwrap().starts_with("0,"));
        assert!(beta_sweep(&c, &tr, &te, &[-1.0]).is_err());
        assert!(robustness_sweep(&c, &tr, &te, &[]).is_err());
    }

    #[test]
    fn timing_tables() {
        let c = tiny();
        let (tr, _) = prepare_data(&c).unwrap();
        let rows = scaling_bench(&c, &tr, &[1, 2], 5).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.seconds > 0.0));
        assert_eq!(scaling_csv(&rows).lines().count(), 3);
        let wide = scaling_table_csv(&[TimingRow { members: 1, seconds: 48.66 }, TimingRow { members: 2, seconds: 56.52 }]);
        assert_eq!(wide, "Ensemble size,1,2\nTraining time (sec),48.66,56.52\n");
    }

    #[test]
    fn loss_csv_lists_every_record() {
        let c = tiny();
        let (tr, _) = prepare_data(&c).unwrap();
        let (_, h) = train_ensemble(&c, &tr, 2, 1.0).unwrap();
        let csv = loss_history_csv(&h);
        let rows = h.members.iter().map(|m| m.losses.len()).sum::<usize>();
        assert_eq!(csv.lines().count(), rows + 1);
    }
}
