use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uqdon_core::bench::{self, SweepPoint};
use uqdon_core::config::{ExperimentConfig, Overrides, Profile};
use uqdon_core::data::Dataset;
use uqdon_core::ensemble::{load_checkpoint, save_checkpoint};
use uqdon_core::metrics::{self, EvalReport, ReportSummary};
use uqdon_core::{Error, ErrorKind, Result};

const TRAIN_FILE: &str = "train.data";
const TEST_FILE: &str = "test.data";
const CHECKPOINT_FILE: &str = "model.ckpt";

/// Randomized-prior DeepONet ensembles: data generation, training, evaluation and sweeps.
///
/// Settings come from the profile named by UQDON_PROFILE (desk or paper),
/// then the --config file, then flags.
#[derive(Parser)]
#[command(name = "uqdon", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON experiment config (JSON when the extension is .json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate training and test datasets.
    GenData,
    /// Train an ensemble and write a checkpoint plus loss history.
    Train {
        /// Training set [default: <out>/train.data].
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        /// [default: <out>/model.ckpt]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// [default: <out>/test.data]
        #[arg(long)]
        data: Option<PathBuf>,
        /// In-distribution dataset whose uncertainties set the OOD threshold.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Also write per-point mean and variance to predictions.csv.
        #[arg(long)]
        predictions: bool,
    },
    /// Maximum test error against ensemble size.
    RobustnessSweep {
        #[command(flatten)]
        data: SweepData,
        /// Comma-separated ensemble sizes [default: from config].
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
    /// Error and uncertainty against prior scale beta.
    BetaSweep {
        #[command(flatten)]
        data: SweepData,
        /// Comma-separated beta values [default: from config].
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        betas: Vec<f64>,
    },
    /// Training wall-clock time against ensemble size.
    ScalingBench {
        /// Training set; generated from the config when omitted.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Iterations per timed run [default: from config].
        #[arg(long)]
        iterations: Option<u64>,
    },
}

#[derive(Args)]
struct SweepData {
    /// Training set; generated from the config when omitted.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test set; generated from the config when omitted.
    #[arg(long)]
    test: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn resolve_config(c: &Common) -> Result<ExperimentConfig> {
    let profile = Profile::from_env()?;
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p, profile)?,
        None => ExperimentConfig::profile(profile, Default::default()),
    };
    cfg.apply(&Overrides {
        seed: c.seed,
        workers: c.workers,
        output_dir: c.out.clone(),
    })?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    let out = cfg.output_dir.clone();
    match cli.cmd {
        Cmd::GenData => {
            let (train, test) = bench::prepare_data(&cfg)?;
            std::fs::create_dir_all(&out)?;
            train.save(out.join(TRAIN_FILE))?;
            test.save(out.join(TEST_FILE))?;
            write(&out, "config.toml", &cfg.to_toml())?;
            eprintln!("wrote {} training and {} test pairs to {}", train.len(), test.len(), out.display());
        }
        Cmd::Train { data } => {
            let train = Dataset::load(data.unwrap_or_else(|| out.join(TRAIN_FILE)))?;
            let (ensemble, history) = bench::train_ensemble(&cfg, &train, cfg.model.members, cfg.model.beta)?;
            std::fs::create_dir_all(&out)?;
            save_checkpoint(&ensemble, out.join(CHECKPOINT_FILE))?;
            write(&out, "loss_history.csv", &bench::loss_history_csv(&history))?;
            let summary = serde_json::json!({
                "members": ensemble.len(),
                "iterations": cfg.train.iterations,
                "training_time_s": history.elapsed.as_secs_f64(),
                "final_losses": history.members.iter().map(|h| h.losses.last().copied()).collect::<Vec<_>>(),
            });
            write(&out, "train_summary.json", &serde_json::to_string_pretty(&summary).expect("json"))?;
            eprintln!(
                "trained {} members for {} iterations in {:.1} s",
                ensemble.len(),
                cfg.train.iterations,
                history.elapsed.as_secs_f64()
            );
        }
        Cmd::Eval {
            checkpoint,
            data,
            reference,
            predictions,
        } => {
            let ensemble = load_checkpoint(checkpoint.unwrap_or_else(|| out.join(CHECKPOINT_FILE)))?;
            let ds = Dataset::load(data.unwrap_or_else(|| out.join(TEST_FILE)))?;
            let stats = ensemble.predict_dataset(&ds)?;
            let report = EvalReport::from_predictions(&ds, &stats)?;
            let ood = match reference {
                Some(r) => {
                    let rds = Dataset::load(r)?;
                    let reference = bench::evaluate(&ensemble, &rds)?;
                    Some(metrics::ood_scores(&report, &reference, cfg.eval.ood_threshold)?)
                }
                None => None,
            };
            write(&out, "errors.csv", &report.errors_csv())?;
            write(&out, "calibration.csv", &metrics::calibration_csv(&report))?;
            if report.groups.is_some() {
                write(&out, "per_scale.csv", &metrics::per_scale_csv(&metrics::per_scale_table(&report)?))?;
            }
            if let Some(o) = &ood {
                let mut csv = String::from("pair_index,score,flagged\n");
                for (i, (s, f)) in o.scores.iter().zip(&o.flags).enumerate() {
                    csv.push_str(&format!("{i},{s},{}\n", u8::from(*f)));
                }
                write(&out, "ood.csv", &csv)?;
            }
            if predictions {
                let width = ds.queries() * ds.dims.d_s;
                let mut csv = String::from("pair_index,point,mean,var,truth\n");
                for (i, p) in ds.pairs.iter().enumerate() {
                    for j in 0..width {
                        let k = i * width + j;
                        csv.push_str(&format!("{i},{j},{},{},{}\n", stats.mean[k], stats.var[k], p.s[j]));
                    }
                }
                write(&out, "predictions.csv", &csv)?;
            }
            let summary = ReportSummary::build(&report, ood.as_ref())?;
            write(&out, "summary.json", &summary.to_json())?;
            eprintln!(
                "{} pairs: mean rel. L2 {:.4}, max {:.4}, mean rel. uncertainty {:.4}",
                report.len(),
                summary.error.mean,
                summary.error.max,
                summary.uncertainty.mean
            );
        }
        Cmd::RobustnessSweep { data, sizes } => {
            let (train, test) = sweep_data(&cfg, &data)?;
            let sizes = if sizes.is_empty() { cfg.sweeps.sizes.clone() } else { sizes };
            let points = bench::robustness_sweep(&cfg, &train, &test, &sizes)?;
            report_points(&points, "members", |p| p.members.to_string());
            write(&out, "robustness.csv", &bench::robustness_csv(&points)?)?;
        }
        Cmd::BetaSweep { data, betas } => {
            let (train, test) = sweep_data(&cfg, &data)?;
            let betas = if betas.is_empty() { cfg.sweeps.betas.clone() } else { betas };
            let points = bench::beta_sweep(&cfg, &train, &test, &betas)?;
            report_points(&points, "beta", |p| p.beta.to_string());
            for p in &points {
                write(&out.join(format!("beta_{}", p.beta)), "errors.csv", &p.report.errors_csv())?;
            }
            write(&out, "beta_sweep.csv", &bench::beta_csv(&points)?)?;
        }
        Cmd::ScalingBench { train, sizes, iterations } => {
            let train = match train {
                Some(p) => Dataset::load(p)?,
                None => bench::prepare_data(&cfg)?.0,
            };
            let sizes = if sizes.is_empty() { cfg.sweeps.scaling_sizes.clone() } else { sizes };
            let rows = bench::scaling_bench(&cfg, &train, &sizes, iterations.unwrap_or(cfg.sweeps.scaling_iterations))?;
            for r in &rows {
                eprintln!("members {:>4}: {:.2} s", r.members, r.seconds);
            }
            write(&out, "scaling.csv", &bench::scaling_csv(&rows))?;
            write(&out, "scaling_table.csv", &bench::scaling_table_csv(&rows))?;
        }
    }
    Ok(())
}

fn sweep_data(cfg: &ExperimentConfig, d: &SweepData) -> Result<(Dataset, Dataset)> {
    match (&d.train, &d.test) {
        (Some(a), Some(b)) => Ok((Dataset::load(a)?, Dataset::load(b)?)),
        (None, None) => bench::prepare_data(cfg),
        _ => Err(Error::InvalidConfig("give both --train and --test, or neither".into())),
    }
}

fn report_points(points: &[SweepPoint], label: &str, key: impl Fn(&SweepPoint) -> String) {
    for p in points {
        if let Ok(r) = p.row() {
            eprintln!(
                "{label} {:>6}: mean {:.4} max {:.4} unc {:.4} ({:.1} s)",
                key(p),
                r.mean_error,
                r.max_error,
                r.mean_uncertainty,
                p.train_time.as_secs_f64()
            );
        }
    }
}
