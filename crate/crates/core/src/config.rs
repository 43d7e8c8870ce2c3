//! Experiment configuration: profiles, TOML/JSON files, layered overrides.
//!
//! Values resolve as flag > file > profile default. A file only needs the keys
//! it changes; the profile (desk or paper, picked by `UQDON_PROFILE`) fills in
//! the rest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{AntiderivativeSpec, BurgersSpec, Dataset, GeneratorSpec, ReactionDiffusionSpec, Stride};
use crate::ensemble::{Precision, TrainConfig};
use crate::model::{Architecture, LossMode};
use crate::{Error, Result};

pub const PROFILE_ENV: &str = "UQDON_PROFILE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    #[default]
    Antiderivative,
    ReactionDiffusion,
    Burgers,
    Gridded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    /// Minutes on a workstation: 2e4 iterations, 16 members, 200 pairs.
    #[default]
    Desk,
    /// The published settings: 5e5 iterations, 512 members, width 128.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" | "full" => Ok(Profile::Paper),
            other => Err(Error::InvalidConfig(format!("unknown profile `{other}` (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

impl Profile {
    /// Reads `UQDON_PROFILE`; unset means desk.
    pub fn from_env() -> Result<Self> {
        match std::env::var(PROFILE_ENV) {
            Ok(v) if !v.trim().is_empty() => v.parse(),
            _ => Ok(Profile::Desk),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layers in both branch and trunk.
    pub depth: usize,
    pub width: usize,
    /// Latent features per output channel.
    pub latent: usize,
    /// Harmonic expansion order of the query coordinates; 0 disables it.
    pub harmonics: usize,
    pub members: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: u64,
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_steps: u64,
    pub batch_functions: usize,
    pub batch_queries: usize,
    pub loss: LossMode,
    pub precision: Precision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GriddedSource {
    pub train: PathBuf,
    pub test: PathBuf,
    pub stride: Stride,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub antiderivative: AntiderivativeSpec,
    pub reaction_diffusion: ReactionDiffusionSpec,
    pub burgers: BurgersSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gridded: Option<GriddedSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// OOD flag threshold in reference standard deviations above the reference mean.
    pub ood_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Ensemble sizes for the robustness sweep.
    pub sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub scaling_sizes: Vec<usize>,
    pub scaling_iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub sweeps: SweepConfig,
}

/// Values given on the command line; `None` keeps the file or profile value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    /// `.json` selects JSON; anything else is read as TOML.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

impl ExperimentConfig {
    pub fn profile(profile: Profile, benchmark: Benchmark) -> Self {
        let desk = profile == Profile::Desk;
        let pairs = if desk { 200 } else { 1000 };
        let width = if desk { 64 } else { 128 };
        Self {
            benchmark,
            seed: 0,
            output_dir: PathBuf::from("out"),
            model: ModelConfig {
                depth: 3,
                width,
                latent: if desk { 32 } else { 128 },
                harmonics: if benchmark == Benchmark::Gridded { 5 } else { 0 },
                members: if desk { 16 } else { 512 },
                beta: 1.0,
            },
            train: TrainSection {
                iterations: if desk { 20_000 } else { 500_000 },
                learning_rate: 1e-3,
                decay_rate: 0.9,
                decay_steps: 1000,
                batch_functions: if desk { 32 } else { 64 },
                batch_queries: if desk { 32 } else { 64 },
                loss: LossMode::Scaled,
                precision: Precision::F64,
                workers: None,
            },
            data: DataConfig {
                train_pairs: pairs,
                test_pairs: pairs,
                antiderivative: AntiderivativeSpec::default(),
                reaction_diffusion: ReactionDiffusionSpec::default(),
                burgers: BurgersSpec::default(),
                gridded: None,
            },
            eval: EvalConfig {
                ood_threshold: crate::metrics::DEFAULT_OOD_THRESHOLD,
            },
            sweeps: SweepConfig {
                sizes: if desk { vec![1, 4, 16] } else { vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512] },
                betas: vec![0.1, 0.5, 1.0, 10.0],
                scaling_sizes: if desk { vec![1, 2, 4, 8, 16] } else { vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512] },
                scaling_iterations: if desk { 1000 } else { 10_000 },
            },
        }
    }

    /// Parses `text` on top of `profile`. The benchmark named in the text
    /// picks the profile's per-benchmark defaults.
    pub fn parse(text: &str, format: ConfigFormat, profile: Profile) -> Result<Self> {
        let overlay: Value = match format {
            ConfigFormat::Toml => toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?,
            ConfigFormat::Json => serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?,
        };
        if !overlay.is_object() {
            return Err(Error::ConfigParse("top level must be a table".into()));
        }
        let benchmark = match overlay.get("benchmark") {
            Some(b) => Benchmark::deserialize(b).map_err(|e| Error::ConfigParse(format!("benchmark: {e}")))?,
            None => Benchmark::Antiderivative,
        };
        let mut merged = serde_json::to_value(Self::profile(profile, benchmark)).expect("config serializes");
        merge(&mut merged, overlay);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, profile: Profile) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, ConfigFormat::from_path(path), profile)
            .map_err(|e| match e {
                Error::ConfigParse(m) => Error::ConfigParse(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.workers {
            self.train.workers = Some(w);
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        self.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to JSON")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must fit in a signed 64-bit integer, got {}", self.seed));
        }
        let m = &self.model;
        if m.depth == 0 || m.width == 0 || m.latent == 0 || m.members == 0 {
            return bad("model depth, width, latent and members must be positive".into());
        }
        if !(m.beta >= 0.0) || !m.beta.is_finite() {
            return bad(format!("beta must be finite and >= 0, got {}", m.beta));
        }
        if self.data.train_pairs == 0 || self.data.test_pairs == 0 {
            return bad("train_pairs and test_pairs must be positive".into());
        }
        if !(self.eval.ood_threshold >= 0.0) || !self.eval.ood_threshold.is_finite() {
            return bad("eval.ood_threshold must be finite and >= 0".into());
        }
        let s = &self.sweeps;
        if s.sizes.is_empty() || s.sizes.contains(&0) || s.scaling_sizes.is_empty() || s.scaling_sizes.contains(&0) {
            return bad("sweep sizes must be nonempty and positive".into());
        }
        if s.betas.is_empty() || s.betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return bad("sweep betas must be nonempty, finite and >= 0".into());
        }
        if s.scaling_iterations == 0 {
            return bad("scaling_iterations must be positive".into());
        }
        if self.benchmark == Benchmark::Gridded && self.data.gridded.is_none() {
            return bad("the gridded benchmark needs a [data.gridded] section with train and test paths".into());
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            decay_rate: t.decay_rate,
            decay_steps: t.decay_steps,
            batch_functions: t.batch_functions,
            batch_queries: t.batch_queries,
            loss: t.loss,
            seed: self.seed,
            precision: t.precision,
            workers: t.workers,
        }
    }

    /// Generator for the synthetic benchmarks; `None` for gridded data.
    pub fn generator(&self) -> Option<GeneratorSpec> {
        match self.benchmark {
            Benchmark::Antiderivative => Some(GeneratorSpec::Antiderivative(self.data.antiderivative.clone())),
            Benchmark::ReactionDiffusion => Some(GeneratorSpec::ReactionDiffusion(self.data.reaction_diffusion.clone())),
            Benchmark::Burgers => Some(GeneratorSpec::Burgers(self.data.burgers.clone())),
            Benchmark::Gridded => None,
        }
    }

    /// Architecture sized for the grids and channels of `ds`.
    pub fn architecture(&self, ds: &Dataset) -> Result<Architecture> {
        let m = &self.model;
        Architecture::uniform(ds.sensors(), ds.dims.d_u, ds.dims.d_y, ds.dims.d_s, m.depth, m.width, m.latent, m.harmonics)
    }
}

/// Recursively overwrites `base` with `overlay`; tables merge, everything else replaces.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_is_the_profile() {
        let c = ExperimentConfig::parse("", ConfigFormat::Toml, Profile::Desk).unwrap();
        assert_eq!(c, ExperimentConfig::profile(Profile::Desk, Benchmark::Antiderivative));
        assert_eq!(c.train.iterations, 20_000);
        assert_eq!(c.model.members, 16);
        assert_eq!(c.data.train_pairs, 200);
        let p = ExperimentConfig::parse("{}", ConfigFormat::Json, Profile::Paper).unwrap();
        assert_eq!((p.model.depth, p.model.width, p.model.members), (3, 128, 512));
        assert_eq!((p.train.iterations, p.data.train_pairs), (500_000, 1000));
    }

    #[test]
    fn file_overrides_profile_and_flags_override_file() {
        let text = "seed = 7\n[model]\nbeta = 0.5\n[train]\niterations = 10\nworkers = 2\n";
        let mut c = ExperimentConfig::parse(text, ConfigFormat::Toml, Profile::Desk).unwrap();
        assert_eq!((c.seed, c.model.beta, c.train.iterations, c.train.workers), (7, 0.5, 10, Some(2)));
        assert_eq!(c.model.width, 64);
        c.apply(&Overrides { seed: Some(9), workers: Some(4), output_dir: None }).unwrap();
        assert_eq!((c.seed, c.train.workers), (9, Some(4)));
        assert_eq!(c.train_config().seed, 9);
    }

    #[test]
    fn benchmark_selects_defaults() {
        let c = ExperimentConfig::parse(
            "benchmark = \"gridded\"\n[data.gridded]\ntrain = \"a.grid\"\ntest = \"b.grid\"\nstride = { lat = 1, lon = 2 }\n",
            ConfigFormat::Toml,
            Profile::Desk,
        )
        .unwrap();
        assert_eq!(c.model.harmonics, 5);
        assert!(c.generator().is_none());
        let e = ExperimentConfig::parse("benchmark = \"gridded\"", ConfigFormat::Toml, Profile::Desk).unwrap_err();
        assert!(matches!(e, Error::InvalidConfig(_)));
    }

    #[test]
    fn errors_name_the_problem() {
        let e = ExperimentConfig::parse("benchmark = \"weather\"", ConfigFormat::Toml, Profile::Desk).unwrap_err();
        assert!(matches!(e, Error::ConfigParse(ref m) if m.contains("weather")), "{e}");
        let e = ExperimentConfig::parse("[model]\nwidht = 3\n", ConfigFormat::Toml, Profile::Desk).unwrap_err();
        assert!(matches!(e, Error::ConfigParse(ref m) if m.contains("widht")), "{e}");
        let e = ExperimentConfig::parse("seed = \n", ConfigFormat::Toml, Profile::Desk).unwrap_err();
        assert!(matches!(e, Error::ConfigParse(ref m) if m.contains("line 1")), "{e}");
        let e = ExperimentConfig::parse("[model]\nbeta = -1.0\n", ConfigFormat::Toml, Profile::Desk).unwrap_err();
        assert!(matches!(e, Error::InvalidConfig(_)));
        let e = ExperimentConfig::parse(&format!("{{\"seed\": {}}}", u64::MAX), ConfigFormat::Json, Profile::Desk).unwrap_err();
        assert!(matches!(e, Error::InvalidConfig(_)));
        let e = ExperimentConfig::parse("[train]\nbatch_queries = 0\n", ConfigFormat::Toml, Profile::Desk).unwrap_err();
        assert!(matches!(e, Error::InvalidConfig(_)));
    }

    #[test]
    fn profile_names() {
        assert_eq!("Desk".parse::<Profile>().unwrap(), Profile::Desk);
        assert_eq!("paper".parse::<Profile>().unwrap(), Profile::Paper);
        assert!("huge".parse::<Profile>().is_err());
    }

    #[test]
    fn format_by_extension() {
        assert_eq!(ConfigFormat::from_path(Path::new("a.JSON")), ConfigFormat::Json);
        assert_eq!(ConfigFormat::from_path(Path::new("a.toml")), ConfigFormat::Toml);
        assert_eq!(ConfigFormat::from_path(Path::new("a")), ConfigFormat::Toml);
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            prop_oneof![
                Just(Benchmark::Antiderivative),
                Just(Benchmark::ReactionDiffusion),
                Just(Benchmark::Burgers)
            ],
            any::<bool>(),
            0..=i64::MAX as u64,
            (1usize..6, 1usize..300, 1usize..300, 0usize..8, 1usize..600),
            (0.0f64..50.0, 1u64..1_000_000, 1e-6f64..1e-1, 0.1f64..1.0),
            (1usize..100, 1usize..100, any::<bool>(), proptest::option::of(1usize..64)),
            prop::collection::vec(1usize..600, 1..6),
            prop::collection::vec(0.0f64..100.0, 1..6),
        )
            .prop_map(|(bench, desk, seed, m, t, b, sizes, betas)| {
                let mut c = ExperimentConfig::profile(if desk { Profile::Desk } else { Profile::Paper }, bench);
                c.seed = seed;
                (c.model.depth, c.model.width, c.model.latent, c.model.harmonics, c.model.members) = m;
                (c.model.beta, c.train.iterations, c.train.learning_rate, c.train.decay_rate) = t;
                c.train.batch_functions = b.0;
                c.train.batch_queries = b.1;
                c.train.loss = if b.2 { LossMode::Scaled } else { LossMode::Unscaled };
                c.train.workers = b.3;
                c.sweeps.sizes = sizes;
                c.sweeps.betas = betas;
                c
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn toml_round_trip_is_a_fixed_point(c in arb_config()) {
            let once = ExperimentConfig::parse(&c.to_toml(), ConfigFormat::Toml, Profile::Desk).unwrap();
            prop_assert_eq!(&once, &c);
            let twice = ExperimentConfig::parse(&once.to_toml(), ConfigFormat::Toml, Profile::Paper).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn json_round_trip_is_a_fixed_point(c in arb_config()) {
            let once = ExperimentConfig::parse(&c.to_json(), ConfigFormat::Json, Profile::Paper).unwrap();
            prop_assert_eq!(once, c);
        }
    }
}
