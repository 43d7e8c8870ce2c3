//! Function-pair datasets, their generators, and the `UQDON-DATA` container.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{checked_len, Reader, Writer};
use crate::rng::{RngStream, DATA_STREAM_BASE};

use super::antiderivative::{antiderivative_solve, unit_grid};
use super::burgers::Burgers;
use super::gp::{GpConfig, GpSampler};
use super::grf::grf_sample;
use super::reaction_diffusion::ReactionDiffusion;

pub const DATA_MAGIC: &[u8; 10] = b"UQDON-DATA";
pub const DATA_VERSION: u16 = 1;

/// Pairs whose output infinity norm falls below this are rejected.
pub const MIN_TARGET_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_x: usize,
    pub d_y: usize,
    pub d_u: usize,
    pub d_s: usize,
}

impl Dims {
    pub fn scalar(d_x: usize, d_y: usize) -> Self {
        Self { d_x, d_y, d_u: 1, d_s: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionPair {
    /// `m * d_u` sensor values.
    pub u: Vec<f64>,
    /// `M * d_s` output values.
    pub s: Vec<f64>,
    /// `max |s|`, fixed when the pair is built.
    pub s_inf: f64,
}

impl FunctionPair {
    pub fn new(index: usize, u: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        let s_inf = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(s_inf >= MIN_TARGET_NORM) || !s_inf.is_finite() {
            return Err(Error::DegeneratePair {
                index,
                norm: s_inf,
                threshold: MIN_TARGET_NORM,
            });
        }
        Ok(Self { u, s, s_inf })
    }
}

/// Where a dataset came from. Written next to the binary file as JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Per-pair group key (the log10 output scale for GP-driven benchmarks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Provenance {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `m * d_x` sensor coordinates.
    pub x: Vec<f64>,
    /// `M * d_y` query coordinates.
    pub y: Vec<f64>,
    pub pairs: Vec<FunctionPair>,
    pub dims: Dims,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, dims: Dims, pairs: Vec<FunctionPair>) -> Result<Self> {
        let ds = Self {
            x,
            y,
            pairs,
            dims,
            provenance: Provenance::default(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Result<Self> {
        if let Some(g) = &provenance.groups {
            if g.len() != self.len() {
                return Err(Error::Format(format!("{} group keys for {} pairs", g.len(), self.len())));
            }
        }
        self.provenance = provenance;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.d_x == 0 || d.d_y == 0 || d.d_u == 0 || d.d_s == 0 {
            return Err(Error::Shape("dataset dimensions must be positive".into()));
        }
        if self.pairs.is_empty() {
            return Err(Error::Shape("dataset needs at least one pair".into()));
        }
        if self.x.is_empty() || self.x.len() % d.d_x != 0 || self.y.is_empty() || self.y.len() % d.d_y != 0 {
            return Err(Error::Shape("grid lengths are not multiples of their dimensions".into()));
        }
        let (m, big_m) = (self.sensors(), self.queries());
        for (i, p) in self.pairs.iter().enumerate() {
            if p.u.len() != m * d.d_u || p.s.len() != big_m * d.d_s {
                return Err(Error::Shape(format!(
                    "pair {i} has {} input and {} output values, expected {} and {}",
                    p.u.len(),
                    p.s.len(),
                    m * d.d_u,
                    big_m * d.d_s
                )));
            }
            if !(p.s_inf >= MIN_TARGET_NORM) {
                return Err(Error::DegeneratePair {
                    index: i,
                    norm: p.s_inf,
                    threshold: MIN_TARGET_NORM,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sensor count `m`.
    pub fn sensors(&self) -> usize {
        self.x.len() / self.dims.d_x
    }

    /// Query count `M`.
    pub fn queries(&self) -> usize {
        self.y.len() / self.dims.d_y
    }

    pub fn group(&self, i: usize) -> Option<f64> {
        self.provenance.groups.as_ref().map(|g| g[i])
    }

    /// The pairs at `indices`, in that order, with matching group keys.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(indices.len());
        for &i in indices {
            pairs.push(self.pairs.get(i).cloned().ok_or_else(|| Error::Shape(format!("pair {i} out of range")))?);
        }
        let mut out = Self::new(self.x.clone(), self.y.clone(), self.dims, pairs)?;
        out.provenance = Provenance {
            groups: self.provenance.groups.as_ref().map(|g| indices.iter().map(|&i| g[i]).collect()),
            ..self.provenance.clone()
        };
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dims;
        let mut w = Writer::new(DATA_MAGIC, DATA_VERSION);
        for v in [self.len(), self.sensors(), self.queries(), d.d_x, d.d_y, d.d_u, d.d_s] {
            w.usize(v);
        }
        w.f64s(&self.x);
        w.f64s(&self.y);
        for p in &self.pairs {
            w.f64s(&p.u);
            w.f64s(&p.s);
            w.f64(p.s_inf);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, DATA_MAGIC, DATA_VERSION, true, "dataset")?;
        let n = r.usize()?;
        let m = r.usize()?;
        let big_m = r.usize()?;
        let dims = Dims {
            d_x: r.usize()?,
            d_y: r.usize()?,
            d_u: r.usize()?,
            d_s: r.usize()?,
        };
        let per_pair = checked_len(&[m, dims.d_u], "dataset")? + checked_len(&[big_m, dims.d_s], "dataset")? + 1;
        let expected = checked_len(&[m, dims.d_x], "dataset")?
            + checked_len(&[big_m, dims.d_y], "dataset")?
            + checked_len(&[n, per_pair], "dataset")?;
        if checked_len(&[expected, 8], "dataset")? != r.remaining() {
            return Err(Error::Format(format!(
                "dataset header announces {expected} values but the payload holds {} bytes",
                r.remaining()
            )));
        }
        let x = r.f64s(m * dims.d_x)?;
        let y = r.f64s(big_m * dims.d_y)?;
        let mut pairs = Vec::with_capacity(n);
        for _ in 0..n {
            let u = r.f64s(m * dims.d_u)?;
            let s = r.f64s(big_m * dims.d_s)?;
            let s_inf = r.f64()?;
            pairs.push(FunctionPair { u, s, s_inf });
        }
        r.finish()?;
        Self::new(x, y, dims, pairs)
    }

    /// Writes the binary file and, when provenance is known, a JSON sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes())?;
        if !self.provenance.is_empty() {
            let json = serde_json::to_string_pretty(&self.provenance).map_err(|e| Error::Format(e.to_string()))?;
            fs::write(sidecar_path(path), json + "\n")?;
        }
        Ok(())
    }

    /// Reads the binary file and its sidecar, if any.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ds = Self::from_bytes(&fs::read(path)?)?;
        let side = sidecar_path(path);
        if side.exists() {
            let text = fs::read_to_string(&side)?;
            let prov: Provenance =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
            return ds.with_provenance(prov);
        }
        Ok(ds)
    }
}

/// `<file>.meta.json` next to a dataset file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn default_ls() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntiderivativeSpec {
    #[serde(default = "AntiderivativeSpec::default_sensors")]
    pub sensors: usize,
    #[serde(default = "default_ls")]
    pub length_scale: f64,
    #[serde(default = "AntiderivativeSpec::default_alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "AntiderivativeSpec::default_alpha_max")]
    pub alpha_max: f64,
    /// Number of evenly spaced log output scales; pairs are split evenly across them.
    #[serde(default = "AntiderivativeSpec::default_groups")]
    pub alpha_groups: usize,
}

impl AntiderivativeSpec {
    fn default_sensors() -> usize {
        100
    }
    fn default_alpha_min() -> f64 {
        -2.0
    }
    fn default_alpha_max() -> f64 {
        2.0
    }
    fn default_groups() -> usize {
        10
    }

    pub fn alphas(&self) -> Vec<f64> {
        let g = self.alpha_groups;
        if g == 1 {
            return vec![self.alpha_min];
        }
        (0..g)
            .map(|i| self.alpha_min + (self.alpha_max - self.alpha_min) * i as f64 / (g - 1) as f64)
            .collect()
    }

    /// Group of pair `i` among `n`: consecutive blocks of equal size.
    pub fn alpha_of(&self, i: usize, n: usize) -> f64 {
        self.alphas()[i * self.alpha_groups / n]
    }
}

impl Default for AntiderivativeSpec {
    fn default() -> Self {
        Self {
            sensors: Self::default_sensors(),
            length_scale: default_ls(),
            alpha_min: Self::default_alpha_min(),
            alpha_max: Self::default_alpha_max(),
            alpha_groups: Self::default_groups(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactionDiffusionSpec {
    pub sensors: usize,
    pub length_scale: f64,
    pub output_scale: f64,
    pub nu: f64,
    pub k: f64,
    pub nx_out: usize,
    pub nt_out: usize,
    pub solver_nx: usize,
    pub dt_max: f64,
}

impl Default for ReactionDiffusionSpec {
    fn default() -> Self {
        Self {
            sensors: 500,
            length_scale: 0.2,
            output_scale: 1.0,
            nu: 0.01,
            k: 0.01,
            nx_out: 100,
            nt_out: 100,
            solver_nx: 101,
            dt_max: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersSpec {
    pub grid: usize,
    pub nt_out: usize,
    pub nu: f64,
    pub n_internal: usize,
    pub dt_max: f64,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        Self {
            grid: 100,
            nt_out: 100,
            nu: 0.01,
            n_internal: 400,
            dt_max: 2e-4,
        }
    }
}

/// Recipe for a synthetic benchmark dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Antiderivative(AntiderivativeSpec),
    ReactionDiffusion(ReactionDiffusionSpec),
    Burgers(BurgersSpec),
}

/// Query grid `(x, t)` flattened time-major.
fn space_time_grid(x: &[f64], t: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * x.len() * t.len());
    for &tv in t {
        for &xv in x {
            y.push(xv);
            y.push(tv);
        }
    }
    y
}

/// Generates `n` pairs; pair `i` draws only from stream `DATA_STREAM_BASE + i`.
pub fn build_dataset(spec: &GeneratorSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("dataset size must be at least 1".into()));
    }
    let stream = |i: usize| RngStream::new(seed, DATA_STREAM_BASE + i as u64);
    let (x, y, dims, raw, groups): (Vec<f64>, Vec<f64>, Dims, Vec<Result<(Vec<f64>, Vec<f64>)>>, Option<Vec<f64>>) =
        match spec {
            GeneratorSpec::Antiderivative(a) => {
                if a.alpha_groups == 0 || a.alpha_groups > n {
                    return Err(Error::InvalidConfig(format!(
                        "{} output-scale groups cannot be filled by {n} pairs",
                        a.alpha_groups
                    )));
                }
                let x = unit_grid(a.sensors);
                let sampler = GpSampler::new(&GpConfig::new(a.length_scale, 1.0), &x)?;
                let raw = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        // K(10^alpha) = 10^(2 alpha) K(1), so one factor serves every group
                        let u = sampler.sample_scaled(10f64.powf(a.alpha_of(i, n)), &mut stream(i));
                        let s = antiderivative_solve(&u, &x)?;
                        Ok((u, s))
                    })
                    .collect();
                let groups = (0..n).map(|i| a.alpha_of(i, n)).collect();
                (x.clone(), x, Dims::scalar(1, 1), raw, Some(groups))
            }
            GeneratorSpec::ReactionDiffusion(r) => {
                let sensors = unit_grid(r.sensors);
                let out_x = unit_grid(r.nx_out);
                let out_t = unit_grid(r.nt_out);
                let sampler = GpSampler::new(&GpConfig::new(r.length_scale, r.output_scale), &sensors)?;
                let solver = ReactionDiffusion {
                    nu: r.nu,
                    k: r.k,
                    nx: r.solver_nx,
                    dt_max: r.dt_max,
                };
                let raw = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let u = sampler.sample(&mut stream(i));
                        let s = solver.solve(&u, &sensors, &out_x, &out_t)?.values;
                        Ok((u, s))
                    })
                    .collect();
                (sensors, space_time_grid(&out_x, &out_t), Dims::scalar(1, 2), raw, None)
            }
            GeneratorSpec::Burgers(b) => {
                let solver = Burgers {
                    nu: b.nu,
                    n_internal: b.n_internal,
                    dt_max: b.dt_max,
                };
                let out_t = unit_grid(b.nt_out);
                let x: Vec<f64> = (0..b.grid).map(|j| j as f64 / b.grid as f64).collect();
                let raw = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let u = grf_sample(b.grid, &mut stream(i))?.values;
                        let s = solver.solve(&u, &out_t)?.field.values;
                        Ok((u, s))
                    })
                    .collect();
                let y = space_time_grid(&x, &out_t);
                (x, y, Dims::scalar(1, 2), raw, None)
            }
        };
    let mut pairs = Vec::with_capacity(n);
    for (i, r) in raw.into_iter().enumerate() {
        let (u, s) = r?;
        pairs.push(FunctionPair::new(i, u, s)?);
    }
    Dataset::new(x, y, dims, pairs)?.with_provenance(Provenance {
        generator: Some(spec.clone()),
        seed: Some(seed),
        groups,
        source: None,
    })
}
