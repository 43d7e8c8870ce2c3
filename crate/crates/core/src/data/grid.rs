//! The `UQDON-GRID` container for externally produced gridded field pairs.
//!
//! Layout (little-endian): magic, `u16` version, `u64` pair count, `u64`
//! latitude count, `u64` longitude count, then per pair the input field and
//! the output field, each `n_lat * n_lon` `f64` values in row-major
//! (latitude-major) order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{checked_len, Reader, Writer};

use super::dataset::{Dataset, Dims, FunctionPair, Provenance};

pub const GRID_MAGIC: &[u8; 10] = b"UQDON-GRID";
pub const GRID_VERSION: u16 = 1;

/// Keep every `lat`-th row and every `lon`-th column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stride {
    pub lat: usize,
    pub lon: usize,
}

impl Default for Stride {
    fn default() -> Self {
        Self { lat: 1, lon: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub n_lat: usize,
    pub n_lon: usize,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl GridData {
    pub fn new(n_lat: usize, n_lon: usize, inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        let g = Self {
            n_lat,
            n_lon,
            inputs,
            outputs,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.n_lat == 0 || self.n_lon == 0 {
            return Err(Error::Format("grid must have at least one row and column".into()));
        }
        if self.inputs.is_empty() || self.inputs.len() != self.outputs.len() {
            return Err(Error::Format(format!(
                "{} input fields and {} output fields",
                self.inputs.len(),
                self.outputs.len()
            )));
        }
        let cells = self.n_lat * self.n_lon;
        if self.inputs.iter().chain(&self.outputs).any(|f| f.len() != cells) {
            return Err(Error::Format(format!("every field must have {} x {} values", self.n_lat, self.n_lon)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(GRID_MAGIC, GRID_VERSION);
        w.usize(self.len());
        w.usize(self.n_lat);
        w.usize(self.n_lon);
        for (i, o) in self.inputs.iter().zip(&self.outputs) {
            w.f64s(i);
            w.f64s(o);
        }
        w.finish_without_crc()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, GRID_MAGIC, GRID_VERSION, false, "grid")
            .map_err(|e| Error::Format(e.to_string()))?;
        let header = (|| Ok::<_, Error>((r.usize()?, r.usize()?, r.usize()?)))()
            .map_err(|_| Error::Format("grid header is incomplete".into()))?;
        let (n, n_lat, n_lon) = header;
        if n == 0 || n_lat == 0 || n_lon == 0 {
            return Err(Error::Format(format!("grid header has a zero size ({n} pairs, {n_lat} x {n_lon})")));
        }
        let cells = checked_len(&[n_lat, n_lon], "grid")?;
        let bytes_needed = checked_len(&[n, 2, cells, 8], "grid")?;
        if bytes_needed != r.remaining() {
            return Err(Error::Format(format!(
                "grid payload holds {} bytes but {n} pairs of {n_lat} x {n_lon} fields need {bytes_needed}",
                r.remaining()
            )));
        }
        let mut inputs = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        for _ in 0..n {
            inputs.push(r.f64s(cells)?);
            outputs.push(r.f64s(cells)?);
        }
        Self::new(n_lat, n_lon, inputs, outputs)
    }

    pub fn subsample(&self, stride: Stride) -> Result<Self> {
        if stride.lat == 0 || stride.lon == 0 {
            return Err(Error::InvalidConfig("strides must be positive".into()));
        }
        let rows: Vec<usize> = (0..self.n_lat).step_by(stride.lat).collect();
        let cols: Vec<usize> = (0..self.n_lon).step_by(stride.lon).collect();
        let pick = |f: &Vec<f64>| -> Vec<f64> {
            rows.iter()
                .flat_map(|&i| cols.iter().map(move |&j| f[i * self.n_lon + j]))
                .collect()
        };
        Self::new(
            rows.len(),
            cols.len(),
            self.inputs.iter().map(pick).collect(),
            self.outputs.iter().map(pick).collect(),
        )
    }

    /// Cell coordinates `(lat, lon)` mapped to the unit square: latitude
    /// linearly onto `[0, 1]` and longitude onto `[0, 1)` so the periodic
    /// direction has period one.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(2 * self.n_lat * self.n_lon);
        for i in 0..self.n_lat {
            let lat = if self.n_lat == 1 { 0.0 } else { i as f64 / (self.n_lat - 1) as f64 };
            for j in 0..self.n_lon {
                c.push(lat);
                c.push(j as f64 / self.n_lon as f64);
            }
        }
        c
    }

    /// Inputs are sensed at every cell and outputs queried at every cell.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let coords = self.coordinates();
        let pairs = self
            .inputs
            .iter()
            .zip(&self.outputs)
            .enumerate()
            .map(|(i, (u, s))| FunctionPair::new(i, u.clone(), s.clone()))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(coords.clone(), coords, Dims::scalar(2, 2), pairs)
    }
}

pub fn export_grid_data(data: &GridData, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, data.to_bytes())?;
    Ok(())
}

pub fn read_grid_data(path: impl AsRef<Path>) -> Result<GridData> {
    GridData::from_bytes(&fs::read(path)?)
}

/// Reads a gridded container, subsamples it, and builds a dataset.
pub fn ingest_grid_data(path: impl AsRef<Path>, stride: Stride) -> Result<Dataset> {
    let path = path.as_ref();
    let grid = read_grid_data(path)?.subsample(stride)?;
    grid.to_dataset()?.with_provenance(Provenance {
        source: Some(format!("{} (stride lat {} lon {})", path.display(), stride.lat, stride.lon)),
        ..Default::default()
    })
}
