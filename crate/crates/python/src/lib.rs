//! Python bindings: datasets, ensembles, training and metrics.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use uqdon_core::data::{self as data, AntiderivativeSpec, GeneratorSpec};
use uqdon_core::ensemble::{self as ens, EnsembleModel, TrainConfig};
use uqdon_core::metrics;
use uqdon_core::model::{self as model, LossMode};
use uqdon_core::{Error, ErrorKind};

create_exception!(uqdon, UqdonError, PyException);
create_exception!(uqdon, ConfigError, UqdonError);
create_exception!(uqdon, DataError, UqdonError);
create_exception!(uqdon, NumericalError, UqdonError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Config => ConfigError::new_err(msg),
        ErrorKind::Data => DataError::new_err(msg),
        ErrorKind::Numerical => NumericalError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for uqdon_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn flatten(rows: Vec<Vec<f64>>) -> (Vec<f64>, usize) {
    let n = rows.len();
    (rows.into_iter().flatten().collect(), n)
}

fn rows(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width.max(1)).map(<[f64]>::to_vec).collect()
}

/// Branch and trunk layer sizes.
#[pyclass(module = "uqdon", frozen)]
#[derive(Clone)]
struct Architecture(model::Architecture);

#[pymethods]
impl Architecture {
    #[new]
    #[pyo3(signature = (sensors, d_u=1, d_y=1, d_s=1, depth=3, width=128, latent=128, harmonics=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        sensors: usize,
        d_u: usize,
        d_y: usize,
        d_s: usize,
        depth: usize,
        width: usize,
        latent: usize,
        harmonics: usize,
    ) -> PyResult<Self> {
        model::Architecture::uniform(sensors, d_u, d_y, d_s, depth, width, latent, harmonics)
            .map(Self)
            .py()
    }

    #[getter]
    fn branch_widths(&self) -> Vec<usize> {
        self.0.branch_widths.clone()
    }

    #[getter]
    fn trunk_widths(&self) -> Vec<usize> {
        self.0.trunk_widths.clone()
    }

    fn __repr__(&self) -> String {
        format!("Architecture(branch={:?}, trunk={:?})", self.0.branch_widths, self.0.trunk_widths)
    }
}

/// Input/output function pairs on shared sensor and query grids.
#[pyclass(module = "uqdon")]
#[derive(Clone)]
struct Dataset(data::Dataset);

#[pymethods]
impl Dataset {
    /// Builds a synthetic dataset from a generator spec given as JSON,
    /// e.g. `{"kind": "burgers"}`.
    #[staticmethod]
    fn generate(spec_json: &str, n: usize, seed: u64) -> PyResult<Self> {
        let spec: GeneratorSpec = serde_json::from_str(spec_json).map_err(|e| ConfigError::new_err(e.to_string()))?;
        data::build_dataset(&spec, n, seed).map(Self).py()
    }

    #[staticmethod]
    #[pyo3(signature = (n, seed, sensors=100, length_scale=0.2, alpha_min=-2.0, alpha_max=2.0, alpha_groups=10))]
    fn antiderivative(
        n: usize,
        seed: u64,
        sensors: usize,
        length_scale: f64,
        alpha_min: f64,
        alpha_max: f64,
        alpha_groups: usize,
    ) -> PyResult<Self> {
        let spec = GeneratorSpec::Antiderivative(AntiderivativeSpec {
            sensors,
            length_scale,
            alpha_min,
            alpha_max,
            alpha_groups,
        });
        data::build_dataset(&spec, n, seed).map(Self).py()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        data::Dataset::load(path).map(Self).py()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn sensors(&self) -> usize {
        self.0.sensors()
    }

    #[getter]
    fn queries(&self) -> usize {
        self.0.queries()
    }

    /// Sensor grid, flattened `m x d_x`.
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.0.x.clone()
    }

    /// Query grid, flattened `M x d_y`.
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.0.y.clone()
    }

    #[getter]
    fn groups(&self) -> Option<Vec<f64>> {
        self.0.provenance.groups.clone()
    }

    fn inputs(&self) -> Vec<Vec<f64>> {
        self.0.pairs.iter().map(|p| p.u.clone()).collect()
    }

    fn outputs(&self) -> Vec<Vec<f64>> {
        self.0.pairs.iter().map(|p| p.s.clone()).collect()
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        self.0.subset(&indices).map(Self).py()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(pairs={}, sensors={}, queries={})", self.0.len(), self.0.sensors(), self.0.queries())
    }
}

/// Per-pair relative errors and uncertainties.
#[pyclass(module = "uqdon", frozen)]
#[derive(Clone)]
struct Report(metrics::EvalReport);

#[pymethods]
impl Report {
    #[new]
    #[pyo3(signature = (errors, uncertainties, groups=None))]
    fn new(errors: Vec<f64>, uncertainties: Vec<f64>, groups: Option<Vec<f64>>) -> PyResult<Self> {
        metrics::EvalReport::new(errors, uncertainties, groups).map(Self).py()
    }

    #[getter]
    fn errors(&self) -> Vec<f64> {
        self.0.errors.clone()
    }

    #[getter]
    fn uncertainties(&self) -> Vec<f64> {
        self.0.uncertainties.clone()
    }

    #[getter]
    fn groups(&self) -> Option<Vec<f64>> {
        self.0.groups.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn mean_error(&self) -> PyResult<f64> {
        self.0.mean_error().py()
    }

    fn mean_uncertainty(&self) -> PyResult<f64> {
        self.0.mean_uncertainty().py()
    }

    /// `(index, error)` of the worst pair.
    fn worst_case(&self) -> PyResult<(usize, f64)> {
        metrics::worst_case(&self.0).py()
    }

    /// Spearman correlation between error and uncertainty.
    fn calibration(&self) -> PyResult<f64> {
        metrics::calibration(&self.0).py()
    }

    /// `[(alpha, count, mean_error, mean_uncertainty)]` ordered by alpha.
    fn per_scale(&self) -> PyResult<Vec<(f64, usize, f64, f64)>> {
        Ok(metrics::per_scale_table(&self.0)
            .py()?
            .into_iter()
            .map(|r| (r.alpha, r.count, r.mean_error, r.mean_uncertainty))
            .collect())
    }

    /// Flags for pairs whose uncertainty exceeds the reference mean plus `c` standard deviations.
    #[pyo3(signature = (reference, c=metrics::DEFAULT_OOD_THRESHOLD))]
    fn ood_flags(&self, reference: &Report, c: f64) -> PyResult<Vec<bool>> {
        Ok(metrics::ood_scores(&self.0, &reference.0, c).py()?.flags)
    }

    /// JSON summary (mean, max, quantiles, calibration, per-scale table).
    fn summary_json(&self) -> PyResult<String> {
        Ok(metrics::ReportSummary::build(&self.0, None).py()?.to_json())
    }
}

/// Ensemble of randomized-prior DeepONets.
#[pyclass(module = "uqdon")]
struct Ensemble(EnsembleModel);

#[pymethods]
impl Ensemble {
    #[new]
    #[pyo3(signature = (arch, beta=1.0, members=16, seed=0))]
    fn new(arch: &Architecture, beta: f64, members: usize, seed: u64) -> PyResult<Self> {
        ens::init_ensemble(&arch.0, beta, members, seed).map(Self).py()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ens::load_checkpoint(path).map(Self).py()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ens::save_checkpoint(&self.0, path).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta()
    }

    #[getter]
    fn step(&self) -> u64 {
        self.0.step()
    }

    #[getter]
    fn arch(&self) -> Architecture {
        Architecture(self.0.arch().clone())
    }

    fn prior_checksum(&self) -> u64 {
        self.0.prior_checksum()
    }

    fn trainable_checksum(&self) -> u64 {
        self.0.trainable_checksum()
    }

    /// Trains in place; returns one `(iterations, losses)` pair per member.
    #[pyo3(signature = (dataset, iterations=20000, learning_rate=1e-3, decay_rate=0.9, decay_steps=1000,
                        batch_functions=64, batch_queries=64, loss="scaled", seed=0, workers=None))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        dataset: &Dataset,
        iterations: u64,
        learning_rate: f64,
        decay_rate: f64,
        decay_steps: u64,
        batch_functions: usize,
        batch_queries: usize,
        loss: &str,
        seed: u64,
        workers: Option<usize>,
    ) -> PyResult<Vec<(Vec<u64>, Vec<f64>)>> {
        let loss = match loss {
            "scaled" => LossMode::Scaled,
            "unscaled" => LossMode::Unscaled,
            other => return Err(ConfigError::new_err(format!("loss must be 'scaled' or 'unscaled', got '{other}'"))),
        };
        let cfg = TrainConfig {
            iterations,
            learning_rate,
            decay_rate,
            decay_steps,
            batch_functions,
            batch_queries,
            loss,
            seed,
            workers,
            ..Default::default()
        };
        let ensemble = &mut self.0;
        let history = py.allow_threads(|| ensemble.train(&dataset.0, &cfg)).py()?;
        Ok(history.members.into_iter().map(|h| (h.iterations, h.losses)).collect())
    }

    /// Predictive mean and variance for input functions `u` (one row each)
    /// at query points `y` (one row each); returns rows of length `len(y) * d_s`.
    fn predict(&self, py: Python<'_>, u: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let (u, nu) = flatten(u);
        let (y, nq) = flatten(y);
        let s = py.allow_threads(|| self.0.predict_mean_var(&u, nu, &y, nq)).py()?;
        let w = nq * self.0.arch().d_s;
        Ok((rows(&s.mean, w), rows(&s.var, w)))
    }

    /// Every member's predictions, `[member][function][point]`.
    fn member_predictions(&self, py: Python<'_>, u: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let (u, nu) = flatten(u);
        let (y, nq) = flatten(y);
        let p = py.allow_threads(|| self.0.member_predictions(&u, nu, &y, nq)).py()?;
        let w = nq * self.0.arch().d_s;
        Ok(p.iter().map(|m| rows(m, w)).collect())
    }

    /// Scores the ensemble mean and spread against the dataset targets.
    fn evaluate(&self, py: Python<'_>, dataset: &Dataset) -> PyResult<Report> {
        let r = py.allow_threads(|| uqdon_core::bench::evaluate(&self.0, &dataset.0)).py()?;
        Ok(Report(r))
    }

    fn select(&self, indices: Vec<usize>) -> PyResult<Self> {
        self.0.select(&indices).map(Self).py()
    }
}

#[pyfunction]
fn relative_l2(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::relative_l2(&pred, &truth).py()
}

#[pyfunction]
fn relative_uncertainty(sigma: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::relative_uncertainty(&sigma, &truth).py()
}

#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::spearman(&a, &b).py()
}

/// Cumulative trapezoid integral of `u` on `x`, starting from 0.
#[pyfunction]
fn antiderivative_solve(u: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    data::antiderivative_solve(&u, &x).py()
}

#[pyfunction]
fn harmonic_expand(y: Vec<f64>, order: usize) -> PyResult<Vec<f64>> {
    data::harmonic_expand(&y, order).py()
}

#[pymodule]
fn uqdon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("UqdonError", m.py().get_type_bound::<UqdonError>())?;
    m.add("ConfigError", m.py().get_type_bound::<ConfigError>())?;
    m.add("DataError", m.py().get_type_bound::<DataError>())?;
    m.add("NumericalError", m.py().get_type_bound::<NumericalError>())?;
    m.add_class::<Architecture>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Ensemble>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(relative_l2, m)?)?;
    m.add_function(wrap_pyfunction!(relative_uncertainty, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(antiderivative_solve, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_expand, m)?)?;
    Ok(())
}
