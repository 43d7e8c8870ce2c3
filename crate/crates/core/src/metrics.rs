//! Error and uncertainty metrics over evaluated datasets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::PredictiveStats;
use crate::{Error, Result};

pub const DEFAULT_OOD_THRESHOLD: f64 = 3.0;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn truth_norm(truth: &[f64]) -> Result<f64> {
    let n = norm2(truth);
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::DegenerateTarget(format!("reference norm is {n}")))
    }
}

/// `|pred - truth|_2 / |truth|_2`.
pub fn relative_l2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("prediction has {} values, truth {}", pred.len(), truth.len())));
    }
    let t = truth_norm(truth)?;
    let d = pred.iter().zip(truth).map(|(p, s)| (p - s) * (p - s)).sum::<f64>().sqrt();
    Ok(d / t)
}

/// `|sigma|_2 / |truth|_2`.
pub fn relative_uncertainty(sigma: &[f64], truth: &[f64]) -> Result<f64> {
    if sigma.len() != truth.len() {
        return Err(Error::Shape(format!("sigma has {} values, truth {}", sigma.len(), truth.len())));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::InvalidReport(format!("negative or NaN standard deviation {s}")));
    }
    Ok(norm2(sigma) / truth_norm(truth)?)
}

/// Per-pair errors and uncertainties, optionally keyed by a group value (log output scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub errors: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub groups: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyReport);
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(Self {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            max: s[s.len() - 1],
            q05: quantile(&s, 0.05),
            q25: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q75: quantile(&s, 0.75),
            q95: quantile(&s, 0.95),
        })
    }
}

impl EvalReport {
    pub fn new(errors: Vec<f64>, uncertainties: Vec<f64>, groups: Option<Vec<f64>>) -> Result<Self> {
        if errors.len() != uncertainties.len() {
            return Err(Error::InvalidReport(format!(
                "{} errors but {} uncertainties",
                errors.len(),
                uncertainties.len()
            )));
        }
        if let Some(g) = &groups {
            if g.len() != errors.len() {
                return Err(Error::InvalidReport(format!("{} group keys for {} pairs", g.len(), errors.len())));
            }
        }
        if errors.iter().chain(&uncertainties).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidReport("errors and uncertainties must be nonnegative".into()));
        }
        Ok(Self { errors, uncertainties, groups })
    }

    /// Scores ensemble statistics against the stored targets of `ds`.
    pub fn from_predictions(ds: &Dataset, stats: &PredictiveStats) -> Result<Self> {
        let width = ds.queries() * ds.dims.d_s;
        if stats.mean.len() != ds.len() * width || stats.var.len() != stats.mean.len() {
            return Err(Error::Shape(format!(
                "statistics hold {} values, dataset needs {}",
                stats.mean.len(),
                ds.len() * width
            )));
        }
        let sigma = stats.std();
        let mut errors = Vec::with_capacity(ds.len());
        let mut unc = Vec::with_capacity(ds.len());
        for (i, p) in ds.pairs.iter().enumerate() {
            let r = i * width..(i + 1) * width;
            errors.push(relative_l2(&stats.mean[r.clone()], &p.s)?);
            unc.push(relative_uncertainty(&sigma[r], &p.s)?);
        }
        Self::new(errors, unc, ds.provenance.groups.clone())
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error_summary(&self) -> Result<Summary> {
        Summary::of(&self.errors)
    }

    pub fn uncertainty_summary(&self) -> Result<Summary> {
        Summary::of(&self.uncertainties)
    }

    pub fn mean_error(&self) -> Result<f64> {
        Ok(self.error_summary()?.mean)
    }

    pub fn mean_uncertainty(&self) -> Result<f64> {
        Ok(self.uncertainty_summary()?.mean)
    }

    /// `pair_index,alpha,rel_l2,rel_unc`; alpha is empty when the report has no groups.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("pair_index,alpha,rel_l2,rel_unc\n");
        for i in 0..self.len() {
            let a = self.groups.as_ref().map(|g| g[i].to_string()).unwrap_or_default();
            let _ = writeln!(out, "{i},{a},{},{}", self.errors[i], self.uncertainties[i]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub alpha: f64,
    pub count: usize,
    pub mean_error: f64,
    pub mean_uncertainty: f64,
}

/// Mean error and uncertainty per group key, ascending by key.
pub fn per_scale_table(report: &EvalReport) -> Result<Vec<ScaleRow>> {
    let groups = report
        .groups
        .as_ref()
        .ok_or_else(|| Error::InvalidReport("report has no group keys".into()))?;
    if report.is_empty() {
        return Err(Error::EmptyReport);
    }
    if let Some(g) = groups.iter().find(|g| !g.is_finite()) {
        return Err(Error::InvalidReport(format!("group key {g} is not finite")));
    }
    let mut order: Vec<usize> = (0..report.len()).collect();
    order.sort_by(|&a, &b| groups[a].total_cmp(&groups[b]).then(a.cmp(&b)));
    let mut rows: Vec<ScaleRow> = Vec::new();
    for i in order {
        match rows.last_mut() {
            Some(r) if r.alpha == groups[i] => {
                r.count += 1;
                r.mean_error += report.errors[i];
                r.mean_uncertainty += report.uncertainties[i];
            }
            _ => rows.push(ScaleRow {
                alpha: groups[i],
                count: 1,
                mean_error: report.errors[i],
                mean_uncertainty: report.uncertainties[i],
            }),
        }
    }
    for r in &mut rows {
        r.mean_error /= r.count as f64;
        r.mean_uncertainty /= r.count as f64;
    }
    Ok(rows)
}

pub fn per_scale_csv(rows: &[ScaleRow]) -> String {
    let mut out = String::from("alpha,count,mean_rel_l2,mean_rel_unc\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.alpha, r.count, r.mean_error, r.mean_uncertainty);
    }
    out
}

/// Index and value of the largest error; ties go to the lowest index.
pub fn worst_case(report: &EvalReport) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &e) in report.errors.iter().enumerate() {
        if best.map_or(true, |(_, b)| e > b) {
            best = Some((i, e));
        }
    }
    best.ok_or(Error::EmptyReport)
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("columns of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::InvalidReport(format!("rank correlation needs at least 3 pairs, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidReport("NaN in correlation input".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("one column is constant".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation between per-pair error and uncertainty.
pub fn calibration(report: &EvalReport) -> Result<f64> {
    spearman(&report.errors, &report.uncertainties)
}

/// `pair_index,rel_l2,rel_unc,error_rank,uncertainty_rank`.
pub fn calibration_csv(report: &EvalReport) -> String {
    let re = average_ranks(&report.errors);
    let ru = average_ranks(&report.uncertainties);
    let mut out = String::from("pair_index,rel_l2,rel_unc,error_rank,uncertainty_rank\n");
    for i in 0..report.len() {
        let _ = writeln!(out, "{i},{},{},{},{}", report.errors[i], report.uncertainties[i], re[i], ru[i]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodScores {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    pub threshold: f64,
    pub reference_mean: f64,
    pub reference_std: f64,
}

impl OodScores {
    pub fn flagged(&self) -> Vec<usize> {
        self.flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect()
    }
}

/// Flags pairs whose relative uncertainty exceeds `mean + c * std` of the reference uncertainties.
pub fn ood_scores(report: &EvalReport, reference: &EvalReport, c: f64) -> Result<OodScores> {
    if reference.is_empty() {
        return Err(Error::InvalidReference("reference report is empty".into()));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(Error::InvalidConfig(format!("OOD threshold multiplier must be finite and >= 0, got {c}")));
    }
    let r = &reference.uncertainties;
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let std = (r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let threshold = mean + c * std;
    let scores = report.uncertainties.clone();
    let flags = scores.iter().map(|&s| s > threshold).collect();
    Ok(OodScores { scores, flags, threshold, reference_mean: mean, reference_std: std })
}

/// Everything `eval` writes as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub pairs: usize,
    pub error: Summary,
    pub uncertainty: Summary,
    pub worst_case: (usize, f64),
    pub calibration: Option<f64>,
    pub per_scale: Option<Vec<ScaleRow>>,
    pub ood_threshold: Option<f64>,
    pub ood_flags: Option<Vec<usize>>,
}

impl ReportSummary {
    pub fn build(report: &EvalReport, ood: Option<&OodScores>) -> Result<Self> {
        Ok(Self {
            pairs: report.len(),
            error: report.error_summary()?,
            uncertainty: report.uncertainty_summary()?,
            worst_case: worst_case(report)?,
            // constant columns (e.g. a single member) leave the correlation undefined
            calibration: calibration(report).ok(),
            per_scale: report.groups.as_ref().map(|_| per_scale_table(report)).transpose()?,
            ood_threshold: ood.map(|o| o.threshold),
            ood_flags: ood.map(OodScores::flagged),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
