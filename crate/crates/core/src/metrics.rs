//! Per-frame error metrics and aggregate summaries.

use std::collections::BTreeMap;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;

pub const DEFAULT_BURN_IN: usize = 20;
pub const DEFAULT_BINS: usize = 50;

/// Per-frame record of one algorithm on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub algorithm_id: String,
    pub seed: u64,
    pub per_frame_rmse: Vec<f64>,
    pub em_iterations: Vec<usize>,
    /// Snapshot of the settings that produced this run.
    pub config: serde_json::Value,
}

impl TrialResult {
    pub fn steady_state(&self, burn_in: usize) -> Result<f64> {
        steady_state_mean(&self.per_frame_rmse, burn_in)
    }
}

/// Relative squared error `‖x − x̂‖² / ‖x‖²`.
pub fn rmse(truth: ArrayView1<f64>, estimate: ArrayView1<f64>) -> Result<f64> {
    check_len("estimate", estimate.len(), truth.len())?;
    let denom = linalg::norm_sq(truth);
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("truth has zero norm".into()));
    }
    Ok(linalg::dist_sq(truth, estimate) / denom)
}

/// Mean of `series[burn_in..]`.
pub fn steady_state_mean(series: &[f64], burn_in: usize) -> Result<f64> {
    let tail = series.get(burn_in..).unwrap_or(&[]);
    if tail.is_empty() {
        return Err(Error::Argument(format!(
            "burn-in {burn_in} leaves no frames out of {}",
            series.len()
        )));
    }
    Ok(mean(tail))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub mean_pct: f64,
    pub median_pct: f64,
}

/// Percent improvement of `reference` over `baseline`, frame-aligned.
///
/// `mean_pct = mean(baseline − reference) / mean(baseline) · 100`, and
/// `median_pct` the same with medians. Sequences are concatenated.
pub fn improvement_stats(reference: &[Vec<f64>], baseline: &[Vec<f64>]) -> Result<Improvement> {
    check_len("reference sequences", reference.len(), baseline.len())?;
    let mut diff = Vec::new();
    let mut base = Vec::new();
    for (r, b) in reference.iter().zip(baseline) {
        check_len("reference frames", r.len(), b.len())?;
        diff.extend(r.iter().zip(b).map(|(r, b)| b - r));
        base.extend_from_slice(b);
    }
    if base.is_empty() {
        return Err(Error::Argument("no frames to compare".into()));
    }
    let base_mean = mean(&base);
    let base_median = median(&base);
    if base_mean == 0.0 || base_median == 0.0 {
        return Err(Error::UndefinedMetric("baseline error is zero".into()));
    }
    Ok(Improvement {
        mean_pct: mean(&diff) / base_mean * 100.0,
        median_pct: median(&diff) / base_median * 100.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub histogram: Histogram,
}

/// Per-algorithm summary over every frame of every trial.
pub fn summarize(results: &[TrialResult], bins: usize) -> Result<BTreeMap<String, Summary>> {
    if results.is_empty() {
        return Err(Error::Argument("no results to summarize".into()));
    }
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        pooled
            .entry(r.algorithm_id.clone())
            .or_default()
            .extend_from_slice(&r.per_frame_rmse);
    }
    pooled
        .into_iter()
        .map(|(id, values)| Ok((id, summarize_values(&values, bins)?)))
        .collect()
}

pub fn summarize_values(values: &[f64], bins: usize) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Argument("no values to summarize".into()));
    }
    if bins == 0 {
        return Err(Error::Argument("histogram needs at least one bin".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        count: values.len(),
        mean: mean(values),
        median: quantile_sorted(&sorted, 0.5),
        p25: quantile_sorted(&sorted, 0.25),
        p75: quantile_sorted(&sorted, 0.75),
        histogram: histogram(&sorted, bins),
    })
}

fn histogram(sorted: &[f64], bins: usize) -> Histogram {
    let lower = sorted[0];
    let upper = sorted[sorted.len() - 1];
    let mut counts = vec![0; bins];
    let width = (upper - lower) / bins as f64;
    for &v in sorted {
        let k = if width > 0.0 {
            (((v - lower) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    Histogram { lower, upper, counts }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.5)
}

/// Linear-interpolation quantile; the median of an even count is the mean
/// of the middle pair.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
