//! Masked RMSE and aggregation over seeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyper::Method;
use crate::tabular::{EncodedMatrix, MaskMatrix};

/// `sqrt(Σ_{m=0} (x − x̂)² / #{m = 0})` over encoded features.
pub fn rmse_missing(
    original: &EncodedMatrix,
    imputed: &EncodedMatrix,
    mask: &MaskMatrix,
) -> Result<f64> {
    if original.rows() != imputed.rows()
        || original.cols() != imputed.cols()
        || original.rows() != mask.rows()
        || original.cols() != mask.cols()
    {
        return Err(Error::Invalid(format!(
            "shapes differ: original {}x{}, imputed {}x{}, mask {}x{}",
            original.rows(),
            original.cols(),
            imputed.rows(),
            imputed.cols(),
            mask.rows(),
            mask.cols()
        )));
    }
    let (mut sq, mut n) = (0.0, 0usize);
    for ((x, y), &m) in original
        .values()
        .iter()
        .zip(imputed.values())
        .zip(mask.bits())
    {
        if m == 0 {
            sq += (x - y).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "RMSE over missing positions needs at least one missing position".into(),
        ));
    }
    Ok((sq / n as f64).sqrt())
}

/// Score of one (dataset, method, p, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub method: Method,
    pub missing_p: f64,
    pub seed: u64,
    pub rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations_used: Option<usize>,
    /// Hyperparameters the score was obtained with.
    #[serde(default)]
    pub config: String,
    /// Seconds; kept out of the serialized record so stores compare bit-exact.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Mean and population standard deviation of one group's RMSEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub dataset: String,
    pub method: Method,
    pub missing_p: f64,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub n_seeds: usize,
}

impl AggregateResult {
    /// Table cell, e.g. `0.049 ± 0.003`.
    pub fn cell(&self) -> String {
        format_mean_std(self.mean_rmse, self.std_rmse)
    }
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

/// Mean and population standard deviation (divide by n) of a group's RMSEs.
pub fn aggregate_seeds(results: &[RunResult]) -> Result<AggregateResult> {
    let first = results
        .first()
        .ok_or_else(|| Error::Invalid("no results to aggregate".into()))?;
    if let Some(other) = results.iter().find(|r| {
        r.dataset != first.dataset || r.method != first.method || r.missing_p != first.missing_p
    }) {
        return Err(Error::Invalid(format!(
            "mixed groups: ({}, {}, {}) and ({}, {}, {})",
            first.dataset,
            first.method,
            first.missing_p,
            other.dataset,
            other.method,
            other.missing_p
        )));
    }
    let mut values: Vec<f64> = results.iter().map(|r| r.rmse).collect();
    // a fixed summation order makes the result independent of input order
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(AggregateResult {
        dataset: first.dataset.clone(),
        method: first.method,
        missing_p: first.missing_p,
        mean_rmse: mean,
        std_rmse: var.sqrt(),
        n_seeds: results.len(),
    })
}
