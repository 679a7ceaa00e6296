//! Synthetic tables with known dependence structure, for tests and demos.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use super::encode::RawValue;
use super::schema::{DatasetSchema, VariableSpec};
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone)]
pub struct MixedSpec {
    pub rows: usize,
    pub numerical: usize,
    pub categorical: usize,
    pub categories: usize,
    /// Latent factor count driving every variable.
    pub factors: usize,
    /// Standard deviation of per-cell noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for MixedSpec {
    fn default() -> Self {
        MixedSpec {
            rows: 5000,
            numerical: 4,
            categorical: 4,
            categories: 3,
            factors: 2,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Numericals are linear in shared Gaussian factors plus noise; categoricals
/// take the argmax of linear scores in the same factors plus Gumbel noise.
/// Variables are named `num{i}` / `cat{i}` with labels `c0..`.
pub fn mixed(spec: &MixedSpec) -> Result<(DatasetSchema, Vec<Vec<RawValue>>)> {
    let mut rng = rng::stream(spec.seed, 0);
    let normal = |rng: &mut rng::Rng| -> f64 { rng.sample(StandardNormal) };
    let num_w: Vec<Vec<f64>> = (0..spec.numerical)
        .map(|_| (0..spec.factors).map(|_| normal(&mut rng)).collect())
        .collect();
    let cat_w: Vec<Vec<Vec<f64>>> = (0..spec.categorical)
        .map(|_| {
            (0..spec.categories)
                .map(|_| (0..spec.factors).map(|_| 2.0 * normal(&mut rng)).collect())
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        let z: Vec<f64> = (0..spec.factors).map(|_| normal(&mut rng)).collect();
        let dot = |w: &[f64]| w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        let mut row = Vec::with_capacity(spec.numerical + spec.categorical);
        for w in &num_w {
            row.push(RawValue::Number(dot(w) + spec.noise * normal(&mut rng)));
        }
        for scores in &cat_w {
            let mut best = (0, f64::NEG_INFINITY);
            for (c, w) in scores.iter().enumerate() {
                let u: f64 = rng.sample(Open01);
                let s = dot(w) + spec.noise * -(-u.ln()).ln();
                if s > best.1 {
                    best = (c, s);
                }
            }
            row.push(RawValue::Category(format!("c{}", best.0)));
        }
        rows.push(row);
    }

    let mut variables: Vec<VariableSpec> = (0..spec.numerical)
        .map(|i| VariableSpec::numerical(format!("num{i}")))
        .collect();
    variables.extend((0..spec.categorical).map(|i| {
        VariableSpec::categorical(
            format!("cat{i}"),
            (0..spec.categories).map(|c| format!("c{c}")),
        )
    }));
    Ok((DatasetSchema::new(variables)?, rows))
}

/// Two numerical columns where the second is an exact copy of the first,
/// plus `extra` independent uniform columns.
pub fn duplicated_column(
    rows: usize,
    extra: usize,
    seed: u64,
) -> Result<(DatasetSchema, Vec<Vec<RawValue>>)> {
    let mut rng = rng::stream(seed, 0);
    let data = (0..rows)
        .map(|_| {
            let x: f64 = rng.random();
            let mut row = vec![RawValue::Number(x), RawValue::Number(x)];
            row.extend((0..extra).map(|_| RawValue::Number(rng.random())));
            row
        })
        .collect();
    let mut variables = vec![
        VariableSpec::numerical("x"),
        VariableSpec::numerical("x_copy"),
    ];
    variables.extend((0..extra).map(|i| VariableSpec::numerical(format!("u{i}"))));
    Ok((DatasetSchema::new(variables)?, data))
}
