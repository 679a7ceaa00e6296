//! One cell of the evaluation protocol: split, scale, ampute, select
//! hyperparameters on a validation holdout, train, impute and score.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model::TrainedModel;
use crate::error::{Error, Result};
use crate::hyper::{HiddenLayout, HyperParams, Method};
use crate::metrics::{rmse_missing, RunResult};
use crate::rng::{self, purpose, purpose_seed};
use crate::tabular::{
    ampute, encode, fit_scaling, harden_categoricals, infer_schema, parse_rows, split_train_test,
    AmputedDataset, DatasetSchema, EncodedMatrix, RawTable, RawValue,
};

/// Fraction of rows used for training; the rest is the test partition.
pub const TRAIN_RATIO: f64 = 0.9;
/// Fraction of the training partition held out to compare grid configurations.
pub const VALIDATION_RATIO: f64 = 0.9;

/// Rows the numerical min/max scaling is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingScope {
    Train,
    All,
}

impl FromStr for ScalingScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(ScalingScope::Train),
            "all" => Ok(ScalingScope::All),
            _ => Err(Error::Invalid(format!("unknown scaling scope `{s}`"))),
        }
    }
}

impl fmt::Display for ScalingScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingScope::Train => "train",
            ScalingScope::All => "all",
        })
    }
}

/// A complete table with its (unfitted) schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub schema: DatasetSchema,
    pub rows: Vec<Vec<RawValue>>,
}

impl Dataset {
    /// Reads a CSV; without a schema document, types are inferred.
    pub fn load(csv: &Path, schema: Option<&Path>) -> Result<Self> {
        let table = RawTable::read(csv)?;
        let schema = match schema {
            Some(p) => DatasetSchema::load(p)?,
            None => infer_schema(&table)?,
        };
        let names: Vec<&str> = schema.variables().iter().map(|v| v.name.as_str()).collect();
        if names != table.header.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Schema(format!(
                "CSV header does not match the schema variables of {}",
                csv.display()
            )));
        }
        let rows = parse_rows(&schema, &table.rows)?;
        let name = csv
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Ok(Dataset { name, schema, rows })
    }
}

/// Encoded partitions of one (p, seed) cell. The same inputs serve every method.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: DatasetSchema,
    pub train_truth: EncodedMatrix,
    pub test_truth: EncodedMatrix,
    pub train: AmputedDataset,
    pub test: AmputedDataset,
}

fn pick<T: Clone>(rows: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

/// 90/10 split, min/max scaling and independent amputation of both partitions.
pub fn prepare(
    dataset: &Dataset,
    missing_p: f64,
    seed: u64,
    scope: ScalingScope,
) -> Result<Prepared> {
    if !(missing_p > 0.0 && missing_p <= 1.0) {
        return Err(Error::Invalid(format!(
            "missing probability {missing_p} outside (0, 1]"
        )));
    }
    let split = split_train_test(
        dataset.rows.len(),
        TRAIN_RATIO,
        purpose_seed(seed, purpose::SPLIT),
    )?;
    let train_rows = pick(&dataset.rows, &split.train);
    let test_rows = pick(&dataset.rows, &split.test);
    let schema = match scope {
        ScalingScope::All => fit_scaling(&dataset.schema, &dataset.rows)?,
        ScalingScope::Train => fit_scaling(&dataset.schema, &train_rows)?,
    };
    let train_truth = encode(&schema, &train_rows)?;
    let test_truth = encode(&schema, &test_rows)?;
    let train = ampute(
        &train_truth,
        &schema,
        missing_p,
        purpose_seed(seed, purpose::AMPUTE_TRAIN),
    )?;
    let test = ampute(
        &test_truth,
        &schema,
        missing_p,
        purpose_seed(seed, purpose::AMPUTE_TEST),
    )?;
    Ok(Prepared {
        schema,
        train_truth,
        test_truth,
        train,
        test,
    })
}

/// Candidate values searched during selection; empty lists keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub hidden: Vec<HiddenLayout>,
    pub latent_fraction: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub lr: Vec<f64>,
    pub tau: Vec<f64>,
}

impl Grid {
    /// Every layout, latent size, batch size, learning rate and temperature
    /// the search space allows.
    pub fn full() -> Self {
        Grid {
            hidden: vec![
                HiddenLayout::none(),
                HiddenLayout(vec![0.5]),
                HiddenLayout(vec![1.0, 0.5]),
            ],
            latent_fraction: vec![0.1, 0.5, 1.0],
            batch_size: vec![64, 128, 256, 512, 1024],
            lr: vec![1e-3, 1e-5],
            tau: vec![0.1, 0.5, 1.0, 2.0, 10.0],
        }
    }

    /// Cartesian product over `base`. Latent sizes vary only for VAEs and
    /// temperatures only for split outputs.
    pub fn configs(&self, base: &HyperParams) -> Vec<HyperParams> {
        fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let method = base.method;
        let hidden: Vec<Option<HiddenLayout>> = if self.hidden.is_empty() {
            vec![base.hidden.clone()]
        } else {
            self.hidden.iter().cloned().map(Some).collect()
        };
        let latent = if method.is_gain() {
            vec![base.latent_fraction]
        } else {
            or_base(&self.latent_fraction, base.latent_fraction)
        };
        let tau = if method.variable_split() {
            or_base(&self.tau, base.tau)
        } else {
            vec![base.tau]
        };
        let mut out = Vec::new();
        for h in &hidden {
            for &l in &latent {
                for &b in &or_base(&self.batch_size, base.batch_size) {
                    for &lr in &or_base(&self.lr, base.lr) {
                        for &t in &tau {
                            out.push(HyperParams {
                                hidden: h.clone(),
                                latent_fraction: l,
                                batch_size: b,
                                lr,
                                tau: t,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Short label of the searched hyperparameters, stored with each result.
pub fn config_label(h: &HyperParams) -> String {
    let mut s = format!(
        "hidden={} batch={} lr={}",
        h.hidden_layout(),
        h.batch_size,
        h.lr
    );
    if !h.method.is_gain() {
        s.push_str(&format!(" latent={}", h.latent_fraction));
    }
    if h.method.variable_split() {
        s.push_str(&format!(" tau={}", h.tau));
    }
    s
}

/// Validation score of one grid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub dataset: String,
    pub method: Method,
    pub missing_p: f64,
    pub seed: u64,
    pub config: String,
    /// `None` when training failed; see `error`.
    pub validation_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Options shared by every cell of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub scaling: ScalingScope,
    pub harden_categoricals: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            scaling: ScalingScope::All,
            harden_categoricals: false,
        }
    }
}

fn score(
    schema: &DatasetSchema,
    truth: &EncodedMatrix,
    imputed: &EncodedMatrix,
    data: &AmputedDataset,
    harden: bool,
) -> Result<f64> {
    if harden {
        rmse_missing(truth, &harden_categoricals(schema, imputed), &data.mask)
    } else {
        rmse_missing(truth, imputed, &data.mask)
    }
}

/// Picks the configuration with the lowest missing-cell RMSE on a holdout of
/// the training partition (ties go to the earlier configuration).
pub fn select(
    prepared: &Prepared,
    configs: &[HyperParams],
    dataset: &str,
    missing_p: f64,
    seed: u64,
    harden: bool,
) -> Result<(HyperParams, Vec<SelectionRecord>)> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Invalid("empty hyperparameter grid".into()))?;
    if configs.len() == 1 {
        return Ok((first.clone(), Vec::new()));
    }
    let holdout = split_train_test(
        prepared.train.rows(),
        VALIDATION_RATIO,
        purpose_seed(seed, purpose::VALIDATION),
    )?;
    let fit = prepared.train.select_rows(&holdout.train);
    let valid = prepared.train.select_rows(&holdout.test);
    let valid_truth = prepared.train_truth.select_rows(&holdout.test);
    let family = family_method(first.method);
    let mut best: Option<(f64, &HyperParams)> = None;
    let mut records = Vec::with_capacity(configs.len());
    for h in configs {
        let outcome = (|| {
            let mut model = TrainedModel::train(&fit, &prepared.schema, h)?;
            let mut r = rng::stream(h.seed, purpose::IMPUTE);
            let imputed = model.impute(&valid, family, &mut r)?;
            score(
                &prepared.schema,
                &valid_truth,
                &imputed.matrix,
                &valid,
                harden,
            )
        })();
        let (rmse, error) = match outcome {
            Ok(v) => (Some(v), None),
            // a holdout without missing cells cannot rank configurations
            Err(Error::UndefinedMetric(_)) => return Ok((first.clone(), Vec::new())),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(v) = rmse {
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, h));
            }
        }
        records.push(SelectionRecord {
            dataset: dataset.to_string(),
            method: family,
            missing_p,
            seed,
            config: config_label(h),
            validation_rmse: rmse,
            error,
        });
    }
    let chosen = best
        .map(|(_, h)| h.clone())
        .ok_or_else(|| Error::Invalid("every grid configuration failed".into()))?;
    Ok((chosen, records))
}

/// Method whose plain imputation represents a training family during selection.
pub fn family_method(method: Method) -> Method {
    match method {
        Method::Gain | Method::GainVs => method,
        Method::Vae | Method::VaeIt | Method::VaeBp => Method::Vae,
        Method::VaeVs | Method::VaeVsIt | Method::VaeVsBp => Method::VaeVs,
    }
}

/// Everything one family of methods produced in one cell.
#[derive(Debug)]
pub struct CellOutcome {
    pub results: Vec<RunResult>,
    pub selection: Vec<SelectionRecord>,
    pub model: TrainedModel,
}

/// Selects, trains once and imputes the test partition with each method of
/// `methods`, which must share a training family (e.g. `vae`, `vae+it`).
pub fn run_family(
    dataset: &str,
    prepared: &Prepared,
    methods: &[Method],
    grid: &[HyperParams],
    missing_p: f64,
    seed: u64,
    harden: bool,
) -> Result<CellOutcome> {
    let family = family_method(
        *methods
            .first()
            .ok_or_else(|| Error::Invalid("no methods".into()))?,
    );
    if methods.iter().any(|m| family_method(*m) != family) {
        return Err(Error::Invalid(
            "methods of different families in one cell".into(),
        ));
    }
    let started = Instant::now();
    let (chosen, selection) = select(prepared, grid, dataset, missing_p, seed, harden)?;
    let mut model = TrainedModel::train(&prepared.train, &prepared.schema, &chosen)?;
    let training_time = started.elapsed().as_secs_f64();
    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let t0 = Instant::now();
        let mut r = rng::stream(chosen.seed, purpose::IMPUTE);
        let imputed = model.impute(&prepared.test, method, &mut r)?;
        let rmse = score(
            &prepared.schema,
            &prepared.test_truth,
            &imputed.matrix,
            &prepared.test,
            harden,
        )?;
        results.push(RunResult {
            dataset: dataset.to_string(),
            method,
            missing_p,
            seed,
            rmse,
            iterations_used: imputed.iterations_used,
            config: config_label(&chosen),
            wall_time: training_time + t0.elapsed().as_secs_f64(),
        });
    }
    Ok(CellOutcome {
        results,
        selection,
        model,
    })
}
