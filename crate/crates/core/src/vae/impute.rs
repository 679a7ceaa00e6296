use serde::{Deserialize, Serialize};

use super::model::VaeModel;
use crate::batching::{sequential_chunks, EVAL_CHUNK};
use crate::diffcore::{AdamState, Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::rng;
use crate::tabular::{merge_observed, AmputedDataset, EncodedMatrix};

/// Stopping rule and input optimizer settings of the iterative procedures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeConfig {
    pub i_max: usize,
    pub e_min: f64,
    /// Adam learning rate on the imputed values (backprop procedure only).
    pub lr: f64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        IterativeConfig {
            i_max: 10_000,
            e_min: 1e-4,
            lr: 1e-2,
        }
    }
}

impl IterativeConfig {
    pub fn from_hyper(h: &HyperParams) -> Self {
        IterativeConfig {
            i_max: h.i_max,
            e_min: h.e_min,
            lr: h.bp_lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.i_max == 0 {
            return Err(Error::Invalid("i_max must be at least 1".into()));
        }
        if !(self.e_min > 0.0) {
            return Err(Error::Invalid(format!(
                "e_min {} must be positive",
                self.e_min
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Invalid(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Result of an iterative imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeImputation {
    pub matrix: EncodedMatrix,
    pub iterations_used: usize,
    /// Reconstruction error on observed cells at the last iteration.
    pub final_error: f64,
}

/// One pass through the model, noise left in missing cells; observed cells
/// are copied back unchanged.
pub fn impute_vae(
    model: &mut VaeModel,
    amputed: &AmputedDataset,
    rng: &mut rng::Rng,
) -> Result<EncodedMatrix> {
    model.check_data(amputed)?;
    let mut values = Vec::with_capacity(amputed.rows() * amputed.cols());
    for idx in sequential_chunks(amputed.rows(), EVAL_CHUNK) {
        let x_hat = model.reconstruct(&amputed.data.batch_tensor(&idx), rng)?;
        values.extend_from_slice(x_hat.data());
    }
    let x_hat = EncodedMatrix::new(amputed.rows(), amputed.cols(), values)?;
    Ok(merge_observed(&amputed.data, &amputed.mask, &x_hat))
}

struct Pass {
    output: EncodedMatrix,
    error: f64,
    grads: Option<Vec<Tensor>>,
}

/// Runs `current` through the model chunk by chunk and measures the masked
/// reconstruction error of the raw output against `amputed`'s observed cells.
/// With `with_grads`, also returns `∂e/∂input` per chunk.
fn pass(
    model: &mut VaeModel,
    current: &EncodedMatrix,
    amputed: &AmputedDataset,
    chunks: &[Vec<usize>],
    with_grads: bool,
    rng: &mut rng::Rng,
) -> Result<Pass> {
    let n = amputed.rows() as f64;
    let nodes = model.nodes;
    let mut values = Vec::with_capacity(current.values().len());
    let mut error = 0.0;
    let mut grads = with_grads.then(Vec::new);
    for idx in chunks {
        // observed cells of `current` equal those of `amputed`, so the loss
        // target taken from the input is the observed data where it counts
        let b = model.mean_bindings(current.batch_tensor(idx), amputed.mask.batch_tensor(idx));
        model.graph.evaluate(&[nodes.x_hat, nodes.rec], &b, rng)?;
        values.extend_from_slice(model.graph.value(nodes.x_hat)?.data());
        let share = idx.len() as f64 / n;
        error += model.graph.value(nodes.rec)?.item() * share;
        if let Some(gs) = grads.as_mut() {
            gs.push(
                model
                    .graph
                    .input_gradient(nodes.rec, "x")?
                    .map(|g| g * share),
            );
        }
    }
    Ok(Pass {
        output: EncodedMatrix::new(current.rows(), current.cols(), values)?,
        error,
        grads,
    })
}

fn iterate(
    model: &mut VaeModel,
    amputed: &AmputedDataset,
    cfg: &IterativeConfig,
    backprop: bool,
    rng: &mut rng::Rng,
) -> Result<IterativeImputation> {
    model.check_data(amputed)?;
    cfg.validate()?;
    let chunks = sequential_chunks(amputed.rows(), EVAL_CHUNK);
    let mut current = amputed.data.clone();
    let mut adam = AdamState::default();
    let mut i = 0;
    loop {
        let Pass {
            output,
            error,
            grads,
        } = pass(model, &current, amputed, &chunks, backprop, rng)?;
        let mut next = output;
        if let Some(grads) = grads {
            let mut store = ParamStore::new();
            let mut named = Gradients::new();
            for (c, (idx, g)) in chunks.iter().zip(grads).enumerate() {
                store.insert(format!("x{c}"), next.batch_tensor(idx));
                named.insert(format!("x{c}"), g);
            }
            adam.step(&mut store, &named, cfg.lr)?;
            let mut values = Vec::with_capacity(next.values().len());
            for c in 0..chunks.len() {
                values.extend_from_slice(store[&format!("x{c}")].data());
            }
            next = EncodedMatrix::new(next.rows(), next.cols(), values)?;
        }
        current = merge_observed(&amputed.data, &amputed.mask, &next);
        debug_assert!(current
            .values()
            .iter()
            .zip(amputed.data.values())
            .zip(amputed.mask.bits())
            .all(|((c, x), &m)| m == 0 || c.to_bits() == x.to_bits()));
        i += 1;
        if error <= cfg.e_min || i >= cfg.i_max {
            return Ok(IterativeImputation {
                matrix: current,
                iterations_used: i,
                final_error: error,
            });
        }
    }
}

/// Feeds the imputation back through the model until the error on observed
/// cells drops to `e_min` or `i_max` passes have run.
pub fn impute_vae_iterative(
    model: &mut VaeModel,
    amputed: &AmputedDataset,
    cfg: &IterativeConfig,
    rng: &mut rng::Rng,
) -> Result<IterativeImputation> {
    iterate(model, amputed, cfg, false, rng)
}

/// Like [`impute_vae_iterative`], but each pass also takes an Adam step on the
/// model output along `∂e/∂input` before the observed cells are restored.
/// Model parameters are never touched.
pub fn impute_vae_backprop(
    model: &mut VaeModel,
    amputed: &AmputedDataset,
    cfg: &IterativeConfig,
    rng: &mut rng::Rng,
) -> Result<IterativeImputation> {
    iterate(model, amputed, cfg, true, rng)
}
