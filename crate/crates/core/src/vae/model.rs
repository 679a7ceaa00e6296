use serde::{Deserialize, Serialize};

use crate::batching::{sequential_chunks, shuffled_batches, EVAL_CHUNK};
use crate::diffcore::{grad_check, AdamState, Bindings, Graph, NodeId, Noise, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::gain::reconstruction_loss_node;
use crate::hyper::HyperParams;
use crate::netblocks::{Dense, LayerStack, MultiInputAdapter, OutputHead};
use crate::rng::{self, purpose};
use crate::tabular::{AmputedDataset, DatasetSchema};

/// Bounds applied to the encoder's log-variance.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// `−½ Σ (1 + logvar − mu² − exp(logvar))`.
pub fn kl_gaussian(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::Invalid(format!(
            "mu has {} entries, logvar {}",
            mu.len(),
            logvar.len()
        )));
    }
    Ok(-0.5
        * mu.iter()
            .zip(logvar)
            .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
            .sum::<f64>())
}

/// Mean losses over the minibatches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Copy)]
pub(super) struct Nodes {
    pub mu: NodeId,
    pub logvar: NodeId,
    pub z: NodeId,
    pub x_hat: NodeId,
    pub rec: NodeId,
    pub kl: NodeId,
    pub loss: NodeId,
}

/// Encoder, reparameterised latent and decoder in one graph.
///
/// Inputs: `x` (noisy data), `m` (mask, used only by the loss) and the
/// Gaussian sample leaf `eps`. Binding `eps` to zeros decodes the posterior mean.
#[derive(Debug)]
pub struct VaeModel {
    schema: DatasetSchema,
    hyper: HyperParams,
    pub(super) graph: Graph,
    pub(super) nodes: Nodes,
    latent_dim: usize,
    history: Vec<VaeEpoch>,
}

impl VaeModel {
    /// Freshly initialised model; initialisation draws from the `INIT` stream of `hyper.seed`.
    pub fn new(schema: &DatasetSchema, hyper: &HyperParams) -> Result<Self> {
        hyper.validate()?;
        if hyper.method.vae_procedure().is_none() {
            return Err(Error::Invalid(format!(
                "{} is not a VAE method",
                hyper.method
            )));
        }
        let mut init = rng::stream(hyper.seed, purpose::INIT);
        let rng = &mut init;
        let s = schema.total_features();
        let hidden = hyper.hidden_layout().widths(s);
        let latent_dim = hyper.latent_dim(s);
        let split = hyper.method.variable_split();
        let mut g = Graph::new();
        let x = g.input("x");
        let m = g.input("m");

        let (x_in, in_w) = if split {
            let a = MultiInputAdapter::new(
                &mut g,
                "enc.in",
                schema,
                hyper.embedding_dims.as_deref(),
                rng,
            )?;
            (a.apply(&mut g, x), a.output_width())
        } else {
            (x, s)
        };
        let mut widths = vec![in_w];
        widths.extend(&hidden);
        let enc = LayerStack::new(&mut g, "enc.hidden", &widths, rng)?;
        let h = enc.apply(&mut g, x_in);
        let mu_layer = Dense::new(&mut g, "enc.mu", enc.output_width(), latent_dim, rng)?;
        let logvar_layer = Dense::new(&mut g, "enc.logvar", enc.output_width(), latent_dim, rng)?;
        let mu = mu_layer.apply(&mut g, h);
        let raw_logvar = logvar_layer.apply(&mut g, h);
        let logvar = g.clamp(raw_logvar, LOGVAR_MIN, LOGVAR_MAX);

        let eps = g.sample("eps", Noise::Gaussian, mu, latent_dim);
        let half = g.affine(logvar, 0.5, 0.0);
        let std = g.exp(half);
        let spread = g.mul(std, eps);
        let z = g.add(mu, spread);

        let mut widths = vec![latent_dim];
        widths.extend(hidden.iter().rev());
        let dec = LayerStack::new(&mut g, "dec.hidden", &widths, rng)?;
        let dh = dec.apply(&mut g, z);
        let head = OutputHead::for_schema(
            &mut g,
            "dec.out",
            schema,
            dec.output_width(),
            split,
            hyper.tau,
            rng,
        )?;
        let x_hat = head.apply(&mut g, dh, "dec.noise")?;

        let rec = reconstruction_loss_node(&mut g, schema, x, x_hat, m);
        let one_plus = g.affine(logvar, 1.0, 1.0);
        let mu_sq = g.square(mu);
        let var = g.exp(logvar);
        let partial = g.sub(one_plus, mu_sq);
        let terms = g.sub(partial, var);
        let per_row = g.batch_mean(terms);
        let kl = g.affine(per_row, -0.5, 0.0);
        let loss = g.add(rec, kl);

        Ok(VaeModel {
            schema: schema.clone(),
            hyper: hyper.clone(),
            graph: g,
            nodes: Nodes {
                mu,
                logvar,
                z,
                x_hat,
                rec,
                kl,
                loss,
            },
            latent_dim,
            history: Vec::new(),
        })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn params(&self) -> &ParamStore {
        self.graph.params()
    }

    /// Replaces every parameter; names and shapes must match this architecture.
    pub fn set_params(&mut self, params: &ParamStore) -> Result<()> {
        if params.len() != self.graph.params().len() {
            return Err(Error::Invalid(format!(
                "{} parameters given, model has {}",
                params.len(),
                self.graph.params().len()
            )));
        }
        for (name, value) in params {
            self.graph.set_param(name, value.clone())?;
        }
        Ok(())
    }

    pub fn history(&self) -> &[VaeEpoch] {
        &self.history
    }

    pub(super) fn check_width(&self, t: &Tensor, what: &str) -> Result<()> {
        let s = self.schema.total_features();
        if t.rank() != 2 || t.cols() != s {
            return Err(Error::Invalid(format!(
                "{what} has shape {:?}, expected {s} columns",
                t.shape()
            )));
        }
        Ok(())
    }

    pub(super) fn check_data(&self, data: &AmputedDataset) -> Result<()> {
        if data.cols() != self.schema.total_features() {
            return Err(Error::Schema(format!(
                "data has {} columns, model expects {}",
                data.cols(),
                self.schema.total_features()
            )));
        }
        Ok(())
    }

    /// Bindings with the latent noise pinned to zero (`z = mu`).
    pub(super) fn mean_bindings(&self, x: Tensor, m: Tensor) -> Bindings {
        let eps = Tensor::zeros(x.rows(), self.latent_dim);
        [
            ("x".to_string(), x),
            ("m".to_string(), m),
            ("eps".to_string(), eps),
        ]
        .into()
    }

    /// Loss `L_rec + KL` over a whole dataset, decoding the posterior mean.
    pub fn evaluate_loss(&mut self, data: &AmputedDataset, rng: &mut rng::Rng) -> Result<f64> {
        self.check_data(data)?;
        let mut total = 0.0;
        for idx in sequential_chunks(data.rows(), EVAL_CHUNK) {
            let b = self.mean_bindings(data.data.batch_tensor(&idx), data.mask.batch_tensor(&idx));
            total += self.graph.forward(self.nodes.loss, &b, rng)?.item() * idx.len() as f64;
        }
        Ok(total / data.rows() as f64)
    }

    /// Worst relative error between reverse-mode and central-difference
    /// gradients of the training loss on `data`, with latent and output noise
    /// frozen to the draws of `noise`.
    pub fn grad_check_loss(
        &mut self,
        data: &AmputedDataset,
        noise: &rng::Rng,
        eps: f64,
    ) -> Result<f64> {
        self.check_data(data)?;
        let b: Bindings = [
            ("x".to_string(), data.data.to_tensor()),
            ("m".to_string(), data.mask.to_tensor()),
        ]
        .into();
        grad_check(&mut self.graph, self.nodes.loss, &b, noise, eps)
    }

    /// Decoder output for rows of `x`, through the posterior mean.
    pub fn reconstruct(&mut self, x: &Tensor, rng: &mut rng::Rng) -> Result<Tensor> {
        self.check_width(x, "input")?;
        let b = self.mean_bindings(x.clone(), Tensor::zeros(x.rows(), x.cols()));
        self.graph.forward(self.nodes.x_hat, &b, rng)
    }
}

/// `(mu, logvar, z)` with `z = mu + exp(logvar / 2) ⊙ ε`, `ε ~ N(0, 1)` drawn from `rng`.
pub fn encode_latent(
    model: &mut VaeModel,
    x: &Tensor,
    rng: &mut rng::Rng,
) -> Result<(Tensor, Tensor, Tensor)> {
    model.check_width(x, "input")?;
    let b: Bindings = [("x".to_string(), x.clone())].into();
    let n = model.nodes;
    model.graph.evaluate(&[n.mu, n.logvar, n.z], &b, rng)?;
    Ok((
        model.graph.value(n.mu)?.clone(),
        model.graph.value(n.logvar)?.clone(),
        model.graph.value(n.z)?.clone(),
    ))
}

/// Minibatch Adam on the masked reconstruction loss plus KL.
pub fn train_vae(
    train: &AmputedDataset,
    schema: &DatasetSchema,
    hyper: &HyperParams,
) -> Result<VaeModel> {
    if train.cols() != schema.total_features() {
        return Err(Error::Schema(format!(
            "training data has {} columns, schema encodes {}",
            train.cols(),
            schema.total_features()
        )));
    }
    if train.rows() == 0 {
        return Err(Error::Invalid("no training rows".into()));
    }
    let mut model = VaeModel::new(schema, hyper)?;
    let mut rng = rng::stream(hyper.seed, purpose::TRAIN);
    let mut adam = AdamState::default();
    let n = model.nodes;
    for epoch in 0..hyper.epochs {
        let batches = shuffled_batches(train.rows(), hyper.batch_size, &mut rng);
        let (mut loss, mut rec, mut kl) = (0.0, 0.0, 0.0);
        for idx in &batches {
            let b: Bindings = [
                ("x".to_string(), train.data.batch_tensor(idx)),
                ("m".to_string(), train.mask.batch_tensor(idx)),
            ]
            .into();
            model
                .graph
                .evaluate(&[n.loss, n.rec, n.kl], &b, &mut rng)
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Diverged {
                        epoch,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
            loss += model.graph.value(n.loss)?.item();
            rec += model.graph.value(n.rec)?.item();
            kl += model.graph.value(n.kl)?.item();
            let grads = model.graph.backward(n.loss)?;
            adam.step(model.graph.params_mut(), &grads, hyper.lr)?;
        }
        let count = batches.len() as f64;
        let record = VaeEpoch {
            epoch,
            loss: loss / count,
            reconstruction: rec / count,
            kl: kl / count,
        };
        if !record.loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: record.loss,
            });
        }
        model.history.push(record);
    }
    Ok(model)
}
