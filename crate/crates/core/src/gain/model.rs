use serde::{Deserialize, Serialize};

use super::losses::{discriminator_loss_node, generator_loss_node, reconstruction_loss_node};
use crate::batching::{sequential_chunks, shuffled_batches, EVAL_CHUNK};
use crate::diffcore::{
    grad_check, AdamState, Bindings, Gradients, Graph, NodeId, ParamStore, Tensor,
};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::netblocks::{Dense, LayerStack, MultiInputAdapter, OutputHead};
use crate::rng::{self, purpose};
use crate::tabular::{merge_observed, AmputedDataset, DatasetSchema, EncodedMatrix};

const GEN: &str = "gen.";
const DISC: &str = "disc.";

/// Mean losses over the minibatches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub discriminator: f64,
    pub generator: f64,
    pub reconstruction: f64,
}

#[derive(Debug, Clone, Copy)]
struct Nodes {
    x_hat: NodeId,
    m_hat: NodeId,
    probe_m_hat: NodeId,
    loss_d: NodeId,
    loss_adv: NodeId,
    loss_rec: NodeId,
    loss_g: NodeId,
}

/// Generator and discriminator sharing one graph.
///
/// Inputs: `x` (observed data with noise in missing cells) and `m` (mask).
/// The discriminator sees `x ⊙ m + x̂ ⊙ (1 − m)` during training; the same
/// layers are also wired to a free input `probe` for [`discriminator_forward`].
#[derive(Debug)]
pub struct GainModel {
    schema: DatasetSchema,
    hyper: HyperParams,
    graph: Graph,
    nodes: Nodes,
    history: Vec<EpochLosses>,
}

fn input_stage<R: rand::Rng + ?Sized>(
    graph: &mut Graph,
    name: &str,
    schema: &DatasetSchema,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<Option<MultiInputAdapter>> {
    if !hyper.method.variable_split() {
        return Ok(None);
    }
    MultiInputAdapter::new(graph, name, schema, hyper.embedding_dims.as_deref(), rng).map(Some)
}

impl GainModel {
    /// Freshly initialised model; initialisation draws from the `INIT` stream of `hyper.seed`.
    pub fn new(schema: &DatasetSchema, hyper: &HyperParams) -> Result<Self> {
        hyper.validate()?;
        if !hyper.method.is_gain() {
            return Err(Error::Invalid(format!(
                "{} is not a GAIN method",
                hyper.method
            )));
        }
        let mut init = rng::stream(hyper.seed, purpose::INIT);
        let rng = &mut init;
        let s = schema.total_features();
        let hidden = hyper.hidden_layout().widths(s);
        let split = hyper.method.variable_split();
        let mut g = Graph::new();
        let x = g.input("x");
        let m = g.input("m");

        let gen_in = input_stage(&mut g, "gen.in", schema, hyper, rng)?;
        let (x_in, x_w) = match &gen_in {
            Some(a) => (a.apply(&mut g, x), a.output_width()),
            None => (x, s),
        };
        let joined = g.concat(vec![x_in, m]);
        let mut widths = vec![x_w + s];
        widths.extend(&hidden);
        let gen_stack = LayerStack::new(&mut g, "gen.hidden", &widths, rng)?;
        let h = gen_stack.apply(&mut g, joined);
        let head = OutputHead::for_schema(
            &mut g,
            "gen.out",
            schema,
            gen_stack.output_width(),
            split,
            hyper.tau,
            rng,
        )?;
        let x_hat = head.apply(&mut g, h, "gen.noise")?;

        let kept = g.mul(x, m);
        let not_m = g.affine(m, -1.0, 1.0);
        let filled = g.mul(x_hat, not_m);
        let merged = g.add(kept, filled);

        let disc_in = input_stage(&mut g, "disc.in", schema, hyper, rng)?;
        let d_w = disc_in.as_ref().map_or(s, MultiInputAdapter::output_width);
        let mut widths = vec![d_w];
        widths.extend(&hidden);
        let disc_stack = LayerStack::new(&mut g, "disc.hidden", &widths, rng)?;
        let disc_out = Dense::new(&mut g, "disc.out", disc_stack.output_width(), s, rng)?;
        let discriminate = |g: &mut Graph, input: NodeId| {
            let v = match &disc_in {
                Some(a) => a.apply(g, input),
                None => input,
            };
            let h = disc_stack.apply(g, v);
            let logits = disc_out.apply(g, h);
            g.sigmoid(logits)
        };
        let m_hat = discriminate(&mut g, merged);
        let probe = g.input("probe");
        let probe_m_hat = discriminate(&mut g, probe);

        let loss_d = discriminator_loss_node(&mut g, m, m_hat, hyper.dloss_missing_only);
        let loss_adv = generator_loss_node(&mut g, m, m_hat);
        let loss_rec = reconstruction_loss_node(&mut g, schema, x, x_hat, m);
        let weighted = g.affine(loss_rec, hyper.alpha, 0.0);
        let loss_g = g.add(loss_adv, weighted);

        Ok(GainModel {
            schema: schema.clone(),
            hyper: hyper.clone(),
            graph: g,
            nodes: Nodes {
                x_hat,
                m_hat,
                probe_m_hat,
                loss_d,
                loss_adv,
                loss_rec,
                loss_g,
            },
            history: Vec::new(),
        })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn alpha(&self) -> f64 {
        self.hyper.alpha
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

    /// Per-epoch mean losses of the last training run.
    pub fn history(&self) -> &[EpochLosses] {
        &self.history
    }

    fn check_width(&self, t: &Tensor, what: &str) -> Result<()> {
        let s = self.schema.total_features();
        if t.rank() != 2 || t.cols() != s {
            return Err(Error::Invalid(format!(
                "{what} has shape {:?}, expected {s} columns",
                t.shape()
            )));
        }
        Ok(())
    }

    /// Worst relative error between reverse-mode and central-difference
    /// gradients of `L_D` and `L_G + α·L_rec` on `data`, with the noise of
    /// every sample leaf frozen to the draws of `noise`.
    pub fn grad_check_losses(
        &mut self,
        data: &AmputedDataset,
        noise: &rng::Rng,
        eps: f64,
    ) -> Result<f64> {
        if data.cols() != self.schema.total_features() {
            return Err(Error::Schema(format!(
                "data has {} columns, model expects {}",
                data.cols(),
                self.schema.total_features()
            )));
        }
        let b = Self::bindings(data.data.to_tensor(), data.mask.to_tensor());
        let mut worst: f64 = 0.0;
        for loss in [self.nodes.loss_d, self.nodes.loss_g] {
            worst = worst.max(grad_check(&mut self.graph, loss, &b, noise, eps)?);
        }
        Ok(worst)
    }

    fn bindings(x_bar: Tensor, mask: Tensor) -> Bindings {
        [("x".to_string(), x_bar), ("m".to_string(), mask)].into()
    }

    /// Evaluates `roots` once and updates the parameters under `prefix` along `∇ roots[0]`.
    fn step(
        &mut self,
        roots: &[NodeId],
        prefix: &str,
        adam: &mut AdamState,
        bindings: &Bindings,
        rng: &mut rng::Rng,
    ) -> Result<()> {
        let loss = roots[0];
        self.graph.evaluate(roots, bindings, rng)?;
        let grads: Gradients = self
            .graph
            .backward(loss)?
            .into_iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .collect();
        adam.step(self.graph.params_mut(), &grads, self.hyper.lr)
    }

    /// One discriminator update on a batch; returns `L_D` before the update.
    pub fn discriminator_step(
        &mut self,
        x_bar: &Tensor,
        mask: &Tensor,
        adam: &mut AdamState,
        rng: &mut rng::Rng,
    ) -> Result<f64> {
        let b = Self::bindings(x_bar.clone(), mask.clone());
        self.step(&[self.nodes.loss_d], DISC, adam, &b, rng)?;
        Ok(self.graph.value(self.nodes.loss_d)?.item())
    }

    /// Discriminator loss on a batch at the current parameters.
    pub fn discriminator_loss(
        &mut self,
        x_bar: &Tensor,
        mask: &Tensor,
        rng: &mut rng::Rng,
    ) -> Result<f64> {
        let b = Self::bindings(x_bar.clone(), mask.clone());
        Ok(self.graph.forward(self.nodes.loss_d, &b, rng)?.item())
    }

    /// One generator update; returns `(L_G, L_rec)` before the update.
    pub fn generator_step(
        &mut self,
        x_bar: &Tensor,
        mask: &Tensor,
        adam: &mut AdamState,
        rng: &mut rng::Rng,
    ) -> Result<(f64, f64)> {
        let b = Self::bindings(x_bar.clone(), mask.clone());
        let n = self.nodes;
        self.step(&[n.loss_g, n.loss_adv, n.loss_rec], GEN, adam, &b, rng)?;
        Ok((
            self.graph.value(n.loss_adv)?.item(),
            self.graph.value(n.loss_rec)?.item(),
        ))
    }

    /// `(x̂, m̂)` for a batch, with the discriminator applied to the merged imputation.
    pub fn forward_pair(
        &mut self,
        x_bar: &Tensor,
        mask: &Tensor,
        rng: &mut rng::Rng,
    ) -> Result<(Tensor, Tensor)> {
        self.check_width(x_bar, "x_bar")?;
        self.check_width(mask, "mask")?;
        let b = Self::bindings(x_bar.clone(), mask.clone());
        self.graph
            .evaluate(&[self.nodes.x_hat, self.nodes.m_hat], &b, rng)?;
        Ok((
            self.graph.value(self.nodes.x_hat)?.clone(),
            self.graph.value(self.nodes.m_hat)?.clone(),
        ))
    }
}

/// Generator output `x̂` for rows of noisy data and their mask.
pub fn generator_forward(
    model: &mut GainModel,
    x_bar: &Tensor,
    mask: &Tensor,
    rng: &mut rng::Rng,
) -> Result<Tensor> {
    model.check_width(x_bar, "x_bar")?;
    model.check_width(mask, "mask")?;
    if x_bar.shape() != mask.shape() {
        return Err(Error::Invalid("x_bar and mask shapes differ".into()));
    }
    let b = GainModel::bindings(x_bar.clone(), mask.clone());
    model.graph.forward(model.nodes.x_hat, &b, rng)
}

/// Discriminator estimate of the probability that each feature was observed.
pub fn discriminator_forward(model: &mut GainModel, x_hat: &Tensor) -> Result<Tensor> {
    model.check_width(x_hat, "discriminator input")?;
    let b: Bindings = [("probe".to_string(), x_hat.clone())].into();
    // the discriminator is deterministic; the rng is never consulted
    model
        .graph
        .forward(model.nodes.probe_m_hat, &b, &mut rng::stream(0, 0))
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::NonFinite { .. } => Error::Diverged {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Alternating adversarial training: per minibatch one discriminator step on
/// `L_D`, then one generator step on `L_G + α·L_rec`.
pub fn train_gain(
    train: &AmputedDataset,
    schema: &DatasetSchema,
    hyper: &HyperParams,
) -> Result<GainModel> {
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
    let mut model = GainModel::new(schema, hyper)?;
    let mut rng = rng::stream(hyper.seed, purpose::TRAIN);
    let mut adam_d = AdamState::default();
    let mut adam_g = AdamState::default();
    for epoch in 0..hyper.epochs {
        let batches = shuffled_batches(train.rows(), hyper.batch_size, &mut rng);
        let (mut ld, mut lg, mut lr) = (0.0, 0.0, 0.0);
        for idx in &batches {
            let xb = train.data.batch_tensor(idx);
            let mb = train.mask.batch_tensor(idx);
            let d = model
                .discriminator_step(&xb, &mb, &mut adam_d, &mut rng)
                .map_err(|e| diverged(epoch, e))?;
            let (g, r) = model
                .generator_step(&xb, &mb, &mut adam_g, &mut rng)
                .map_err(|e| diverged(epoch, e))?;
            ld += d;
            lg += g;
            lr += r;
        }
        let n = batches.len() as f64;
        let losses = EpochLosses {
            epoch,
            discriminator: ld / n,
            generator: lg / n,
            reconstruction: lr / n,
        };
        for v in [
            losses.discriminator,
            losses.generator,
            losses.reconstruction,
        ] {
            if !v.is_finite() {
                return Err(Error::Diverged { epoch, loss: v });
            }
        }
        model.history.push(losses);
    }
    Ok(model)
}

/// `x̄ ⊙ m + x̂ ⊙ (1 − m)` over every row of `amputed`.
pub fn impute_gain(
    model: &mut GainModel,
    amputed: &AmputedDataset,
    rng: &mut rng::Rng,
) -> Result<EncodedMatrix> {
    if amputed.cols() != model.schema.total_features() {
        return Err(Error::Schema(format!(
            "data has {} columns, model expects {}",
            amputed.cols(),
            model.schema.total_features()
        )));
    }
    let mut values = Vec::with_capacity(amputed.rows() * amputed.cols());
    for idx in sequential_chunks(amputed.rows(), EVAL_CHUNK) {
        let x_hat = generator_forward(
            model,
            &amputed.data.batch_tensor(&idx),
            &amputed.mask.batch_tensor(&idx),
            rng,
        )?;
        values.extend_from_slice(x_hat.data());
    }
    let x_hat = EncodedMatrix::new(amputed.rows(), amputed.cols(), values)?;
    Ok(merge_observed(&amputed.data, &amputed.mask, &x_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::grad_check;
    use crate::hyper::Method;
    use crate::tabular::synth::{duplicated_column, mixed, MixedSpec};
    use crate::tabular::{ampute, encode, fit_scaling};
    use rand::Rng;

    fn mixed_data(rows: usize, seed: u64) -> (DatasetSchema, EncodedMatrix) {
        let (schema, raw) = mixed(&MixedSpec {
            rows,
            numerical: 2,
            categorical: 2,
            seed,
            ..MixedSpec::default()
        })
        .unwrap();
        let fitted = fit_scaling(&schema, &raw).unwrap();
        let m = encode(&fitted, &raw).unwrap();
        (fitted, m)
    }

    fn hyper(method: Method, epochs: usize) -> HyperParams {
        HyperParams {
            method,
            epochs,
            batch_size: 32,
            ..HyperParams::for_method(method)
        }
    }

    #[test]
    fn generator_output_ranges() {
        let (schema, data) = mixed_data(50, 1);
        let amputed = ampute(&data, &schema, 0.3, 2).unwrap();
        for method in [Method::Gain, Method::GainVs] {
            let mut model = GainModel::new(&schema, &hyper(method, 1)).unwrap();
            let x = amputed.data.to_tensor();
            let m = amputed.mask.to_tensor();
            let out = generator_forward(&mut model, &x, &m, &mut rng::stream(0, 0)).unwrap();
            assert_eq!(out.shape(), x.shape());
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let again = generator_forward(&mut model, &x, &m, &mut rng::stream(0, 0)).unwrap();
            assert_eq!(out, again);
            if method == Method::GainVs {
                for r in 0..out.rows() {
                    for b in schema.categorical_blocks() {
                        let sum: f64 = out.row_slice(r)[b.start..b.end].iter().sum();
                        assert!((sum - 1.0).abs() < 1e-12);
                    }
                }
            }
            assert!(generator_forward(
                &mut model,
                &Tensor::zeros(2, 3),
                &Tensor::zeros(2, 3),
                &mut rng::stream(0, 0)
            )
            .is_err());
        }
    }

    #[test]
    fn untrained_discriminator_is_undecided() {
        let (schema, _) = mixed_data(10, 1);
        let s = schema.total_features();
        let mut r = rng::stream(4, 0);
        let probe =
            Tensor::matrix(1000, s, (0..1000 * s).map(|_| r.random::<f64>()).collect()).unwrap();
        for method in [Method::Gain, Method::GainVs] {
            let mut model = GainModel::new(&schema, &hyper(method, 1)).unwrap();
            let out = discriminator_forward(&mut model, &probe).unwrap();
            assert_eq!(out.shape(), &[1000, s]);
            assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
            let mean = out.sum() / out.len() as f64;
            assert!(mean > 0.2 && mean < 0.8, "{method}: {mean}");
        }
    }

    #[test]
    fn discriminator_step_does_not_increase_its_loss() {
        let (schema, data) = mixed_data(400, 3);
        let amputed = ampute(&data, &schema, 0.4, 5).unwrap();
        let mut h = hyper(Method::Gain, 1);
        h.lr = 1e-4;
        let mut model = GainModel::new(&schema, &h).unwrap();
        let mut r = rng::stream(6, 0);
        for batch in shuffled_batches(400, 20, &mut r) {
            let x = amputed.data.batch_tensor(&batch);
            let m = amputed.mask.batch_tensor(&batch);
            let mut adam = AdamState::default();
            let before = model.discriminator_step(&x, &m, &mut adam, &mut r).unwrap();
            let after = model.discriminator_loss(&x, &m, &mut r).unwrap();
            assert!(after <= before, "{after} > {before}");
        }
    }

    #[test]
    fn model_losses_pass_grad_check() {
        let (schema, data) = mixed_data(6, 9);
        let amputed = ampute(&data, &schema, 0.5, 1).unwrap();
        for method in [Method::Gain, Method::GainVs] {
            let mut h = hyper(method, 1);
            h.hidden = Some(crate::hyper::HiddenLayout(vec![0.5]));
            let mut model = GainModel::new(&schema, &h).unwrap();
            let b = GainModel::bindings(amputed.data.to_tensor(), amputed.mask.to_tensor());
            for loss in [model.nodes.loss_d, model.nodes.loss_g] {
                let err = grad_check(&mut model.graph, loss, &b, &rng::stream(2, 0), 1e-6).unwrap();
                assert!(err < 1e-3, "{method}: {err}");
            }
        }
    }

    #[test]
    fn imputation_keeps_observed_values() {
        let (schema, data) = mixed_data(120, 2);
        for method in [Method::Gain, Method::GainVs] {
            let train = ampute(&data, &schema, 0.3, 7).unwrap();
            let mut model = train_gain(&train, &schema, &hyper(method, 2)).unwrap();
            let full = ampute(&data, &schema, 0.0, 1).unwrap();
            let out = impute_gain(&mut model, &full, &mut rng::stream(0, 0)).unwrap();
            assert_eq!(out, data);

            let out = impute_gain(&mut model, &train, &mut rng::stream(0, 0)).unwrap();
            assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
            for ((o, x), m) in out
                .values()
                .iter()
                .zip(train.data.values())
                .zip(train.mask.bits())
            {
                if *m == 1 {
                    assert_eq!(o.to_bits(), x.to_bits());
                }
            }
            let again = AmputedDataset {
                data: out.clone(),
                ..train.clone()
            };
            let twice = impute_gain(&mut model, &again, &mut rng::stream(1, 0)).unwrap();
            for ((a, b), m) in twice
                .values()
                .iter()
                .zip(out.values())
                .zip(train.mask.bits())
            {
                if *m == 1 {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (schema, data) = mixed_data(100, 4);
        let train = ampute(&data, &schema, 0.3, 3).unwrap();
        let h = hyper(Method::GainVs, 3);
        let a = train_gain(&train, &schema, &h).unwrap();
        let b = train_gain(&train, &schema, &h).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.history(), b.history());
        assert_eq!(a.history().len(), 3);
    }

    #[test]
    fn training_learns_a_copied_column() {
        let (schema, raw) = duplicated_column(1000, 2, 11).unwrap();
        let fitted = fit_scaling(&schema, &raw).unwrap();
        let data = encode(&fitted, &raw).unwrap();
        let train = ampute(&data, &fitted, 0.2, 1).unwrap();
        let test = ampute(&data, &fitted, 0.2, 2).unwrap();
        let copy_rmse = |out: &EncodedMatrix| {
            let (mut sq, mut n) = (0.0, 0);
            for r in 0..out.rows() {
                if !test.mask.is_observed(r, 1) {
                    sq += (out.get(r, 1) - data.get(r, 1)).powi(2);
                    n += 1;
                }
            }
            (sq / n as f64).sqrt()
        };
        let h = HyperParams {
            lr: 1e-3,
            ..hyper(Method::Gain, 100)
        };
        let mut untrained = GainModel::new(&fitted, &h).unwrap();
        let before =
            copy_rmse(&impute_gain(&mut untrained, &test, &mut rng::stream(0, 0)).unwrap());
        let mut trained = train_gain(&train, &fitted, &h).unwrap();
        let after = copy_rmse(&impute_gain(&mut trained, &test, &mut rng::stream(0, 0)).unwrap());
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn rejects_mismatched_data() {
        let (schema, data) = mixed_data(20, 1);
        let amputed = ampute(&data, &schema, 0.3, 1).unwrap();
        let other = DatasetSchema::new(vec![
            crate::tabular::VariableSpec::numerical("a").with_range(0.0, 1.0)
        ])
        .unwrap();
        assert!(matches!(
            train_gain(&amputed, &other, &hyper(Method::Gain, 1)),
            Err(Error::Schema(_))
        ));
        assert!(GainModel::new(&schema, &hyper(Method::Vae, 1)).is_err());
    }
}
