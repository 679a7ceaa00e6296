use crate::diffcore::{Graph, NodeId, Tensor, LOG_CLAMP_MAX, LOG_CLAMP_MIN};
use crate::error::{Error, Result};
use crate::tabular::{DatasetSchema, VariableType};

/// Discriminator outputs are clamped to `[M_HAT_MIN, 1 - M_HAT_MIN]` before logs.
pub const M_HAT_MIN: f64 = 1e-8;

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Invalid(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn clamped_ln(v: f64) -> f64 {
    v.clamp(LOG_CLAMP_MIN, LOG_CLAMP_MAX).ln()
}

fn per_row_mean(rows: usize, total: f64) -> f64 {
    total / rows as f64
}

/// `−Σ_k [m_k log m̂_k + (1 − m_k) log(1 − m̂_k)]` per row, averaged over rows.
pub fn loss_discriminator(m: &Tensor, m_hat: &Tensor) -> Result<f64> {
    check_same(m, m_hat, "discriminator loss")?;
    let total: f64 = m
        .data()
        .iter()
        .zip(m_hat.data())
        .map(|(&mk, &p)| {
            let p = p.clamp(M_HAT_MIN, 1.0 - M_HAT_MIN);
            -(mk * p.ln() + (1.0 - mk) * (1.0 - p).ln())
        })
        .sum();
    Ok(per_row_mean(m.rows(), total))
}

/// Cross entropy restricted to missing positions: `−Σ_k (1 − m_k) log(1 − m̂_k)`.
pub fn loss_discriminator_missing_only(m: &Tensor, m_hat: &Tensor) -> Result<f64> {
    check_same(m, m_hat, "discriminator loss")?;
    let total: f64 = m
        .data()
        .iter()
        .zip(m_hat.data())
        .map(|(&mk, &p)| -(1.0 - mk) * (1.0 - p.clamp(M_HAT_MIN, 1.0 - M_HAT_MIN)).ln())
        .sum();
    Ok(per_row_mean(m.rows(), total))
}

/// `−Σ_k (1 − m_k) log m̂_k` per row, averaged over rows.
pub fn loss_generator(m: &Tensor, m_hat: &Tensor) -> Result<f64> {
    check_same(m, m_hat, "generator loss")?;
    let total: f64 = m
        .data()
        .iter()
        .zip(m_hat.data())
        .map(|(&mk, &p)| -(1.0 - mk) * p.clamp(M_HAT_MIN, 1.0 - M_HAT_MIN).ln())
        .sum();
    Ok(per_row_mean(m.rows(), total))
}

/// Masked reconstruction loss: squared error on numerical features,
/// `−x̄ log x̂` on categorical ones, only where `m = 1`; summed per row and
/// averaged over rows.
pub fn loss_reconstruction(
    x_bar: &Tensor,
    x_hat: &Tensor,
    m: &Tensor,
    schema: &DatasetSchema,
) -> Result<f64> {
    check_same(x_bar, x_hat, "reconstruction loss")?;
    check_same(x_bar, m, "reconstruction loss")?;
    let s = schema.total_features();
    if x_bar.cols() != s {
        return Err(Error::Invalid(format!(
            "reconstruction loss: {} columns, schema encodes {s}",
            x_bar.cols()
        )));
    }
    let categorical = categorical_columns(schema);
    let mut total = 0.0;
    for r in 0..x_bar.rows() {
        let (xb, xh, mr) = (x_bar.row_slice(r), x_hat.row_slice(r), m.row_slice(r));
        for k in 0..s {
            if mr[k] == 0.0 {
                continue;
            }
            let term = if categorical[k] {
                -xb[k] * clamped_ln(xh[k])
            } else {
                (xh[k] - xb[k]).powi(2)
            };
            total += mr[k] * term;
        }
    }
    Ok(per_row_mean(x_bar.rows(), total))
}

fn categorical_columns(schema: &DatasetSchema) -> Vec<bool> {
    let mut out = vec![false; schema.total_features()];
    for b in schema.blocks() {
        if b.vtype == VariableType::Categorical {
            out[b.start..b.end].iter_mut().for_each(|v| *v = true);
        }
    }
    out
}

fn indicator_row(flags: &[bool], want: bool) -> Tensor {
    let data: Vec<f64> = flags
        .iter()
        .map(|&f| if f == want { 1.0 } else { 0.0 })
        .collect();
    Tensor::row(&data)
}

fn clamped_probability(graph: &mut Graph, p: NodeId) -> NodeId {
    graph.clamp(p, M_HAT_MIN, 1.0 - M_HAT_MIN)
}

fn one_minus(graph: &mut Graph, x: NodeId) -> NodeId {
    graph.affine(x, -1.0, 1.0)
}

fn negated_batch_mean(graph: &mut Graph, x: NodeId) -> NodeId {
    let mean = graph.batch_mean(x);
    graph.affine(mean, -1.0, 0.0)
}

/// Graph form of [`loss_discriminator`], or of
/// [`loss_discriminator_missing_only`] when `missing_only` is set.
pub fn discriminator_loss_node(
    graph: &mut Graph,
    m: NodeId,
    m_hat: NodeId,
    missing_only: bool,
) -> NodeId {
    let p = clamped_probability(graph, m_hat);
    let q = one_minus(graph, p);
    let log_q = graph.log(q);
    let not_m = one_minus(graph, m);
    let missing_term = graph.mul(not_m, log_q);
    if missing_only {
        return negated_batch_mean(graph, missing_term);
    }
    let log_p = graph.log(p);
    let observed_term = graph.mul(m, log_p);
    let both = graph.add(observed_term, missing_term);
    negated_batch_mean(graph, both)
}

/// Graph form of [`loss_generator`].
pub fn generator_loss_node(graph: &mut Graph, m: NodeId, m_hat: NodeId) -> NodeId {
    let p = clamped_probability(graph, m_hat);
    let log_p = graph.log(p);
    let not_m = one_minus(graph, m);
    let term = graph.mul(not_m, log_p);
    negated_batch_mean(graph, term)
}

/// Graph form of [`loss_reconstruction`].
pub fn reconstruction_loss_node(
    graph: &mut Graph,
    schema: &DatasetSchema,
    x_bar: NodeId,
    x_hat: NodeId,
    m: NodeId,
) -> NodeId {
    let flags = categorical_columns(schema);
    let has_cat = flags.iter().any(|&f| f);
    let has_num = flags.iter().any(|&f| !f);

    let mut terms = Vec::new();
    if has_num {
        let diff = graph.sub(x_hat, x_bar);
        let sq = graph.square(diff);
        let ind = graph.constant(indicator_row(&flags, false));
        terms.push(graph.mul_row(sq, ind));
    }
    if has_cat {
        let log_hat = graph.log(x_hat);
        let prod = graph.mul(x_bar, log_hat);
        let ind = graph.constant(indicator_row(&flags, true));
        let masked = graph.mul_row(prod, ind);
        terms.push(graph.affine(masked, -1.0, 0.0));
    }
    let per_feature = match terms[..] {
        [t] => t,
        [a, b] => graph.add(a, b),
        _ => unreachable!("a schema has at least one variable"),
    };
    let masked = graph.mul(m, per_feature);
    graph.batch_mean(masked)
}
