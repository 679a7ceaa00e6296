use rand::distr::Open01;
use rand::Rng;

use crate::diffcore::{softmax_in_place, Graph, NodeId, Noise, LOG_CLAMP_MAX, LOG_CLAMP_MIN};
use crate::error::{Error, Result};

/// One Gumbel(0, 1) draw.
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

/// `b_i = exp((log a_i + g_i) / τ) / Σ_j exp((log a_j + g_j) / τ)` for given
/// noise `g`. `a` holds class probabilities; `log` clamps like the graph op.
pub fn gumbel_softmax_with_noise(a: &[f64], noise: &[f64], tau: f64) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::Invalid("gumbel-softmax over an empty vector".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!(
            "temperature {tau} must be positive"
        )));
    }
    if noise.len() != a.len() {
        return Err(Error::Invalid(format!(
            "{} noise values for {} classes",
            noise.len(),
            a.len()
        )));
    }
    let mut b: Vec<f64> = a
        .iter()
        .zip(noise)
        .map(|(&ai, &gi)| (ai.clamp(LOG_CLAMP_MIN, LOG_CLAMP_MAX).ln() + gi) / tau)
        .collect();
    softmax_in_place(&mut b);
    Ok(b)
}

/// Draws fresh Gumbel noise and applies [`gumbel_softmax_with_noise`].
pub fn gumbel_softmax<R: Rng + ?Sized>(a: &[f64], tau: f64, rng: &mut R) -> Result<Vec<f64>> {
    let noise: Vec<f64> = (0..a.len()).map(|_| gumbel_noise(rng)).collect();
    gumbel_softmax_with_noise(a, &noise, tau)
}

/// Graph form over a `[rows, width]` logits node.
///
/// With `a = softmax(logits)`, `log a_i` differs from `logits_i` by a per-row
/// constant that the outer softmax cancels, so the logits feed the noise
/// directly. The noise leaf is named `noise_name` and can be bound to freeze it.
pub fn gumbel_softmax_node(
    graph: &mut Graph,
    logits: NodeId,
    width: usize,
    tau: f64,
    noise_name: &str,
) -> Result<NodeId> {
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!(
            "temperature {tau} must be positive"
        )));
    }
    if width == 0 {
        return Err(Error::Invalid("gumbel-softmax over an empty block".into()));
    }
    let g = graph.sample(noise_name, Noise::Gumbel, logits, width);
    let perturbed = graph.add(logits, g);
    let scaled = graph.affine(perturbed, 1.0 / tau, 0.0);
    Ok(graph.softmax_blocks(scaled, vec![(0, width)]))
}
