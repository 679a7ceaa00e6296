use rand::Rng;

use super::graph::{Bindings, Graph, NodeId};
use crate::error::Result;

/// Denominator floor for the relative error, so entries whose true gradient is
/// ~0 are judged on absolute error instead of blowing up.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Compares reverse-mode gradients of the scalar `loss` against central
/// differences on every parameter entry and returns the largest
/// `|analytic - numeric| / max(|analytic|, |numeric|, RELATIVE_ERROR_FLOOR)`.
///
/// Every evaluation starts from a clone of `rng`, so sample leaves see the same
/// noise each time (the noise is frozen). Parameters are restored on return.
pub fn grad_check<R: Rng + Clone>(
    graph: &mut Graph,
    loss: NodeId,
    bindings: &Bindings,
    rng: &R,
    eps: f64,
) -> Result<f64> {
    graph.forward(loss, bindings, &mut rng.clone())?;
    let analytic = graph.backward(loss)?;

    let names: Vec<String> = graph.params().keys().cloned().collect();
    let mut worst: f64 = 0.0;
    for name in names {
        let original = graph.params()[&name].clone();
        for i in 0..original.len() {
            let mut plus = original.clone();
            plus.data_mut()[i] += eps;
            graph.set_param(&name, plus)?;
            let f_plus = graph.forward(loss, bindings, &mut rng.clone())?.item();

            let mut minus = original.clone();
            minus.data_mut()[i] -= eps;
            graph.set_param(&name, minus)?;
            let f_minus = graph.forward(loss, bindings, &mut rng.clone())?.item();

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[&name].data()[i];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
        graph.set_param(&name, original)?;
    }
    // leave caches consistent with the restored parameters
    graph.forward(loss, bindings, &mut rng.clone())?;
    Ok(worst)
}
