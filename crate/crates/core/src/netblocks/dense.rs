use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::Result;

/// Glorot/Xavier uniform: `U(-sqrt(6 / (in + out)), +sqrt(6 / (in + out)))`.
pub fn xavier_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("positive extents")
}

/// Fully connected layer `x W + b` registered in a graph.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: NodeId,
    pub bias: Option<NodeId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        graph: &mut Graph,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = graph.param(&format!("{name}.w"), xavier_uniform(fan_in, fan_out, rng))?;
        let bias = graph.param(&format!("{name}.b"), Tensor::zeros(1, fan_out))?;
        Ok(Dense {
            weight,
            bias: Some(bias),
            fan_in,
            fan_out,
        })
    }

    /// Weight only, for embedding-style projections.
    pub fn without_bias<R: Rng + ?Sized>(
        graph: &mut Graph,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = graph.param(&format!("{name}.w"), xavier_uniform(fan_in, fan_out, rng))?;
        Ok(Dense {
            weight,
            bias: None,
            fan_in,
            fan_out,
        })
    }

    pub fn apply(&self, graph: &mut Graph, x: NodeId) -> NodeId {
        let xw = graph.matmul(x, self.weight);
        match self.bias {
            Some(b) => graph.add_row(xw, b),
            None => xw,
        }
    }

    pub fn param_count(&self) -> usize {
        self.fan_in * self.fan_out + if self.bias.is_some() { self.fan_out } else { 0 }
    }
}

/// Dense layers with ReLU after each one.
#[derive(Debug, Clone)]
pub struct LayerStack {
    widths: Vec<usize>,
    layers: Vec<Dense>,
}

impl LayerStack {
    /// `widths[0]` is the input width; one layer per following entry.
    pub fn new<R: Rng + ?Sized>(
        graph: &mut Graph,
        name: &str,
        widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(graph, &format!("{name}.l{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(LayerStack {
            widths: widths.to_vec(),
            layers,
        })
    }

    pub fn apply(&self, graph: &mut Graph, mut x: NodeId) -> NodeId {
        for layer in &self.layers {
            let pre = layer.apply(graph, x);
            x = graph.relu(pre);
        }
        x
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("at least the input width")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Bindings;
    use crate::rng;

    #[test]
    fn xavier_respects_limit() {
        let t = xavier_uniform(30, 10, &mut rng::stream(0, 0));
        let limit = (6.0f64 / 40.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= limit));
        assert!(t.data().iter().any(|v| v.abs() > limit / 2.0));
    }

    #[test]
    fn stack_param_count_and_shape() {
        let mut g = Graph::new();
        let mut r = rng::stream(1, 0);
        let stack = LayerStack::new(&mut g, "s", &[6, 4, 3], &mut r).unwrap();
        assert_eq!(stack.param_count(), 6 * 4 + 4 + 4 * 3 + 3);
        assert_eq!(
            stack.param_count(),
            g.params().values().map(Tensor::len).sum::<usize>()
        );
        let x = g.input("x");
        let y = stack.apply(&mut g, x);
        let b: Bindings = [("x".to_string(), Tensor::filled(5, 6, 0.3))].into();
        let out = g.forward(y, &b, &mut r).unwrap();
        assert_eq!(out.shape(), &[5, 3]);
        assert!(out.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn empty_stack_is_identity() {
        let mut g = Graph::new();
        let stack = LayerStack::new(&mut g, "s", &[3], &mut rng::stream(0, 0)).unwrap();
        let x = g.input("x");
        assert_eq!(stack.apply(&mut g, x), x);
        assert_eq!(stack.output_width(), 3);
    }
}
