//! Per-variable input embeddings and output heads.

use rand::Rng;

use super::dense::Dense;
use super::gumbel::gumbel_softmax_node;
use crate::diffcore::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tabular::{Block, DatasetSchema, VariableType};

/// Splits the output layer by variable: numerical variables get a sigmoid of
/// their own pre-activation, categorical variables their own dense layer
/// followed by gumbel-softmax. Results are concatenated in schema order.
#[derive(Debug, Clone)]
pub struct MultiOutputHead {
    numeric: Option<Dense>,
    categorical: Vec<Dense>,
    blocks: Vec<Block>,
    tau: f64,
    input_width: usize,
    output_width: usize,
}

impl MultiOutputHead {
    pub fn new<R: Rng + ?Sized>(
        graph: &mut Graph,
        name: &str,
        schema: &DatasetSchema,
        input_width: usize,
        tau: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Invalid(format!(
                "temperature {tau} must be positive"
            )));
        }
        let n_num = schema.num_numerical();
        let numeric = if n_num > 0 {
            Some(Dense::new(
                graph,
                &format!("{name}.num"),
                input_width,
                n_num,
                rng,
            )?)
        } else {
            None
        };
        let blocks = schema.blocks();
        let categorical = blocks
            .iter()
            .filter(|b| b.vtype == VariableType::Categorical)
            .map(|b| {
                Dense::new(
                    graph,
                    &format!("{name}.cat{}", b.variable),
                    input_width,
                    b.len(),
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(MultiOutputHead {
            numeric,
            categorical,
            blocks,
            tau,
            input_width,
            output_width: schema.total_features(),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    /// Gumbel noise leaves are named `{noise_prefix}.{variable index}`.
    pub fn apply(&self, graph: &mut Graph, hidden: NodeId, noise_prefix: &str) -> Result<NodeId> {
        let numeric = self.numeric.as_ref().map(|d| {
            let pre = d.apply(graph, hidden);
            graph.sigmoid(pre)
        });
        let n_num = self.numeric.as_ref().map_or(0, |d| d.fan_out);
        let mut pieces = Vec::new();
        let mut num_cursor = 0;
        let mut run_start: Option<usize> = None;
        let mut cats = self.categorical.iter();
        for b in &self.blocks {
            match b.vtype {
                VariableType::Numerical => {
                    run_start.get_or_insert(num_cursor);
                    num_cursor += 1;
                }
                VariableType::Categorical => {
                    if let Some(start) = run_start.take() {
                        pieces.push(numeric_slice(graph, numeric, start, num_cursor, n_num));
                    }
                    let dense = cats.next().expect("one dense layer per categorical block");
                    let logits = dense.apply(graph, hidden);
                    pieces.push(gumbel_softmax_node(
                        graph,
                        logits,
                        b.len(),
                        self.tau,
                        &format!("{noise_prefix}.{}", b.variable),
                    )?);
                }
            }
        }
        if let Some(start) = run_start.take() {
            pieces.push(numeric_slice(graph, numeric, start, num_cursor, n_num));
        }
        Ok(if pieces.len() == 1 {
            pieces[0]
        } else {
            graph.concat(pieces)
        })
    }
}

fn numeric_slice(
    graph: &mut Graph,
    numeric: Option<NodeId>,
    start: usize,
    end: usize,
    width: usize,
) -> NodeId {
    let node = numeric.expect("numerical run implies a numeric layer");
    if start == 0 && end == width {
        node
    } else {
        graph.slice(node, start, end)
    }
}

/// Output layer of a network that emits encoded rows.
#[derive(Debug, Clone)]
pub enum OutputHead {
    /// Dense to `s` features with an elementwise sigmoid.
    Sigmoid(Dense),
    Split(MultiOutputHead),
}

impl OutputHead {
    /// Split head when `split`, else a dense sigmoid layer to every feature.
    pub fn for_schema<R: Rng + ?Sized>(
        graph: &mut Graph,
        name: &str,
        schema: &DatasetSchema,
        input_width: usize,
        split: bool,
        tau: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if split {
            MultiOutputHead::new(graph, name, schema, input_width, tau, rng).map(OutputHead::Split)
        } else {
            Dense::new(graph, name, input_width, schema.total_features(), rng)
                .map(OutputHead::Sigmoid)
        }
    }

    pub fn apply(&self, graph: &mut Graph, hidden: NodeId, noise_prefix: &str) -> Result<NodeId> {
        match self {
            OutputHead::Sigmoid(d) => {
                let pre = d.apply(graph, hidden);
                Ok(graph.sigmoid(pre))
            }
            OutputHead::Split(h) => h.apply(graph, hidden, noise_prefix),
        }
    }
}

#[derive(Debug, Clone)]
enum InputPiece {
    Pass {
        start: usize,
        end: usize,
    },
    Embed {
        start: usize,
        end: usize,
        proj: Dense,
    },
}

/// Splits the input layer by variable: each categorical block is projected by
/// its own `s_j -> d_j` linear map (an embedding lookup for exact one-hots);
/// numerical features pass through. Pieces are concatenated in schema order.
#[derive(Debug, Clone)]
pub struct MultiInputAdapter {
    pieces: Vec<InputPiece>,
    input_width: usize,
    output_width: usize,
}

impl MultiInputAdapter {
    /// `embedding_dims` has one entry per categorical variable, in schema
    /// order; `None` uses `d_j = s_j`.
    pub fn new<R: Rng + ?Sized>(
        graph: &mut Graph,
        name: &str,
        schema: &DatasetSchema,
        embedding_dims: Option<&[usize]>,
        rng: &mut R,
    ) -> Result<Self> {
        let cat_blocks = schema.categorical_blocks();
        let dims: Vec<usize> = match embedding_dims {
            Some(d) if d.len() != cat_blocks.len() => {
                return Err(Error::Invalid(format!(
                    "{} embedding widths for {} categorical variables",
                    d.len(),
                    cat_blocks.len()
                )))
            }
            Some(d) if d.contains(&0) => {
                return Err(Error::Invalid("embedding width must be positive".into()))
            }
            Some(d) => d.to_vec(),
            None => cat_blocks.iter().map(Block::len).collect(),
        };
        let mut dims = dims.into_iter();
        let mut pieces: Vec<InputPiece> = Vec::new();
        for b in schema.blocks() {
            match b.vtype {
                VariableType::Numerical => match pieces.last_mut() {
                    Some(InputPiece::Pass { end, .. }) if *end == b.start => *end = b.end,
                    _ => pieces.push(InputPiece::Pass {
                        start: b.start,
                        end: b.end,
                    }),
                },
                VariableType::Categorical => {
                    let d = dims.next().expect("one width per categorical block");
                    let proj = Dense::without_bias(
                        graph,
                        &format!("{name}.emb{}", b.variable),
                        b.len(),
                        d,
                        rng,
                    )?;
                    pieces.push(InputPiece::Embed {
                        start: b.start,
                        end: b.end,
                        proj,
                    });
                }
            }
        }
        let output_width = pieces
            .iter()
            .map(|p| match p {
                InputPiece::Pass { start, end } => end - start,
                InputPiece::Embed { proj, .. } => proj.fan_out,
            })
            .sum();
        Ok(MultiInputAdapter {
            pieces,
            input_width: schema.total_features(),
            output_width,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn apply(&self, graph: &mut Graph, x: NodeId) -> NodeId {
        if let [InputPiece::Pass { start: 0, end }] = self.pieces.as_slice() {
            if *end == self.input_width {
                return x;
            }
        }
        let parts: Vec<NodeId> = self
            .pieces
            .iter()
            .map(|p| match p {
                InputPiece::Pass { start, end } => graph.slice(x, *start, *end),
                InputPiece::Embed { start, end, proj } => {
                    let block = graph.slice(x, *start, *end);
                    proj.apply(graph, block)
                }
            })
            .collect();
        if parts.len() == 1 {
            parts[0]
        } else {
            graph.concat(parts)
        }
    }
}
