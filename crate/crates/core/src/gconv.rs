//! Graph convolution layers.
//!
//! The fixed-graph baseline propagates with `D^{-1/2} (A + I) D^{-1/2}`; the
//! learned-graph layers propagate with the row-stochastic `S` directly.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::Adjacency;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Support};
use crate::optim::glorot_init;
use crate::tensor::{Tape, Tensor};

/// Row sums of a learned graph must be within this of 1.
pub const ROW_STOCHASTIC_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphConvLayer {
    pub weight: Matrix,
    pub activation: Activation,
}

impl GraphConvLayer {
    pub fn glorot<R: Rng + ?Sized>(d_in: usize, d_out: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            weight: glorot_init(d_in, d_out, rng),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Precomputed `D^{-1/2} (A + I) D^{-1/2}`.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    matrix: Arc<Matrix>,
    support: Arc<Support>,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn register(&self, tape: &mut Tape) -> Tensor {
        tape.constant_shared(self.matrix.clone(), Some(self.support.clone()))
    }

    /// Wraps an arbitrary fixed propagation matrix. Used to pin a learned
    /// graph in place of the normalized adjacency.
    pub fn from_matrix(m: Matrix) -> Self {
        let support = Arc::new(Support::from_nonzeros(&m));
        Self {
            matrix: Arc::new(m),
            support,
        }
    }
}

pub fn normalize_adjacency(adj: &Adjacency) -> NormalizedAdjacency {
    let a = adj.matrix();
    let n = a.rows();
    let mut tilde = a.clone();
    for i in 0..n {
        tilde.set(i, i, a.get(i, i) + 1.0);
    }
    let inv_sqrt: Vec<f64> = tilde.row_sums().into_iter().map(|d| 1.0 / d.sqrt()).collect();
    for i in 0..n {
        let di = inv_sqrt[i];
        for (j, v) in tilde.row_mut(i).iter_mut().enumerate() {
            *v *= di * inv_sqrt[j];
        }
    }
    NormalizedAdjacency::from_matrix(tilde)
}

/// `prop * x * w`, multiplied in whichever order is cheaper.
fn propagate(tape: &mut Tape, prop: Tensor, x: Tensor, w: Tensor) -> Result<Tensor> {
    if x.rows() != prop.cols() {
        return Err(Error::Dimension {
            op: "propagate",
            lhs: prop.shape(),
            rhs: x.shape(),
        });
    }
    if w.cols() <= w.rows() {
        let xw = tape.matmul(x, w)?;
        tape.matmul(prop, xw)
    } else {
        let px = tape.matmul(prop, x)?;
        tape.matmul(px, w)
    }
}

fn activate(tape: &mut Tape, t: Tensor, activation: Activation) -> Tensor {
    match activation {
        Activation::Relu => tape.relu(t),
        Activation::None => t,
    }
}

/// One fixed-graph layer: `act(norm_adj x W)`.
pub fn gcn_forward(
    tape: &mut Tape,
    weight: Tensor,
    activation: Activation,
    norm_adj: Tensor,
    x: Tensor,
) -> Result<Tensor> {
    let out = propagate(tape, norm_adj, x, weight)?;
    Ok(activate(tape, out, activation))
}

/// One learned-graph layer: `act(S x W)`. `S` must be row-stochastic.
pub fn glcn_forward(
    tape: &mut Tape,
    weight: Tensor,
    activation: Activation,
    graph: Tensor,
    x: Tensor,
) -> Result<Tensor> {
    check_row_stochastic(tape.value(graph))?;
    let out = propagate(tape, graph, x, weight)?;
    Ok(activate(tape, out, activation))
}

/// Final layer: `row_softmax(prop x W)`.
pub fn perceptron_layer(tape: &mut Tape, prop: Tensor, x: Tensor, weight: Tensor) -> Result<Tensor> {
    let logits = propagate(tape, prop, x, weight)?;
    tape.row_softmax(logits, None)
}

pub fn check_row_stochastic(s: &Matrix) -> Result<()> {
    for (row, sum) in s.row_sums().into_iter().enumerate() {
        if (sum - 1.0).abs().is_nan() || (sum - 1.0).abs() > ROW_STOCHASTIC_TOL {
            return Err(Error::NotRowStochastic { row, sum });
        }
    }
    Ok(())
}
