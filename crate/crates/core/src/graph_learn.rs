//! The graph-learning layer.
//!
//! Node features are optionally projected to a lower dimension
//! (`x_embed = x P`), every pair is scored with
//! `relu(a^T |x_embed_i - x_embed_j|)`, and a row softmax (weighted by the
//! prior graph when one is used as a mask) turns the scores into a
//! row-stochastic graph `S`. The companion loss
//!
//! ```text
//! L_GL = sum_ij ||x_embed_i - x_embed_j||^2 S_ij + gamma ||S||_F^2 [+ beta ||S - A||_F^2]
//! ```
//!
//! is only ever used as a regularizer next to a supervised loss; minimized
//! alone it is solved by `a = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::GraphPrior;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::glorot_init;
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Learn over all pairs; any prior graph is ignored.
    #[default]
    None,
    /// Restrict and weight the softmax by the prior graph.
    Mask,
    /// Add `beta ||S - A||_F^2` to the graph loss.
    Regularize,
    MaskRegularize,
}

impl PriorMode {
    pub fn masks(self) -> bool {
        matches!(self, PriorMode::Mask | PriorMode::MaskRegularize)
    }

    pub fn regularizes(self) -> bool {
        matches!(self, PriorMode::Regularize | PriorMode::MaskRegularize)
    }

    pub fn needs_prior(self) -> bool {
        self != PriorMode::None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphLearnConfig {
    pub use_projection: bool,
    pub embed_dim: usize,
    pub gamma: f64,
    pub beta: f64,
    pub prior_mode: PriorMode,
}

impl Default for GraphLearnConfig {
    fn default() -> Self {
        Self {
            use_projection: true,
            embed_dim: 70,
            gamma: 0.01,
            beta: 0.0,
            prior_mode: PriorMode::None,
        }
    }
}

impl GraphLearnConfig {
    pub fn validate(&self, has_prior: bool) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.use_projection && self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        if self.beta > 0.0 && !has_prior {
            return Err(Error::Config("beta > 0 requires a prior graph".into()));
        }
        if self.beta > 0.0 && !self.prior_mode.regularizes() {
            return Err(Error::Config(format!(
                "beta > 0 has no effect with prior_mode {:?}",
                self.prior_mode
            )));
        }
        if self.prior_mode.needs_prior() && !has_prior {
            return Err(Error::Config(format!(
                "prior_mode {:?} requires a prior graph",
                self.prior_mode
            )));
        }
        Ok(())
    }

    /// Width of the space the edge scores are computed in.
    pub fn active_dim(&self, input_dim: usize) -> usize {
        if self.use_projection {
            self.embed_dim
        } else {
            input_dim
        }
    }
}

/// Trainable parameters of the graph-learning layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphLearnParams {
    /// `p x d` projection, absent when projection is disabled.
    pub projection: Option<Matrix>,
    /// `d x 1` edge-score weights.
    pub edge_weights: Matrix,
}

impl GraphLearnParams {
    pub fn init<R: Rng + ?Sized>(input_dim: usize, cfg: &GraphLearnConfig, rng: &mut R) -> Self {
        let d = cfg.active_dim(input_dim);
        let projection = cfg.use_projection.then(|| glorot_init(input_dim, d, rng));
        Self {
            projection,
            edge_weights: glorot_init(d, 1, rng),
        }
    }

    pub fn register(&self, tape: &mut Tape) -> GraphLearnTensors {
        GraphLearnTensors {
            projection: self.projection.as_ref().map(|p| tape.leaf(p.clone())),
            edge_weights: tape.leaf(self.edge_weights.clone()),
        }
    }
}

/// Tape handles of [`GraphLearnParams`] for one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct GraphLearnTensors {
    pub projection: Option<Tensor>,
    pub edge_weights: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LearnedGraph {
    /// Row-stochastic `n x n` graph.
    pub graph: Tensor,
    /// Features the graph was learned from (`x P` or `x`).
    pub embedding: Tensor,
}

pub fn learn_graph(
    tape: &mut Tape,
    x: Tensor,
    prior: Option<&GraphPrior>,
    params: &GraphLearnTensors,
    cfg: &GraphLearnConfig,
) -> Result<LearnedGraph> {
    let embedding = match params.projection {
        Some(p) => tape.matmul(x, p)?,
        None => x,
    };
    let n = x.rows();
    let mask = match (cfg.prior_mode.masks(), prior) {
        (false, _) => None,
        (true, Some(prior)) => {
            if prior.n() != n {
                return Err(Error::Dimension {
                    op: "learn_graph",
                    lhs: x.shape(),
                    rhs: (prior.n(), prior.n()),
                });
            }
            Some(prior.mask())
        }
        (true, None) => return Err(Error::Config("masked graph learning requires a prior graph".into())),
    };
    let support = mask.map(|m| m.support().clone());
    let scores = tape.pairwise_abs_diff_project(embedding, params.edge_weights, support)?;
    let graph = tape.row_softmax(scores, mask)?;
    Ok(LearnedGraph { graph, embedding })
}

pub fn graph_learn_loss(
    tape: &mut Tape,
    embedding: Tensor,
    graph: Tensor,
    prior: Option<&GraphPrior>,
    cfg: &GraphLearnConfig,
) -> Result<Tensor> {
    let n = embedding.rows();
    if graph.shape() != (n, n) {
        return Err(Error::Dimension {
            op: "graph_learn_loss",
            lhs: embedding.shape(),
            rhs: graph.shape(),
        });
    }
    if cfg.beta > 0.0 && prior.is_none() {
        return Err(Error::Config("beta > 0 requires a prior graph".into()));
    }
    let support = tape.support(graph).cloned();
    let dist = tape.pairwise_sq_dist(embedding, support)?;
    let weighted = tape.hadamard(dist, graph)?;
    let mut loss = tape.sum(weighted);
    if cfg.gamma > 0.0 {
        let f = tape.frobenius_sq(graph);
        let f = tape.scale(f, cfg.gamma);
        loss = tape.add(loss, f)?;
    }
    if cfg.prior_mode.regularizes() && cfg.beta > 0.0 {
        let prior = prior.expect("checked above");
        let a = tape.constant_shared(prior.raw().clone(), None);
        let diff = tape.sub(graph, a)?;
        let f = tape.frobenius_sq(diff);
        let f = tape.scale(f, cfg.beta);
        loss = tape.add(loss, f)?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency::Adjacency;

    fn unprojected() -> GraphLearnConfig {
        GraphLearnConfig {
            use_projection: false,
            ..Default::default()
        }
    }

    fn run(x: Matrix, a: &[f64], prior: Option<&GraphPrior>, cfg: &GraphLearnConfig) -> Matrix {
        let mut tape = Tape::new();
        let xt = tape.constant(x);
        let params = GraphLearnParams {
            projection: None,
            edge_weights: Matrix::column(a),
        }
        .register(&mut tape);
        let g = learn_graph(&mut tape, xt, prior, &params, cfg).unwrap();
        tape.value(g.graph).clone()
    }

    #[test]
    fn zero_weights_give_uniform_graph() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.0, -3.0], [4.0, 4.0], [9.0, 0.5]]);
        let s = run(x, &[0.0, 0.0], None, &unprojected());
        assert!(s.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn identical_features_on_complete_prior() {
        let prior = GraphPrior::new(&Adjacency::new(Matrix::filled(2, 2, 1.0)).unwrap());
        let cfg = GraphLearnConfig {
            prior_mode: PriorMode::Mask,
            ..unprojected()
        };
        let s = run(Matrix::from_rows(&[[3.0], [3.0]]), &[0.7], Some(&prior), &cfg);
        assert!(s.as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn scalar_instance_matches_direct_evaluation() {
        let xs = [0.0, 1.0, 10.0];
        let s = run(Matrix::column(&xs), &[1.0], None, &unprojected());
        // Direct scalar evaluation of exp(relu(|x_i - x_j|)) / sum.
        for i in 0..3 {
            let e: Vec<f64> = xs.iter().map(|xj| (xs[i] - xj).abs().max(0.0).exp()).collect();
            let z: f64 = e.iter().sum();
            for (j, ej) in e.iter().enumerate() {
                assert!((s.get(i, j) - ej / z).abs() < 1e-12);
            }
        }
        // Row 0: [1, e, e^10] / (1 + e + e^10).
        let z = 1.0 + 1f64.exp() + 10f64.exp();
        assert!((s.get(0, 2) - 10f64.exp() / z).abs() < 1e-12);
    }

    #[test]
    fn projected_distance_ordering() {
        // With positive weights the score grows with distance, so among a
        // row the farther point gets the larger share.
        let s = run(Matrix::column(&[0.0, 1.0, 3.0]), &[0.5], None, &unprojected());
        assert!(s.get(0, 1) < s.get(0, 2));
        assert!(s.get(2, 1) < s.get(2, 0));
    }

    #[test]
    fn mask_mode_without_prior_is_config_error() {
        let cfg = GraphLearnConfig {
            prior_mode: PriorMode::Mask,
            ..unprojected()
        };
        assert!(cfg.validate(false).is_err());
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::zeros(3, 1));
        let p = GraphLearnParams {
            projection: None,
            edge_weights: Matrix::column(&[1.0]),
        }
        .register(&mut tape);
        assert!(matches!(
            learn_graph(&mut tape, x, None, &p, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = GraphLearnConfig::default();
        assert!(cfg.validate(false).is_ok());
        cfg.gamma = -1.0;
        assert!(cfg.validate(false).is_err());
        cfg.gamma = 0.0;
        cfg.beta = 1.0;
        cfg.prior_mode = PriorMode::Regularize;
        assert!(cfg.validate(false).is_err());
        assert!(cfg.validate(true).is_ok());
        cfg.prior_mode = PriorMode::Mask;
        assert!(cfg.validate(true).is_err());
    }

    fn loss_of(x: Matrix, s: Matrix, prior: Option<&GraphPrior>, cfg: &GraphLearnConfig) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(x);
        let s = tape.constant(s);
        let l = graph_learn_loss(&mut tape, x, s, prior, cfg)?;
        tape.value(l).item()
    }

    #[test]
    fn loss_examples() {
        let n = 5;
        let cfg = GraphLearnConfig {
            gamma: 0.3,
            ..unprojected()
        };
        let l = loss_of(
            Matrix::filled(n, 2, 1.25),
            Matrix::filled(n, n, 1.0 / n as f64),
            None,
            &cfg,
        )
        .unwrap();
        assert!((l - 0.3).abs() < 1e-14);

        let cfg = GraphLearnConfig {
            gamma: 0.0,
            ..unprojected()
        };
        let l = loss_of(Matrix::column(&[0.0, 1.0]), Matrix::filled(2, 2, 0.5), None, &cfg).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prior_fidelity_vanishes_when_graph_equals_prior() {
        let a = Matrix::from_rows(&[[0.5, 0.5], [0.25, 0.75]]);
        let prior = GraphPrior::new(&Adjacency::new(a.clone()).unwrap());
        let cfg = GraphLearnConfig {
            gamma: 0.0,
            beta: 10.0,
            prior_mode: PriorMode::Regularize,
            ..unprojected()
        };
        let x = Matrix::column(&[1.0, 1.0]);
        let l = loss_of(x.clone(), a.clone(), Some(&prior), &cfg).unwrap();
        assert_eq!(l, 0.0);
        assert!(matches!(loss_of(x, a, None, &cfg), Err(Error::Config(_))));
    }
}
