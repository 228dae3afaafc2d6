//! GLCN and the fixed-graph GCN baseline, plus their losses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::GraphPrior;
use crate::error::{Error, Result};
use crate::gconv::{gcn_forward, glcn_forward, perceptron_layer, Activation, GraphConvLayer, NormalizedAdjacency};
use crate::graph_learn::{graph_learn_loss, learn_graph, GraphLearnConfig, GraphLearnParams};
use crate::matrix::Matrix;
use crate::tensor::{Tape, Tensor};

/// Floor applied to probabilities before taking logs in cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Glcn,
    Gcn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Glcn => "glcn",
            ModelKind::Gcn => "gcn",
        })
    }
}

/// Architecture description shared by both models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Widths of the hidden convolution layers, in order.
    pub hidden: Vec<usize>,
    pub classes: usize,
    /// Weight of the graph-learning loss (GLCN only).
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub graph: GraphLearnConfig,
}

pub fn default_lambda() -> f64 {
    0.01
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if let Some(k) = self.hidden.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("hidden layer {k} has zero width")));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    fn layers<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<GraphConvLayer>, GraphConvLayer) {
        let mut d_in = self.input_dim;
        let mut conv = Vec::with_capacity(self.hidden.len());
        for &w in &self.hidden {
            conv.push(GraphConvLayer::glorot(d_in, w, Activation::Relu, rng));
            d_in = w;
        }
        let out = GraphConvLayer::glorot(d_in, self.classes, Activation::None, rng);
        (conv, out)
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// One handle per parameter, in [`Model::params`] order.
    pub params: Vec<Tensor>,
    /// Class probabilities, `n x c`.
    pub probs: Tensor,
    /// Output of each hidden convolution layer.
    pub hidden: Vec<Tensor>,
    /// Propagation graph actually used (learned `S` for GLCN).
    pub graph: Option<Tensor>,
    /// Unweighted graph-learning loss (GLCN only).
    pub graph_loss: Option<Tensor>,
}

pub trait Model {
    fn config(&self) -> &ModelConfig;

    fn param_names(&self) -> Vec<String>;

    fn params(&self) -> Vec<&Matrix>;

    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    fn forward(&self, tape: &mut Tape, x: Tensor, prior: Option<&GraphPrior>) -> Result<Forward>;

    /// Weight of the graph-learning loss in the training objective.
    fn graph_loss_weight(&self) -> f64 {
        0.0
    }

    fn snapshot(&self) -> Vec<Matrix> {
        self.params().into_iter().cloned().collect()
    }

    fn restore(&mut self, values: &[Matrix]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.shape() != v.shape() {
                return Err(Error::Dimension {
                    op: "restore",
                    lhs: p.shape(),
                    rhs: v.shape(),
                });
            }
            **p = v.clone();
        }
        Ok(())
    }
}

fn conv_names(n: usize) -> impl Iterator<Item = String> {
    (0..=n).map(|k| format!("W{k}"))
}

#[derive(Clone, Debug)]
pub struct GlcnModel {
    pub cfg: ModelConfig,
    pub graph_params: GraphLearnParams,
    pub conv_layers: Vec<GraphConvLayer>,
    pub output_layer: GraphConvLayer,
}

impl GlcnModel {
    pub fn new<R: Rng + ?Sized>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != ModelKind::Glcn {
            return Err(Error::Config("GlcnModel needs kind = glcn".into()));
        }
        let graph_params = GraphLearnParams::init(cfg.input_dim, &cfg.graph, rng);
        let (conv_layers, output_layer) = cfg.layers(rng);
        Ok(Self {
            cfg,
            graph_params,
            conv_layers,
            output_layer,
        })
    }

    fn forward_with(
        &self,
        tape: &mut Tape,
        x: Tensor,
        prior: Option<&GraphPrior>,
        pinned: Option<&NormalizedAdjacency>,
    ) -> Result<Forward> {
        if x.cols() != self.cfg.input_dim {
            return Err(Error::Dimension {
                op: "glcn_predict",
                lhs: x.shape(),
                rhs: (x.rows(), self.cfg.input_dim),
            });
        }
        let gl = self.graph_params.register(tape);
        let weights: Vec<Tensor> = self
            .conv_layers
            .iter()
            .chain(std::iter::once(&self.output_layer))
            .map(|l| tape.leaf(l.weight.clone()))
            .collect();
        let mut params: Vec<Tensor> = gl.projection.into_iter().collect();
        params.push(gl.edge_weights);
        params.extend(&weights);

        let learned = learn_graph(tape, x, prior, &gl, &self.cfg.graph)?;
        let graph_loss = graph_learn_loss(tape, learned.embedding, learned.graph, prior, &self.cfg.graph)?;
        let graph = match pinned {
            Some(adj) => adj.register(tape),
            None => learned.graph,
        };

        let mut h = x;
        let mut hidden = Vec::with_capacity(self.conv_layers.len());
        for (layer, &w) in self.conv_layers.iter().zip(&weights) {
            h = if pinned.is_some() {
                gcn_forward(tape, w, layer.activation, graph, h)?
            } else {
                glcn_forward(tape, w, layer.activation, graph, h)?
            };
            hidden.push(h);
        }
        let probs = perceptron_layer(tape, graph, h, *weights.last().expect("output layer"))?;
        Ok(Forward {
            params,
            probs,
            hidden,
            graph: Some(graph),
            graph_loss: Some(graph_loss),
        })
    }

    /// Forward pass that propagates over a fixed matrix instead of the
    /// learned graph. The graph-learning branch is still evaluated.
    pub fn forward_pinned(
        &self,
        tape: &mut Tape,
        x: Tensor,
        prior: Option<&GraphPrior>,
        graph: &NormalizedAdjacency,
    ) -> Result<Forward> {
        self.forward_with(tape, x, prior, Some(graph))
    }
}

impl Model for GlcnModel {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.graph_params.projection.is_some() {
            names.push("P".to_string());
        }
        names.push("a".to_string());
        names.extend(conv_names(self.conv_layers.len()));
        names
    }

    fn params(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.graph_params.projection.iter().collect();
        out.push(&self.graph_params.edge_weights);
        out.extend(self.conv_layers.iter().map(|l| &l.weight));
        out.push(&self.output_layer.weight);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.graph_params.projection.iter_mut().collect();
        out.push(&mut self.graph_params.edge_weights);
        out.extend(self.conv_layers.iter_mut().map(|l| &mut l.weight));
        out.push(&mut self.output_layer.weight);
        out
    }

    fn forward(&self, tape: &mut Tape, x: Tensor, prior: Option<&GraphPrior>) -> Result<Forward> {
        self.forward_with(tape, x, prior, None)
    }

    fn graph_loss_weight(&self) -> f64 {
        self.cfg.lambda
    }
}

#[derive(Clone, Debug)]
pub struct GcnModel {
    pub cfg: ModelConfig,
    pub conv_layers: Vec<GraphConvLayer>,
    pub output_layer: GraphConvLayer,
    pub norm_adj: NormalizedAdjacency,
}

impl GcnModel {
    pub fn new<R: Rng + ?Sized>(cfg: ModelConfig, norm_adj: NormalizedAdjacency, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != ModelKind::Gcn {
            return Err(Error::Config("GcnModel needs kind = gcn".into()));
        }
        let (conv_layers, output_layer) = cfg.layers(rng);
        Ok(Self {
            cfg,
            conv_layers,
            output_layer,
            norm_adj,
        })
    }
}

impl Model for GcnModel {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn param_names(&self) -> Vec<String> {
        conv_names(self.conv_layers.len()).collect()
    }

    fn params(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.conv_layers.iter().map(|l| &l.weight).collect();
        out.push(&self.output_layer.weight);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.conv_layers.iter_mut().map(|l| &mut l.weight).collect();
        out.push(&mut self.output_layer.weight);
        out
    }

    fn forward(&self, tape: &mut Tape, x: Tensor, _prior: Option<&GraphPrior>) -> Result<Forward> {
        if x.cols() != self.cfg.input_dim || x.rows() != self.norm_adj.n() {
            return Err(Error::Dimension {
                op: "gcn_predict",
                lhs: x.shape(),
                rhs: (self.norm_adj.n(), self.cfg.input_dim),
            });
        }
        let params: Vec<Tensor> = self.params().into_iter().map(|m| tape.leaf(m.clone())).collect();
        let adj = self.norm_adj.register(tape);
        let mut h = x;
        let mut hidden = Vec::with_capacity(self.conv_layers.len());
        for (layer, &w) in self.conv_layers.iter().zip(&params) {
            h = gcn_forward(tape, w, layer.activation, adj, h)?;
            hidden.push(h);
        }
        let probs = perceptron_layer(tape, adj, h, *params.last().expect("output layer"))?;
        Ok(Forward {
            params,
            probs,
            hidden,
            graph: Some(adj),
            graph_loss: None,
        })
    }
}

/// One-hot targets restricted to the rows in `idx`; every other row is zero.
pub fn label_mask(labels: &[usize], classes: usize, idx: &[usize]) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for &i in idx {
        m.set(i, labels[i], 1.0);
    }
    m
}

/// `-sum_{i in L} sum_j Y_ij ln max(Z_ij, LOG_FLOOR)` where `targets` is a
/// [`label_mask`].
pub fn cross_entropy(tape: &mut Tape, probs: Tensor, targets: Tensor) -> Result<Tensor> {
    let logp = tape.log_clamped(probs, LOG_FLOOR);
    let picked = tape.hadamard(targets, logp)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0))
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Tensor,
    pub ce: Tensor,
    pub gl: Option<Tensor>,
}

/// Training objective `ce + weight * gl` on top of a forward pass.
pub fn joint_loss<M: Model + ?Sized>(model: &M, tape: &mut Tape, fwd: &Forward, targets: Tensor) -> Result<LossParts> {
    let ce = cross_entropy(tape, fwd.probs, targets)?;
    let weight = model.graph_loss_weight();
    let total = match fwd.graph_loss {
        Some(gl) if weight > 0.0 => {
            let scaled = tape.scale(gl, weight);
            tape.add(ce, scaled)?
        }
        _ => ce,
    };
    Ok(LossParts {
        total,
        ce,
        gl: fwd.graph_loss,
    })
}

/// Fraction of `idx` whose arg-max prediction equals the label.
pub fn accuracy(probs: &Matrix, labels: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let pred = probs.argmax_rows();
    let hits = idx.iter().filter(|&&i| pred[i] == labels[i]).count();
    hits as f64 / idx.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ce_value(z: Matrix, labels: &[usize], idx: &[usize]) -> f64 {
        let c = z.cols();
        let mut tape = Tape::new();
        let z = tape.constant(z);
        let y = tape.constant(label_mask(labels, c, idx));
        let l = cross_entropy(&mut tape, z, y).unwrap();
        tape.value(l).item().unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        let perfect = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.3, 0.7]]);
        assert_eq!(ce_value(perfect, &[0, 1, 0], &[0, 1]), 0.0);

        let uniform = Matrix::filled(6, 3, 1.0 / 3.0);
        let v = ce_value(uniform, &[0, 1, 2, 0, 1, 2], &[0, 2, 3, 5]);
        assert!((v - 4.0 * 3f64.ln()).abs() < 1e-12);

        let z = Matrix::from_rows(&[[0.7, 0.3]]);
        let v = ce_value(z, &[0], &[0]);
        assert!((v - 0.356675).abs() < 1e-6);
        assert!((v + 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_floor_prevents_nan() {
        let z = Matrix::from_rows(&[[1.0, 0.0]]);
        let v = ce_value(z, &[1], &[0]);
        assert!(v.is_finite());
        assert!((v + LOG_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_only_touches_labeled_rows() {
        let mut tape = Tape::new();
        let z = tape.leaf(Matrix::from_rows(&[[0.6, 0.4], [0.2, 0.8]]));
        let y = tape.constant(label_mask(&[0, 1], 2, &[0]));
        let l = cross_entropy(&mut tape, z, y).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(z).unwrap().row(1), &[0.0, 0.0]);
    }

    #[test]
    fn accuracy_counts_argmax() {
        let z = Matrix::from_rows(&[[0.9, 0.1], [0.4, 0.6], [0.5, 0.5]]);
        assert_eq!(accuracy(&z, &[0, 0, 0], &[0, 1, 2]), 2.0 / 3.0);
        assert_eq!(accuracy(&z, &[0, 0, 0], &[]), 0.0);
    }

    #[test]
    fn width_chain() {
        let cfg = ModelConfig {
            kind: ModelKind::Glcn,
            input_dim: 5,
            hidden: vec![4, 3],
            classes: 2,
            lambda: 0.1,
            graph: GraphLearnConfig::default(),
        };
        let m = GlcnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let shapes: Vec<_> = m.params().iter().map(|p| p.shape()).collect();
        assert_eq!(shapes, vec![(5, 70), (70, 1), (5, 4), (4, 3), (3, 2)]);
        assert_eq!(m.param_names(), ["P", "a", "W0", "W1", "W2"]);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ModelConfig {
            kind: ModelKind::Glcn,
            input_dim: 5,
            hidden: vec![4, 0],
            classes: 2,
            lambda: 0.1,
            graph: GraphLearnConfig::default(),
        };
        assert!(cfg.validate().is_err());
        cfg.hidden = vec![4];
        cfg.lambda = -1.0;
        assert!(cfg.validate().is_err());
        cfg.lambda = 0.0;
        cfg.classes = 1;
        assert!(cfg.validate().is_err());
    }
}
