#![allow(dead_code)]

use std::sync::Arc;

use glcn_core::gradcheck::GradCheck;
use glcn_core::model::{joint_loss, label_mask};
use glcn_core::{
    Adjacency, GlcnModel, GraphLearnConfig, GraphPrior, Matrix, Model, ModelConfig, ModelKind, PriorMode, Result,
    Support, Tape, Tensor, WeightMask,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Scalar = Box<dyn Fn(&mut Tape, &[Tensor]) -> Result<Tensor>>;

pub struct GradCase {
    pub name: &'static str,
    pub inputs: Vec<Matrix>,
    pub f: Scalar,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Entries with magnitude in `[0.2, 1.0]` and random sign, so no entry sits
/// near a kink of `relu` or `abs`.
pub fn away_from_zero(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.2..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Reduces a matrix to a scalar with fixed random weights, so every entry
/// gets its own gradient (a plain sum would hide errors in, say, a softmax).
pub fn probe(tape: &mut Tape, t: Tensor, seed: u64) -> Result<Tensor> {
    let r = tape.constant(uniform(t.rows(), t.cols(), -1.0, 1.0, &mut rng(seed)));
    let h = tape.hadamard(t, r)?;
    Ok(tape.sum(h))
}

/// A 5-node path graph plus the chord 0-3, with unequal weights.
pub fn five_node_graph() -> Adjacency {
    let mut a = Matrix::zeros(5, 5);
    for &(i, j, w) in &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 4, 1.0), (0, 3, 0.7)] {
        a.set(i, j, w);
        a.set(j, i, w);
    }
    Adjacency::new(a).unwrap()
}

pub fn ring(n: usize) -> Adjacency {
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Adjacency::from_edges(n, &edges).unwrap()
}

pub fn gradient_cases() -> Vec<GradCase> {
    let mut g = rng(7);
    let prior = GraphPrior::new(&five_node_graph());
    let mask: WeightMask = prior.mask().clone();
    let support: Arc<Support> = prior.support().clone();
    let mask2 = mask.clone();
    let support2 = support.clone();
    let support3 = support.clone();
    let big = GraphPrior::new(&ring(16));
    let big_mask = big.mask().clone();
    let big_support = big.support().clone();

    vec![
        GradCase {
            name: "matmul",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g), uniform(3, 4, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.matmul(x[0], x[1])?;
                probe(t, y, 1)
            }),
        },
        GradCase {
            name: "add",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g), uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.add(x[0], x[1])?;
                probe(t, y, 2)
            }),
        },
        GradCase {
            name: "sub",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g), uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.sub(x[0], x[1])?;
                probe(t, y, 3)
            }),
        },
        GradCase {
            name: "scale",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.scale(x[0], -2.5);
                probe(t, y, 4)
            }),
        },
        GradCase {
            name: "hadamard",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g), uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.hadamard(x[0], x[1])?;
                probe(t, y, 5)
            }),
        },
        GradCase {
            name: "relu",
            inputs: vec![away_from_zero(5, 3, &mut g)],
            f: Box::new(|t, x| {
                let y = t.relu(x[0]);
                probe(t, y, 6)
            }),
        },
        GradCase {
            name: "log",
            inputs: vec![uniform(5, 3, 0.2, 2.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.log(x[0])?;
                probe(t, y, 7)
            }),
        },
        GradCase {
            name: "log_clamped",
            inputs: vec![uniform(5, 3, 0.2, 2.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.log_clamped(x[0], 1e-12);
                probe(t, y, 8)
            }),
        },
        GradCase {
            name: "transpose",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.transpose(x[0]);
                probe(t, y, 9)
            }),
        },
        GradCase {
            name: "row_sum",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.row_sum(x[0]);
                probe(t, y, 10)
            }),
        },
        GradCase {
            name: "sum",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.scale(x[0], 1.5);
                Ok(t.sum(y))
            }),
        },
        GradCase {
            name: "frobenius_sq",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| Ok(t.frobenius_sq(x[0]))),
        },
        GradCase {
            name: "row_softmax",
            inputs: vec![uniform(5, 5, -2.0, 2.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.row_softmax(x[0], None)?;
                probe(t, y, 11)
            }),
        },
        GradCase {
            name: "row_softmax_masked",
            inputs: vec![uniform(5, 5, -2.0, 2.0, &mut g)],
            f: Box::new(move |t, x| {
                let y = t.row_softmax(x[0], Some(&mask))?;
                probe(t, y, 12)
            }),
        },
        GradCase {
            name: "pairwise_abs_diff_project",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g), uniform(3, 1, 0.2, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.pairwise_abs_diff_project(x[0], x[1], None)?;
                probe(t, y, 13)
            }),
        },
        GradCase {
            name: "pairwise_abs_diff_project_on_support",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g), uniform(3, 1, 0.2, 1.0, &mut g)],
            f: Box::new(move |t, x| {
                let y = t.pairwise_abs_diff_project(x[0], x[1], Some(support.clone()))?;
                probe(t, y, 14)
            }),
        },
        GradCase {
            name: "pairwise_sq_dist",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let y = t.pairwise_sq_dist(x[0], None)?;
                probe(t, y, 15)
            }),
        },
        GradCase {
            name: "pairwise_sq_dist_on_support",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(move |t, x| {
                let y = t.pairwise_sq_dist(x[0], Some(support2.clone()))?;
                probe(t, y, 16)
            }),
        },
        GradCase {
            // A node feeding several consumers: x is used by both operands of
            // the product and again in the sum.
            name: "shared_subexpression",
            inputs: vec![uniform(5, 3, -1.0, 1.0, &mut g)],
            f: Box::new(|t, x| {
                let xt = t.transpose(x[0]);
                let gram = t.matmul(x[0], xt)?;
                let sq = t.hadamard(x[0], x[0])?;
                let a = probe(t, gram, 17)?;
                let b = probe(t, sq, 18)?;
                let c = t.frobenius_sq(x[0]);
                let ab = t.add(a, b)?;
                t.add(ab, c)
            }),
        },
        GradCase {
            // Masked softmax output feeding a product and the graph loss
            // pieces, as in a masked graph-learning layer.
            name: "masked_graph_pipeline",
            inputs: vec![
                uniform(5, 3, -1.0, 1.0, &mut g),
                uniform(3, 1, 0.2, 1.0, &mut g),
                uniform(5, 2, -1.0, 1.0, &mut g),
            ],
            f: Box::new(move |t, x| {
                let scores = t.pairwise_abs_diff_project(x[0], x[1], Some(support3.clone()))?;
                let s = t.row_softmax(scores, Some(&mask2))?;
                let h = t.matmul(s, x[2])?;
                let dist = t.pairwise_sq_dist(x[0], t.support(s).cloned())?;
                let wd = t.hadamard(dist, s)?;
                let a = probe(t, h, 19)?;
                let b = t.sum(wd);
                t.add(a, b)
            }),
        },
        GradCase {
            // 16-node ring: the masked graph is sparse enough for the sparse
            // product kernels.
            name: "sparse_graph_product",
            inputs: vec![
                uniform(16, 2, -1.0, 1.0, &mut g),
                uniform(2, 1, 0.2, 1.0, &mut g),
                uniform(16, 3, -1.0, 1.0, &mut g),
            ],
            f: Box::new(move |t, x| {
                let scores = t.pairwise_abs_diff_project(x[0], x[1], Some(big_support.clone()))?;
                let s = t.row_softmax(scores, Some(&big_mask))?;
                let h = t.matmul(s, x[2])?;
                let st = t.transpose(s);
                let h2 = t.matmul(st, x[2])?;
                let a = probe(t, h, 20)?;
                let b = probe(t, h2, 21)?;
                t.add(a, b)
            }),
        },
    ]
}

/// Runs every case; returns `(name, max relative error)` pairs.
pub fn run_gradient_cases() -> Vec<(&'static str, f64)> {
    let check = GradCheck::default();
    gradient_cases()
        .into_iter()
        .map(|c| {
            let report = check.run(&c.inputs, &c.f).unwrap_or_else(|e| panic!("{}: {e}", c.name));
            (c.name, report.max_rel_err())
        })
        .collect()
}

/// The 5-node, 3-feature, 2-class GLCN instance with every loss term active:
/// masked-and-regularized prior, gamma > 0, beta > 0, lambda > 0.
pub fn composite_instance() -> (GlcnModel, Matrix, GraphPrior, Matrix) {
    let mut g = rng(11);
    let cfg = ModelConfig {
        kind: ModelKind::Glcn,
        input_dim: 3,
        hidden: vec![4, 3],
        classes: 2,
        lambda: 0.3,
        graph: GraphLearnConfig {
            use_projection: true,
            embed_dim: 2,
            gamma: 0.2,
            beta: 0.5,
            prior_mode: PriorMode::MaskRegularize,
        },
    };
    let mut model = GlcnModel::new(cfg, &mut g).unwrap();
    // Positive edge weights keep every learned score off the relu kink.
    model.graph_params.edge_weights = uniform(2, 1, 0.3, 1.0, &mut g);
    let x = uniform(5, 3, -1.0, 1.0, &mut g);
    let prior = GraphPrior::new(&five_node_graph());
    let targets = label_mask(&[0, 1, 1, 0, 1], 2, &[0, 1, 3]);
    (model, x, prior, targets)
}

fn composite_loss(model: &GlcnModel, x: &Matrix, prior: &GraphPrior, targets: &Matrix) -> f64 {
    let mut tape = Tape::new();
    let xt = tape.constant(x.clone());
    let fwd = model.forward(&mut tape, xt, Some(prior)).unwrap();
    let y = tape.constant(targets.clone());
    let parts = joint_loss(model, &mut tape, &fwd, y).unwrap();
    tape.value(parts.total).item().unwrap()
}

/// Model-level check: the analytic gradient from one backward pass against
/// central differences taken by perturbing the stored parameters and
/// re-running the whole forward pass. Returns `(param, max rel err)`.
pub fn composite_gradient_errors() -> Vec<(String, f64)> {
    let (mut model, x, prior, targets) = composite_instance();
    let mut tape = Tape::new();
    let xt = tape.constant(x.clone());
    let fwd = model.forward(&mut tape, xt, Some(&prior)).unwrap();
    let y = tape.constant(targets.clone());
    let parts = joint_loss(&model, &mut tape, &fwd, y).unwrap();
    assert!(parts.gl.is_some());
    tape.backward(parts.total).unwrap();
    let analytic: Vec<Matrix> = fwd.params.iter().map(|&p| tape.grad(p).unwrap().clone()).collect();

    let check = GradCheck::default();
    let names = model.param_names();
    let mut out = Vec::new();
    for (k, name) in names.into_iter().enumerate() {
        let len = model.params()[k].len();
        let mut worst = 0.0f64;
        for idx in 0..len {
            let orig = model.params()[k].as_slice()[idx];
            model.params_mut()[k].as_mut_slice()[idx] = orig + check.step;
            let plus = composite_loss(&model, &x, &prior, &targets);
            model.params_mut()[k].as_mut_slice()[idx] = orig - check.step;
            let minus = composite_loss(&model, &x, &prior, &targets);
            model.params_mut()[k].as_mut_slice()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * check.step);
            worst = worst.max(check.rel_err(analytic[k].as_slice()[idx], numeric));
        }
        out.push((name, worst));
    }
    out
}

/// `D^{-1/2} S D^{-1/2} X W` with `D = diag(row sums of S)`, computed with
/// plain loops.
pub fn degree_normalized_propagation(s: &Matrix, x: &Matrix, w: &Matrix) -> Matrix {
    let n = s.rows();
    let d: Vec<f64> = (0..n).map(|i| s.row(i).iter().sum::<f64>()).collect();
    let mut sn = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sn.set(i, j, s.get(i, j) / (d[i].sqrt() * d[j].sqrt()));
        }
    }
    sn.matmul(x).unwrap().matmul(w).unwrap()
}
