use log::warn;
use serde::{Deserialize, Serialize};

use crate::adjacency::Adjacency;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Kernel width of a k-NN graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma {
    /// Mean distance from each node to its k-th nearest neighbor.
    #[default]
    Auto,
    Fixed(f64),
}

/// Smallest weight kept for a selected neighbor, so a very distant neighbor
/// still counts as an edge.
const MIN_EDGE_WEIGHT: f64 = 1e-300;

/// Symmetric k-nearest-neighbor graph with Gaussian weights
/// `exp(-||x_i - x_j||^2 / (2 sigma^2))`. `j` and `i` are connected if either
/// is among the other's `k` nearest neighbors; ties break toward the lower
/// index.
pub fn knn_gaussian_graph(x: &Matrix, k: usize, sigma: Sigma) -> Result<Adjacency> {
    let n = x.rows();
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if k >= n {
        return Err(Error::Config(format!(
            "k = {k} must be smaller than the node count {n}"
        )));
    }
    let sq = |i: usize, j: usize| -> f64 { x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum() };

    let mut neighbors: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut kth_sum = 0.0;
    for i in 0..n {
        let mut cand: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, sq(i, j))).collect();
        cand.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        cand.truncate(k);
        cand.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        kth_sum += cand[k - 1].1.sqrt();
        neighbors.push(cand);
    }

    let sigma = match sigma {
        Sigma::Fixed(s) if s > 0.0 && s.is_finite() => s,
        Sigma::Fixed(s) => return Err(Error::Config(format!("sigma must be positive, got {s}"))),
        Sigma::Auto => {
            let mean = kth_sum / n as f64;
            if mean > 0.0 {
                mean
            } else {
                warn!("all k-th neighbor distances are zero; using sigma = 1");
                1.0
            }
        }
    };

    let mut a = Matrix::zeros(n, n);
    let denom = 2.0 * sigma * sigma;
    for (i, list) in neighbors.iter().enumerate() {
        for &(j, d2) in list {
            let w = (-d2 / denom).exp().max(MIN_EDGE_WEIGHT);
            a.set(i, j, w);
            a.set(j, i, w);
        }
    }
    Adjacency::new(a)
}
