use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Support};
use crate::tensor::WeightMask;

/// A square, finite, nonnegative weighted adjacency matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency(Matrix);

impl Adjacency {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Dimension {
                op: "adjacency",
                lhs: m.shape(),
                rhs: (m.cols(), m.rows()),
            });
        }
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Domain(format!(
                        "adjacency entry ({i}, {j}) = {v} is not a finite nonnegative weight"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    /// Unweighted graph from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut m = Matrix::zeros(n, n);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Domain(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            m.set(a, b, 1.0);
            m.set(b, a, 1.0);
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Number of nonzero off-diagonal entries (each undirected edge counts twice).
    pub fn off_diagonal_nnz(&self) -> usize {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i && self.0.get(i, j) != 0.0).count())
            .sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.0.is_symmetric(0.0)
    }

    pub fn with_self_loops(&self) -> Matrix {
        let mut m = self.0.clone();
        for i in 0..m.rows() {
            m.set(i, i, 1.0);
        }
        m
    }
}

/// A prior graph prepared for use by the graph-learning layer: the raw
/// weights (for the fidelity penalty) and a softmax mask with every
/// diagonal entry set to 1.
#[derive(Clone, Debug)]
pub struct GraphPrior {
    raw: Arc<Matrix>,
    mask: WeightMask,
}

impl GraphPrior {
    pub fn new(adj: &Adjacency) -> Self {
        let mask = WeightMask::new(adj.with_self_loops()).expect("adjacency is validated");
        Self {
            raw: Arc::new(adj.matrix().clone()),
            mask,
        }
    }

    pub fn n(&self) -> usize {
        self.raw.rows()
    }

    pub fn raw(&self) -> &Arc<Matrix> {
        &self.raw
    }

    pub fn mask(&self) -> &WeightMask {
        &self.mask
    }

    pub fn support(&self) -> &Arc<Support> {
        self.mask.support()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_non_square() {
        assert!(Adjacency::new(Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]])).is_err());
        assert!(Adjacency::new(Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn chain_from_edges_is_symmetric() {
        let a = Adjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(a.off_diagonal_nnz(), 4);
        assert!(a.is_symmetric());
    }

    #[test]
    fn prior_mask_has_self_loops() {
        let a = Adjacency::from_edges(3, &[(0, 1)]).unwrap();
        let p = GraphPrior::new(&a);
        assert_eq!(p.support().row(2), &[2]);
        assert_eq!(p.support().row(0), &[0, 1]);
        assert_eq!(p.raw().get(0, 0), 0.0);
    }
}
