//! Datasets, splits, prior-graph construction and synthetic data.

mod io;
mod knn;
mod synth;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{Adjacency, GraphPrior};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::train::TrainData;

pub use io::{load_citation, load_dir, load_linqs, save_dir, LoadOptions, LoadStats};
pub use knn::{knn_gaussian_graph, Sigma};
pub use synth::{synth_blobs, SynthSpec};

/// Where the graph handed to a model comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// No graph.
    None,
    /// The dataset's own adjacency.
    #[default]
    Dataset,
    /// A k-NN Gaussian-kernel graph built from the features.
    Knn {
        k: usize,
        #[serde(default)]
        sigma: Sigma,
    },
}

impl GraphSource {
    pub fn resolve(&self, ds: &Dataset) -> Result<Option<Adjacency>> {
        match *self {
            GraphSource::None => Ok(None),
            GraphSource::Dataset => match &ds.adjacency {
                Some(a) => Ok(Some(a.clone())),
                None => Err(Error::Config(
                    "the dataset has no graph; use a k-NN graph source".into(),
                )),
            },
            GraphSource::Knn { k, sigma } => knn_gaussian_graph(&ds.features, k, sigma).map(Some),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, idx) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in idx {
                if i >= n {
                    return Err(Error::Load(format!(
                        "{name} split index {i} out of range for {n} nodes"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Load(format!("node {i} appears in more than one split")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    /// Symmetric, nonnegative prior graph.
    pub adjacency: Option<Adjacency>,
    /// Class index of every node.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub splits: Option<Splits>,
    pub names: Option<Vec<String>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn one_hot(&self) -> Matrix {
        let all: Vec<usize> = (0..self.n()).collect();
        crate::model::label_mask(&self.labels, self.classes(), &all)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.labels.len() != n {
            return Err(Error::Load(format!("{} labels for {n} nodes", self.labels.len())));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.classes()) {
            return Err(Error::Load(format!("label index {l} out of range")));
        }
        if let Some(a) = &self.adjacency {
            if a.n() != n {
                return Err(Error::Load(format!("adjacency has {} nodes, features {n}", a.n())));
            }
            if !a.is_symmetric() {
                return Err(Error::Load("adjacency is not symmetric".into()));
            }
        }
        if let Some(s) = &self.splits {
            s.validate(n)?;
        }
        if let Some(names) = &self.names {
            if names.len() != n {
                return Err(Error::Load(format!("{} node names for {n} nodes", names.len())));
            }
        }
        Ok(())
    }

    /// Scales every feature row to unit sum; all-zero rows are left alone.
    pub fn normalize_rows(&mut self) {
        for i in 0..self.features.rows() {
            let row = self.features.row_mut(i);
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Training inputs for the given splits; `prior` is the graph offered to
    /// the graph-learning layer.
    pub fn train_data(&self, splits: &Splits, prior: Option<&Adjacency>) -> TrainData {
        TrainData {
            features: Arc::new(self.features.clone()),
            labels: self.labels.clone(),
            classes: self.classes(),
            train: splits.train.clone(),
            val: splits.val.clone(),
            test: splits.test.clone(),
            prior: prior.map(GraphPrior::new),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labeled {
    /// Stratified: this many training nodes from every class.
    PerClass(usize),
    /// This many training nodes drawn uniformly.
    Total(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub labeled: Labeled,
    pub val: usize,
    /// Test-set size; `None` takes every remaining node.
    #[serde(default)]
    pub test: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            labeled: Labeled::PerClass(20),
            val: 300,
            test: Some(1000),
        }
    }
}

/// Draws train/val/test index sets. Each set is returned sorted.
pub fn make_splits<R: Rng + ?Sized>(ds: &Dataset, spec: &SplitSpec, rng: &mut R) -> Result<Splits> {
    let n = ds.n();
    let mut taken = vec![false; n];
    let mut train = Vec::new();
    match spec.labeled {
        Labeled::PerClass(k) => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes()];
            for (i, &l) in ds.labels.iter().enumerate() {
                by_class[l].push(i);
            }
            for (c, mut members) in by_class.into_iter().enumerate() {
                if members.len() < k {
                    return Err(Error::Infeasible(format!(
                        "class {} has {} nodes, {k} labeled nodes requested",
                        ds.class_names[c],
                        members.len()
                    )));
                }
                members.shuffle(rng);
                train.extend_from_slice(&members[..k]);
            }
        }
        Labeled::Total(k) => {
            if k > n {
                return Err(Error::Infeasible(format!("{k} labeled nodes requested from {n}")));
            }
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(rng);
            train.extend_from_slice(&all[..k]);
        }
    }
    for &i in &train {
        taken[i] = true;
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    rest.shuffle(rng);
    let test_count = spec.test.unwrap_or(rest.len().saturating_sub(spec.val));
    let needed = spec.val + test_count.max(1);
    if rest.len() < needed {
        return Err(Error::Infeasible(format!(
            "{} unlabeled nodes left but {} validation + {} test requested (short by {})",
            rest.len(),
            spec.val,
            test_count.max(1),
            needed - rest.len()
        )));
    }
    if train.is_empty() || spec.val == 0 {
        return Err(Error::Infeasible("train and validation sets must be non-empty".into()));
    }
    let mut val = rest[..spec.val].to_vec();
    let mut test = rest[spec.val..spec.val + test_count].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(classes: usize, per_class: usize) -> Dataset {
        synth_blobs(&SynthSpec {
            n_per_class: per_class,
            classes,
            dim: classes,
            noise: 0.1,
            separation: 1.0,
            seed: 3,
        })
    }

    #[test]
    fn per_class_split_sizes() {
        let ds = toy(7, 210);
        let spec = SplitSpec::default();
        let s = make_splits(&ds, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.train.len(), 140);
        assert_eq!(s.val.len(), 300);
        assert_eq!(s.test.len(), 1000);
        s.validate(ds.n()).unwrap();
        let mut counts = [0; 7];
        for &i in &s.train {
            counts[ds.labels[i]] += 1;
        }
        assert!(counts.iter().all(|&c| c == 20));
    }

    #[test]
    fn exhausting_labels_is_infeasible() {
        let ds = toy(3, 10);
        let spec = SplitSpec {
            labeled: Labeled::PerClass(10),
            val: 5,
            test: None,
        };
        let err = make_splits(&ds, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
        let spec = SplitSpec {
            labeled: Labeled::PerClass(11),
            val: 0,
            test: None,
        };
        assert!(make_splits(&ds, &spec, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn seeds_vary_sets_not_sizes() {
        let ds = toy(3, 50);
        let spec = SplitSpec {
            labeled: Labeled::PerClass(5),
            val: 20,
            test: None,
        };
        let a = make_splits(&ds, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = make_splits(&ds, &spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a2 = make_splits(&ds, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_eq!(
            (a.train.len(), a.val.len(), a.test.len()),
            (b.train.len(), b.val.len(), b.test.len())
        );
        assert_eq!(a.test.len(), 150 - 15 - 20);
    }

    #[test]
    fn row_normalization() {
        let mut ds = toy(2, 3);
        ds.features = Matrix::from_rows(&[[1.0, 3.0], [0.0, 0.0], [2.0, 2.0], [1.0, 1.0], [4.0, 0.0], [0.5, 0.5]]);
        ds.normalize_rows();
        assert_eq!(ds.features.row(0), &[0.25, 0.75]);
        assert_eq!(ds.features.row(1), &[0.0, 0.0]);
    }
}
