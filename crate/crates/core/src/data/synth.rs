use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::matrix::Matrix;

/// Gaussian blobs around well-separated class centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub classes: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation around the center.
    pub noise: f64,
    /// Distance between centers of classes that sit on different axes.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    1.0
}

/// Class `k` is centered at `separation * (1 + k / dim) / sqrt(2) * e_(k mod dim)`,
/// so with `classes <= dim` all centers are exactly `separation` apart.
/// Nodes are laid out class by class. No graph is attached.
pub fn synth_blobs(spec: &SynthSpec) -> Dataset {
    let SynthSpec {
        n_per_class,
        classes,
        dim,
        noise,
        separation,
        seed,
    } = *spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite standard deviation");
    let n = n_per_class * classes;
    let mut x = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let axis = c % dim;
        let offset = separation * (1 + c / dim) as f64 / std::f64::consts::SQRT_2;
        for r in 0..n_per_class {
            let row = x.row_mut(c * n_per_class + r);
            for v in row.iter_mut() {
                *v = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            }
            row[axis] += offset;
            labels.push(c);
        }
    }
    Dataset {
        features: x,
        adjacency: None,
        labels,
        class_names: (0..classes).map(|c| c.to_string()).collect(),
        splits: None,
        names: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(noise: f64) -> SynthSpec {
        SynthSpec {
            n_per_class: 40,
            classes: 3,
            dim: 6,
            noise,
            separation: 1.0,
            seed: 9,
        }
    }

    #[test]
    fn zero_noise_collapses_classes() {
        let ds = synth_blobs(&spec(0.0));
        for i in 0..ds.n() {
            let first = ds.labels[i] * 40;
            assert_eq!(ds.features.row(i), ds.features.row(first));
        }
        // Centers one unit apart.
        let d: f64 = ds
            .features
            .row(0)
            .iter()
            .zip(ds.features.row(40))
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((d.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seeded() {
        assert_eq!(synth_blobs(&spec(0.3)), synth_blobs(&spec(0.3)));
        let mut other = spec(0.3);
        other.seed = 10;
        assert_ne!(synth_blobs(&spec(0.3)).features, synth_blobs(&other).features);
    }

    #[test]
    fn well_separated_blobs_are_one_nn_separable() {
        // Leave-one-out 1-NN over all nodes, computed directly, with
        // separation / noise = 10.
        let ds = synth_blobs(&SynthSpec {
            noise: 0.1,
            ..spec(0.0)
        });
        let n = ds.n();
        for i in 0..n {
            let nearest = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da: f64 = ds
                        .features
                        .row(i)
                        .iter()
                        .zip(ds.features.row(a))
                        .map(|(x, y)| (x - y).powi(2))
                        .sum();
                    let db: f64 = ds
                        .features
                        .row(i)
                        .iter()
                        .zip(ds.features.row(b))
                        .map(|(x, y)| (x - y).powi(2))
                        .sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(ds.labels[nearest], ds.labels[i], "node {i}");
        }
    }
}
