//! Weight initialization, ADAM, and early stopping.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Uniform samples on `[-b, b]` with `b = sqrt(6 / (rows + cols))`.
pub fn glorot_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "glorot_init needs a non-empty shape");
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &[&Matrix]) -> Self {
        let zeros = |p: &&Matrix| Matrix::zeros(p.rows(), p.cols());
        Self {
            cfg,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Applies one bias-corrected update. Gradients are checked for
    /// non-finite values before any parameter is touched.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix], names: &[String]) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        for (k, g) in grads.iter().enumerate() {
            if g.shape() != self.m[k].shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    lhs: self.m[k].shape(),
                    rhs: g.shape(),
                });
            }
            if !g.is_finite() {
                let param = names.get(k).cloned().unwrap_or_else(|| format!("#{k}"));
                return Err(Error::NonFiniteGradient { param });
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k].as_slice();
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (i, w) in p.as_mut_slice().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Tracks the best validation loss and decides when to stop.
///
/// Epochs are numbered from 1. Training stops at the first epoch `e` with
/// `e - best_epoch >= patience`.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Records the loss for `epoch`; returns true when it is a new strict
    /// minimum.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        epoch - self.best_epoch >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = glorot_init(30, 20, &mut rng);
        let b = glorot_bound(30, 20);
        assert!(w.as_slice().iter().all(|v| v.abs() <= b));
        let again = glorot_init(30, 20, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(w.as_slice(), again.as_slice());
    }

    #[test]
    fn glorot_mean_within_three_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = glorot_init(100, 100, &mut rng);
        let n = w.len() as f64;
        let b = glorot_bound(100, 100);
        // Uniform(-b, b) has variance b^2 / 3.
        let se = (b * b / 3.0 / n).sqrt();
        assert!((w.sum() / n).abs() < 3.0 * se);
    }

    #[test]
    fn first_step_is_about_lr_times_sign() {
        let mut p = Matrix::from_rows(&[[1.0, -2.0, 0.5]]);
        let g = Matrix::from_rows(&[[0.3, -4.0, 1e-3]]);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg, &[&p]);
        let before = p.clone();
        adam.step(&mut [&mut p], &[&g], &["p".into()]).unwrap();
        for i in 0..3 {
            let gi = g.as_slice()[i];
            let expect = -cfg.lr * gi / (gi.abs() + cfg.eps);
            let got = p.as_slice()[i] - before.as_slice()[i];
            assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
            assert!(got.abs() <= cfg.lr * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Matrix::from_rows(&[[1.0, 2.0]]);
        let g = Matrix::zeros(1, 2);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        for _ in 0..3 {
            adam.step(&mut [&mut p], &[&g], &["p".into()]).unwrap();
        }
        assert_eq!(p.as_slice(), &[1.0, 2.0]);
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = Matrix::from_rows(&[[0.6, -0.8]]);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        for _ in 0..500 {
            let g = p.map(|x| 2.0 * x);
            adam.step(&mut [&mut p], &[&g], &["theta".into()]).unwrap();
        }
        let norm = p.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "norm {norm}");
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = Matrix::zeros(1, 1);
        let g = Matrix::scalar(f64::NAN);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        let err = adam.step(&mut [&mut p], &[&g], &["W1".into()]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref param } if param == "W1"));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn early_stopping_counts_from_best() {
        let mut es = EarlyStopping::new(3);
        let losses = [5.0, 4.0, 4.0, 4.5, 3.9, 4.0, 4.0, 4.0];
        let mut stopped = None;
        for (k, &l) in losses.iter().enumerate() {
            let e = k + 1;
            es.observe(e, l);
            if es.should_stop(e) {
                stopped = Some(e);
                break;
            }
        }
        assert_eq!(es.best_epoch(), 5);
        assert_eq!(stopped, Some(8));
    }

    #[test]
    fn strictly_decreasing_never_stops() {
        let mut es = EarlyStopping::new(2);
        for e in 1..=50 {
            assert!(es.observe(e, 100.0 - e as f64));
            assert!(!es.should_stop(e));
        }
    }
}
