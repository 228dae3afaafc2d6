//! Central finite-difference checks for tape gradients.
//!
//! The numeric side only ever evaluates the forward pass, so it is
//! independent of every backward rule it checks.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    /// Central difference step.
    pub step: f64,
    /// Gradients smaller than this in magnitude are compared on this scale
    /// instead of their own, so `rel_err < tol` means an absolute error below
    /// `tol * floor` there.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub analytic: Vec<Matrix>,
    pub numeric: Vec<Matrix>,
    /// The worst element over all inputs.
    pub worst: Option<Mismatch>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |m| m.rel_err)
    }
}

impl GradCheck {
    pub fn rel_err(&self, a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(self.floor)
    }

    /// Compares the tape gradient of the scalar `f(inputs)` with central
    /// differences for every entry of every input.
    pub fn run<F>(&self, inputs: &[Matrix], f: F) -> Result<GradReport>
    where
        F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
    {
        let mut tape = Tape::new();
        let leaves: Vec<Tensor> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = f(&mut tape, &leaves)?;
        tape.backward(out)?;
        let analytic: Vec<Matrix> = leaves
            .iter()
            .zip(inputs)
            .map(|(&t, m)| {
                tape.grad(t)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()))
            })
            .collect();

        let eval = |xs: &[Matrix]| -> Result<f64> {
            let mut tape = Tape::new();
            let leaves: Vec<Tensor> = xs.iter().map(|m| tape.leaf(m.clone())).collect();
            let out = f(&mut tape, &leaves)?;
            tape.value(out).item()
        };

        let mut numeric = Vec::with_capacity(inputs.len());
        let mut worst: Option<Mismatch> = None;
        let mut work = inputs.to_vec();
        for (input, m) in inputs.iter().enumerate() {
            let mut num = Matrix::zeros(m.rows(), m.cols());
            for index in 0..m.len() {
                let orig = m.as_slice()[index];
                work[input].as_mut_slice()[index] = orig + self.step;
                let plus = eval(&work)?;
                work[input].as_mut_slice()[index] = orig - self.step;
                let minus = eval(&work)?;
                work[input].as_mut_slice()[index] = orig;
                let n = (plus - minus) / (2.0 * self.step);
                num.as_mut_slice()[index] = n;

                let a = analytic[input].as_slice()[index];
                let rel_err = self.rel_err(a, n);
                if worst.as_ref().is_none_or(|w| rel_err > w.rel_err) {
                    worst = Some(Mismatch {
                        input,
                        index,
                        analytic: a,
                        numeric: n,
                        rel_err,
                    });
                }
            }
            numeric.push(num);
        }
        Ok(GradReport {
            analytic,
            numeric,
            worst,
        })
    }
}
