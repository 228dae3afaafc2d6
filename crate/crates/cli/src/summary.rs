//! Seed aggregates.

use serde::Serialize;

pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Mean and population standard deviation, rounded to four decimals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean: round4(mean),
            std: round4(var.sqrt()),
        }
    }

    pub fn table(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let s = Stats::of([0.8, 0.9, 1.0].into_iter());
        assert_eq!(s.mean, 0.9);
        assert_eq!(s.std, 0.0816);
    }

    #[test]
    fn single_value_has_zero_spread() {
        let s = Stats::of([0.71234].into_iter());
        assert_eq!((s.mean, s.std), (0.7123, 0.0));
        assert_eq!(s.table(), "0.7123 ± 0.0000");
    }
}
