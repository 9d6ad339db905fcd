//! Summary statistics shared by the optimizer and the reports.

use serde::{Deserialize, Serialize};

/// Population mean and standard deviation (divide by `n`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    // shifted by the first value so constant input comes back unchanged
    let x0 = values[0];
    let mean = x0 + values.iter().map(|v| v - x0).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self {
            n: values.len(),
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[0.0, 2.0]), (1.0, 1.0));
        assert_eq!(mean_std(&[5.0, 5.0, 5.0, 5.0, 7.0, 7.0, 7.0, 7.0]), (6.0, 1.0));
        let s = Summary::of(&[3.0, 1.0, 2.0]);
        assert_eq!((s.n, s.mean, s.min, s.max), (3, 2.0, 1.0, 3.0));
        assert!(mean_std(&[]).0.is_nan());
    }
}
