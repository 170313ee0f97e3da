//! Heads trained on frozen representations.

pub mod classifier;
pub mod freeform;
pub mod mc;

pub use classifier::{argmax, fit_classifier, LinearClassifier, SgdConfig, Standardizer};
pub use freeform::{gpio_forecast, ArModel};
pub use mc::{build_mc_problem, fit_mc_head, McBuilder, McConfig, McHead, McProblem, PromptSource, PROMPT_LEN};

/// Piecewise-linear resampling of `values` (taken as evenly spaced over the
/// same interval) onto `n` evenly spaced points.
pub fn resample_linear(values: &[f64], n: usize) -> Vec<f64> {
    let m = values.len();
    if m == 1 || n == 1 {
        return vec![values[0]; n];
    }
    (0..n)
        .map(|j| {
            let pos = j as f64 * (m - 1) as f64 / (n - 1) as f64;
            let i = (pos.floor() as usize).min(m - 2);
            let frac = pos - i as f64;
            values[i] + frac * (values[i + 1] - values[i])
        })
        .collect()
}

/// Encoder input for a curve or curve fragment: resampled to `len` points,
/// then min-max normalized (constant inputs map to zeros).
pub fn encoder_input(values: &[f64], len: usize) -> Vec<f64> {
    let v = if values.len() == len { values.to_vec() } else { resample_linear(values, len) };
    crate::curves::normalize(&v).unwrap_or_else(|_| vec![0.0; len])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resampling_keeps_endpoints_and_lines() {
        let line: Vec<f64> = (0..80).map(|i| 2.0 * i as f64 + 1.0).collect();
        let up = resample_linear(&line, 100);
        assert_eq!(up.len(), 100);
        assert_eq!(up[0], 1.0);
        assert!((up[99] - 159.0).abs() < 1e-12);
        for w in up.windows(2) {
            assert!((w[1] - w[0] - 158.0 / 99.0).abs() < 1e-9);
        }
        assert_eq!(resample_linear(&[1.0, 2.0, 3.0], 3), vec![1.0, 2.0, 3.0]);
    }
}
