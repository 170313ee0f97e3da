//! Class-conditional autoregression for freeform extrapolation, its
//! unconditional baseline and the GP ideal observer.

use crate::error::{Error, Result};
use crate::gp::{extrapolate_offset, Grid, KernelSpec};
use crate::linalg::{Cholesky, Matrix};

/// Autoregressive lag.
pub const LAG: usize = 20;
/// Forecast window.
pub const HORIZON: usize = 20;
/// One-step targets are taken from the first `FIT_LEN` values of a curve.
pub const FIT_LEN: usize = 80;
/// Default ridge coefficient, relative to the mean diagonal of the normal
/// equations.
pub const RIDGE: f64 = 1e-6;

/// `y_i ≈ (w_0 + w_0^c) + Σ_j (w_j + w_j^c) y_{i-j}` with `Σ_c w_j^c = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArModel {
    pub lag: usize,
    /// `[w_0, w_1, ..., w_L]`.
    pub shared: Vec<f64>,
    /// One row of deviations per class; a single zero row when unconditional.
    pub deviations: Matrix<f64>,
    pub lambda: f64,
}

/// Per-class Gram matrix and moment vector of the lagged design.
fn class_moments(curves: &[&[f64]], classes: &[usize], n_classes: usize, lag: usize, fit_len: usize) -> Result<Vec<(Matrix<f64>, Vec<f64>)>> {
    let p = lag + 1;
    let mut out = vec![(Matrix::zeros(p, p), vec![0.0; p]); n_classes];
    let mut x = vec![0.0; p];
    for (curve, &c) in curves.iter().zip(classes) {
        if curve.len() < fit_len {
            return Err(Error::ShapeMismatch { expected: vec![fit_len], got: vec![curve.len()] });
        }
        let (g, b) = &mut out[c];
        for i in lag..fit_len {
            x[0] = 1.0;
            for j in 1..=lag {
                x[j] = curve[i - j];
            }
            for r in 0..p {
                b[r] += x[r] * curve[i];
                for s in 0..=r {
                    g[(r, s)] += x[r] * x[s];
                }
            }
        }
    }
    for (g, _) in &mut out {
        for r in 0..p {
            for s in 0..r {
                g[(s, r)] = g[(r, s)];
            }
        }
    }
    Ok(out)
}

impl ArModel {
    /// Ridge least squares over the one-step targets `i ∈ [lag, fit_len)` of
    /// every curve, with `curves[k]` assigned to class `classes[k]`.
    ///
    /// Deviations are parametrized by the first `n_classes - 1` classes, the
    /// last being minus their sum; the penalty is
    /// `λ' (|w|^2 + Σ_c |w^c|^2)` with `λ' = λ · trace / dim` of the normal
    /// equations.
    pub fn fit(curves: &[&[f64]], classes: &[usize], n_classes: usize, lag: usize, lambda: f64, fit_len: usize) -> Result<Self> {
        if curves.len() != classes.len() || curves.is_empty() {
            return Err(Error::ShapeMismatch { expected: vec![curves.len()], got: vec![classes.len()] });
        }
        if n_classes == 0 || classes.iter().any(|&c| c >= n_classes) {
            return Err(Error::Invalid(format!("class labels must lie in 0..{n_classes}")));
        }
        if lag == 0 || fit_len <= lag {
            return Err(Error::Invalid(format!("need 0 < lag < fit_len, got lag {lag}, fit_len {fit_len}")));
        }
        let p = lag + 1;
        let free = n_classes - 1;
        let dim = p * (1 + free);
        let moments = class_moments(curves, classes, n_classes, lag, fit_len)?;

        // e_c: unit vector for c < free, all -1 for the last class.
        let coef = |c: usize, m: usize| -> f64 {
            if c == free {
                -1.0
            } else if c == m {
                1.0
            } else {
                0.0
            }
        };
        let mut a = Matrix::zeros(dim, dim);
        let mut rhs = vec![0.0; dim];
        for (c, (g, b)) in moments.iter().enumerate() {
            // Block (0, 0) and the shared rhs.
            for r in 0..p {
                rhs[r] += b[r];
                for s in 0..p {
                    a[(r, s)] += g[(r, s)];
                }
            }
            for m in 0..free {
                let em = coef(c, m);
                if em == 0.0 {
                    continue;
                }
                for r in 0..p {
                    rhs[p * (1 + m) + r] += em * b[r];
                    for s in 0..p {
                        let v = em * g[(r, s)];
                        a[(p * (1 + m) + r, s)] += v;
                        a[(s, p * (1 + m) + r)] += v;
                    }
                }
                for n in 0..free {
                    let en = coef(c, n);
                    if en == 0.0 {
                        continue;
                    }
                    for r in 0..p {
                        for s in 0..p {
                            a[(p * (1 + m) + r, p * (1 + n) + s)] += em * en * g[(r, s)];
                        }
                    }
                }
            }
        }
        let trace: f64 = (0..dim).map(|i| a[(i, i)]).sum();
        let ridge = lambda * (trace / dim as f64).max(f64::MIN_POSITIVE);
        for i in 0..dim {
            a[(i, i)] += ridge;
        }
        // The dependent class adds |Σ_m w^m|^2 to the penalty.
        for m in 0..free {
            for n in 0..free {
                for r in 0..p {
                    a[(p * (1 + m) + r, p * (1 + n) + r)] += ridge;
                }
            }
        }
        let theta = Cholesky::factor(&a, 0.0).ok_or(Error::SingularSystem)?.solve(&rhs);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        let shared = theta[..p].to_vec();
        let mut deviations = Matrix::zeros(n_classes, p);
        for m in 0..free {
            for r in 0..p {
                let v = theta[p * (1 + m) + r];
                deviations[(m, r)] = v;
                deviations[(free, r)] -= v;
            }
        }
        Ok(Self { lag, shared, deviations, lambda })
    }

    /// The class-free model `y_i ≈ w_0 + Σ_j w_j y_{i-j}`.
    pub fn fit_unconditional(curves: &[&[f64]], lag: usize, lambda: f64, fit_len: usize) -> Result<Self> {
        Self::fit(curves, &vec![0; curves.len()], 1, lag, lambda, fit_len)
    }

    pub fn classes(&self) -> usize {
        self.deviations.rows()
    }

    /// Effective weights `w + w^c`.
    pub fn weights(&self, class: usize) -> Vec<f64> {
        self.shared.iter().zip(self.deviations.row(class)).map(|(a, b)| a + b).collect()
    }

    /// Recursive rollout: each prediction is appended and becomes a lag input.
    pub fn forecast(&self, class: usize, prompt: &[f64], horizon: usize) -> Result<Vec<f64>> {
        if prompt.len() < self.lag {
            return Err(Error::ShapeMismatch { expected: vec![self.lag], got: vec![prompt.len()] });
        }
        if class >= self.classes() {
            return Err(Error::Invalid(format!("class {class} out of range")));
        }
        let w = self.weights(class);
        let mut hist = prompt.to_vec();
        for _ in 0..horizon {
            let n = hist.len();
            let y = w[0] + (1..=self.lag).map(|j| w[j] * hist[n - j]).sum::<f64>();
            hist.push(y);
        }
        Ok(hist.split_off(prompt.len()))
    }
}

/// Posterior-mean completion under the generating kernel. Curves are min-max
/// normalized, so the observer also estimates their constant offset.
pub fn gpio_forecast(spec: &KernelSpec<f64>, grid: &Grid<f64>, prompt: &[f64]) -> Result<Vec<f64>> {
    extrapolate_offset(spec, grid, prompt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_model_repeats_last_value() {
        let mut shared = vec![0.0; LAG + 1];
        shared[1] = 1.0;
        let m = ArModel { lag: LAG, shared, deviations: Matrix::zeros(1, LAG + 1), lambda: 0.0 };
        let prompt: Vec<f64> = (0..80).map(|i| (i as f64).sin()).collect();
        let out = m.forecast(0, &prompt, HORIZON).unwrap();
        assert_eq!(out, vec![prompt[79]; 20]);
        assert!(m.forecast(0, &prompt[..5], 3).is_err());
    }

    #[test]
    fn constant_curves_are_fit_exactly() {
        let curves: Vec<Vec<f64>> = [0.2, 0.5, 0.9].iter().map(|&c| vec![c; 100]).collect();
        let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
        let m = ArModel::fit_unconditional(&refs, LAG, RIDGE, FIT_LEN).unwrap();
        for c in &curves {
            for v in m.forecast(0, &c[..80], HORIZON).unwrap() {
                assert!((v - c[0]).abs() < 1e-3);
            }
        }
    }
}
