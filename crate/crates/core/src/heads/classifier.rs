//! Multinomial logistic regression on frozen features.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{gemm, Op};

/// Per-feature affine map to zero mean and unit variance, fit on training
/// features. Constant features are centred but left unscaled.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix<f64>) -> Self {
        let (n, d) = (x.rows().max(1) as f64, x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..x.rows() {
            for (m, &v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for i in 0..x.rows() {
            for ((s, &v), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let inv_std = var.into_iter().map(|v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Self { mean, inv_std }
    }

    pub fn apply(&self, x: &Matrix<f64>) -> Matrix<f64> {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.mean[j]) * self.inv_std[j])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub batch_size: usize,
    /// Minibatch updates per fit, independent of the training-set size.
    pub updates: usize,
    pub folds: usize,
    pub l2_grid: Vec<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { batch_size: 32, updates: 3000, folds: 3, l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    /// `[classes, d]`, acting on standardized features.
    pub weights: Matrix<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
    pub standardizer: Standardizer,
}

/// Row-wise softmax of `x W^T + b` for already standardized `x`.
fn softmax_scores(x: &Matrix<f64>, w: &Matrix<f64>, b: &[f64]) -> Matrix<f64> {
    let (n, k) = (x.rows(), w.rows());
    let mut z = vec![0.0; n * k];
    for row in z.chunks_exact_mut(k) {
        row.copy_from_slice(b);
    }
    gemm(1.0, x.as_slice(), n, x.cols(), Op::N, w.as_slice(), k, w.cols(), Op::T, 1.0, &mut z);
    for row in z.chunks_exact_mut(k) {
        let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - top).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Matrix::from_vec(n, k, z).expect("shape")
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl LinearClassifier {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn predict_proba(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        if x.cols() != self.weights.cols() {
            return Err(Error::ShapeMismatch { expected: vec![self.weights.cols()], got: vec![x.cols()] });
        }
        Ok(softmax_scores(&self.standardizer.apply(x), &self.weights, &self.bias))
    }

    pub fn predict(&self, x: &Matrix<f64>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok((0..p.rows()).map(|i| argmax(p.row(i))).collect())
    }

    pub fn accuracy(&self, x: &Matrix<f64>, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x)?;
        Ok(pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len().max(1) as f64)
    }
}

/// Largest eigenvalue of `x~^T x~ / n` with `x~ = [x, 1]`, by power iteration.
fn curvature_bound(x: &Matrix<f64>) -> f64 {
    let (n, d) = (x.rows(), x.cols());
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut lambda = 1.0;
    for _ in 0..50 {
        let mut next = vec![0.0; d + 1];
        for i in 0..n {
            let r = x.row(i);
            let s: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d];
            for (o, &a) in next.iter_mut().zip(r) {
                *o += s * a;
            }
            next[d] += s;
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt() / n as f64;
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = next.iter().map(|a| a / (norm * n as f64)).collect();
    }
    lambda
}

/// Minibatch SGD on mean cross-entropy plus `l2/2 |W|^2` (bias unpenalized),
/// with step `1/L` for the curvature bound `L` and averaging of the iterates
/// over the second half of the run. `x` must already be standardized.
pub fn train_logistic<R: Rng + ?Sized>(
    x: &Matrix<f64>,
    labels: &[usize],
    classes: usize,
    l2: f64,
    cfg: &SgdConfig,
    rng: &mut R,
) -> (Matrix<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let step = 1.0 / (0.5 * curvature_bound(x) + l2);
    let batch = cfg.batch_size.min(n).max(1);
    let mut w = Matrix::zeros(classes, d);
    let mut b = vec![0.0; classes];
    let mut w_avg = Matrix::zeros(classes, d);
    let mut b_avg = vec![0.0; classes];
    let average_from = cfg.updates / 2;
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut xb = vec![0.0; batch * d];
    let mut gw = vec![0.0; classes * d];
    for t in 0..cfg.updates {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == n {
                order.shuffle(rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        for (slot, &i) in xb.chunks_exact_mut(d).zip(&idx) {
            slot.copy_from_slice(x.row(i));
        }
        let xm = Matrix::from_vec(batch, d, xb.clone()).expect("shape");
        let mut p = softmax_scores(&xm, &w, &b).into_vec();
        for (row, &i) in p.chunks_exact_mut(classes).zip(&idx) {
            row[labels[i]] -= 1.0;
        }
        let inv = 1.0 / batch as f64;
        gemm(inv, &p, batch, classes, Op::T, &xb, batch, d, Op::N, 0.0, &mut gw);
        for (wv, g) in w.as_mut_slice().iter_mut().zip(&gw) {
            *wv -= step * (g + l2 * *wv);
        }
        for (c, bv) in b.iter_mut().enumerate() {
            let g: f64 = p.chunks_exact(classes).map(|r| r[c]).sum::<f64>() * inv;
            *bv -= step * g;
        }
        if t >= average_from {
            let k = (t - average_from + 1) as f64;
            for (a, &v) in w_avg.as_mut_slice().iter_mut().zip(w.as_slice()) {
                *a += (v - *a) / k;
            }
            for (a, &v) in b_avg.iter_mut().zip(&b) {
                *a += (v - *a) / k;
            }
        }
    }
    if cfg.updates == 0 {
        return (w, b);
    }
    (w_avg, b_avg)
}

/// Stratified fold assignment: the members of each class are shuffled and
/// dealt round-robin starting at a random fold.
fn stratified_folds<R: Rng + ?Sized>(labels: &[usize], classes: usize, folds: usize, rng: &mut R) -> Vec<usize> {
    let mut fold = vec![0; labels.len()];
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let offset = rng.random_range(0..folds);
        for (k, &i) in members.iter().enumerate() {
            fold[i] = (k + offset) % folds;
        }
    }
    fold
}

/// Fits a `classes`-way classifier, choosing the L2 penalty from
/// `cfg.l2_grid` by stratified k-fold cross-validation (accuracy, ties broken
/// by held-out log-loss, then by the larger penalty).
pub fn fit_classifier<R: Rng + ?Sized>(
    features: &Matrix<f64>,
    labels: &[usize],
    classes: usize,
    cfg: &SgdConfig,
    rng: &mut R,
) -> Result<LinearClassifier> {
    if labels.len() != features.rows() {
        return Err(Error::ShapeMismatch { expected: vec![features.rows()], got: vec![labels.len()] });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Invalid(format!("label {bad} out of range for {classes} classes")));
    }
    if let Some(missing) = (0..classes).find(|c| !labels.contains(c)) {
        return Err(Error::MissingClass(missing));
    }
    if cfg.l2_grid.is_empty() || cfg.folds < 2 {
        return Err(Error::Invalid("cross-validation needs a non-empty grid and at least 2 folds".into()));
    }
    let standardizer = Standardizer::fit(features);
    let x = standardizer.apply(features);
    let l2 = if cfg.l2_grid.len() == 1 {
        cfg.l2_grid[0]
    } else {
        let fold = stratified_folds(labels, classes, cfg.folds, rng);
        let mut best: Option<(f64, f64, f64)> = None;
        for &l2 in &cfg.l2_grid {
            let (mut correct, mut logloss) = (0usize, 0.0);
            for f in 0..cfg.folds {
                let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
                let held: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] == f).collect();
                if held.is_empty() || train.is_empty() {
                    continue;
                }
                let tl: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
                let (w, b) = train_logistic(&x.select_rows(&train), &tl, classes, l2, cfg, rng);
                let p = softmax_scores(&x.select_rows(&held), &w, &b);
                for (r, &i) in held.iter().enumerate() {
                    correct += usize::from(argmax(p.row(r)) == labels[i]);
                    logloss -= p.row(r)[labels[i]].max(1e-300).ln();
                }
            }
            let acc = correct as f64;
            let better = match best {
                None => true,
                Some((_, ba, bl)) => acc > ba || (acc == ba && logloss <= bl),
            };
            if better {
                best = Some((l2, acc, logloss));
            }
        }
        best.expect("non-empty grid").0
    };
    let (weights, bias) = train_logistic(&x, labels, classes, l2, cfg, rng);
    Ok(LinearClassifier { weights, bias, l2, standardizer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = seeded(1);
        let x = Matrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let clf = fit_classifier(&x, &labels, 3, &SgdConfig { updates: 200, ..Default::default() }, &mut rng).unwrap();
        let p = clf.predict_proba(&x).unwrap();
        for i in 0..p.rows() {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_class_rejected() {
        let x = Matrix::zeros(4, 2);
        let r = fit_classifier(&x, &[0, 0, 2, 2], 3, &SgdConfig::default(), &mut seeded(0));
        assert!(matches!(r, Err(Error::MissingClass(1))));
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }
}
