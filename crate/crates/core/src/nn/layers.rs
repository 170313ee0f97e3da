//! Layers with hand-written backward passes.
//!
//! Sequence activations are channels-last `[batch, length, channels]`, so the
//! receptive field of one convolution output is a contiguous slice and im2col
//! is a plain copy.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{gemm, Op, Scalar};

/// Gradients of a layer's weight and bias (gamma and beta for batch norm).
#[derive(Clone, Debug)]
pub struct AffineGrads<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn uniform_init<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect()).expect("shape")
}

fn expect_rank3<T: Scalar>(x: &Tensor<T>, channels: usize) -> Result<(usize, usize)> {
    match *x.shape() {
        [b, l, c] if c == channels => Ok((b, l)),
        _ => Err(Error::ShapeMismatch { expected: vec![0, 0, channels], got: x.shape().to_vec() }),
    }
}

fn column_sums<T: Scalar>(m: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for row in m.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Valid (unpadded) strided 1-D convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<T> {
    /// `[out_channels, kernel * in_channels]`, tap-major.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    batch: usize,
    in_len: usize,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        let fan_in = in_channels * kernel;
        Self {
            weight: uniform_init(&[out_channels, fan_in], fan_in, rng),
            bias: uniform_init(&[out_channels], fan_in, rng),
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    /// Output length for an input of length `len`, `None` if too short.
    pub fn out_len(&self, len: usize) -> Option<usize> {
        (len >= self.kernel).then(|| (len - self.kernel) / self.stride + 1)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (b, l) = expect_rank3(x, self.in_channels)?;
        let lo = self.out_len(l).ok_or(Error::ShapeMismatch { expected: vec![self.kernel], got: vec![l] })?;
        let width = self.kernel * self.in_channels;
        let mut cols = Vec::with_capacity(b * lo * width);
        for item in x.data().chunks_exact(l * self.in_channels) {
            for t in 0..lo {
                let start = t * self.stride * self.in_channels;
                cols.extend_from_slice(&item[start..start + width]);
            }
        }
        let mut y = Tensor::zeros(&[b, lo, self.out_channels]);
        for row in y.data_mut().chunks_exact_mut(self.out_channels) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(T::one(), &cols, b * lo, width, Op::N, self.weight.data(), self.out_channels, width, Op::T, T::one(), y.data_mut());
        Ok((y, ConvCache { cols, batch: b, in_len: l }))
    }

    /// Returns the input gradient when `need_input` is set.
    pub fn backward(&self, cache: &ConvCache<T>, dy: &Tensor<T>, need_input: bool) -> (Option<Tensor<T>>, AffineGrads<T>) {
        let width = self.kernel * self.in_channels;
        let rows = cache.cols.len() / width;
        let mut dw = Tensor::zeros(self.weight.shape());
        gemm(T::one(), dy.data(), rows, self.out_channels, Op::T, &cache.cols, rows, width, Op::N, T::zero(), dw.data_mut());
        let db = Tensor::from_vec(&[self.out_channels], column_sums(dy.data(), self.out_channels)).expect("shape");
        let dx = need_input.then(|| {
            let mut dcols = vec![T::zero(); rows * width];
            gemm(T::one(), dy.data(), rows, self.out_channels, Op::N, self.weight.data(), self.out_channels, width, Op::N, T::zero(), &mut dcols);
            let lo = rows / cache.batch;
            let item_len = cache.in_len * self.in_channels;
            let mut dx = Tensor::zeros(&[cache.batch, cache.in_len, self.in_channels]);
            for (item, dcol) in dx.data_mut().chunks_exact_mut(item_len).zip(dcols.chunks_exact(lo * width)) {
                for (t, window) in dcol.chunks_exact(width).enumerate() {
                    let start = t * self.stride * self.in_channels;
                    for (d, &g) in item[start..start + width].iter_mut().zip(window) {
                        *d += g;
                    }
                }
            }
            dx
        });
        (dx, AffineGrads { weight: dw, bias: db })
    }
}

/// Non-overlapping max pooling along the sequence axis; a trailing odd
/// element is dropped.
#[derive(Clone, Debug)]
pub struct PoolCache {
    argmax: Vec<usize>,
    in_shape: [usize; 3],
}

pub fn max_pool<T: Scalar>(x: &Tensor<T>, size: usize) -> Result<(Tensor<T>, PoolCache)> {
    let c = *x.shape().last().unwrap_or(&0);
    let (b, l) = expect_rank3(x, c)?;
    let lo = l / size;
    let mut y = Tensor::zeros(&[b, lo, c]);
    let mut argmax = Vec::with_capacity(b * lo * c);
    let xd = x.data();
    let yd = y.data_mut();
    for bi in 0..b {
        for t in 0..lo {
            for ch in 0..c {
                let mut best = (bi * l + t * size) * c + ch;
                for k in 1..size {
                    let idx = (bi * l + t * size + k) * c + ch;
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                yd[(bi * lo + t) * c + ch] = xd[best];
                argmax.push(best);
            }
        }
    }
    Ok((y, PoolCache { argmax, in_shape: [b, l, c] }))
}

pub fn max_pool_backward<T: Scalar>(cache: &PoolCache, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(&cache.in_shape);
    let d = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
        d[idx] += g;
    }
    dx
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

/// Backward pass keyed on the forward output, whose sign matches the input's
/// for a positive slope.
pub fn leaky_relu_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>, slope: T) -> Tensor<T> {
    let data = y.data().iter().zip(dy.data()).map(|(&v, &g)| if v > T::zero() { g } else { g * slope }).collect();
    Tensor::from_vec(y.shape(), data).expect("shape")
}

/// Batch normalization over every axis but the last (channels).
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: T,
    pub momentum: T,
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

/// Per-channel batch mean and unbiased variance, for the running averages.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize, eps: T, momentum: T) -> Self {
        let mut gamma = Tensor::zeros(&[channels]);
        gamma.fill(T::one());
        let mut running_var = Tensor::zeros(&[channels]);
        running_var.fill(T::one());
        Self { gamma, beta: Tensor::zeros(&[channels]), running_mean: Tensor::zeros(&[channels]), running_var, eps, momentum }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn apply(&self, x: &Tensor<T>, mean: &[T], inv_std: &[T], train: bool) -> (Tensor<T>, BnCache<T>) {
        let c = self.channels();
        let mut xhat = x.data().to_vec();
        let mut y = Tensor::zeros(x.shape());
        for (row, out) in xhat.chunks_exact_mut(c).zip(y.data_mut().chunks_exact_mut(c)) {
            for ch in 0..c {
                row[ch] = (row[ch] - mean[ch]) * inv_std[ch];
                out[ch] = self.gamma.data()[ch] * row[ch] + self.beta.data()[ch];
            }
        }
        (y, BnCache { xhat, inv_std: inv_std.to_vec(), train })
    }

    /// Normalizes with the batch's own statistics.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BnCache<T>, BatchStats<T>)> {
        let c = self.channels();
        if x.shape().last() != Some(&c) || x.len() < 2 * c {
            return Err(Error::ShapeMismatch { expected: vec![2, c], got: x.shape().to_vec() });
        }
        let n = x.len() / c;
        let nf = T::lit(n as f64);
        let mean: Vec<T> = column_sums(x.data(), c).into_iter().map(|s| s / nf).collect();
        let mut ss = vec![T::zero(); c];
        for row in x.data().chunks_exact(c) {
            for ch in 0..c {
                let d = row[ch] - mean[ch];
                ss[ch] += d * d;
            }
        }
        let inv_std: Vec<T> = ss.iter().map(|&s| T::one() / (s / nf + self.eps).sqrt()).collect();
        let (y, cache) = self.apply(x, &mean, &inv_std, true);
        let var = ss.iter().map(|&s| s / T::lit((n - 1) as f64)).collect();
        Ok((y, cache, BatchStats { mean, var }))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BnCache<T>)> {
        let c = self.channels();
        if x.shape().last() != Some(&c) {
            return Err(Error::ShapeMismatch { expected: vec![c], got: x.shape().to_vec() });
        }
        let inv_std: Vec<T> = self.running_var.data().iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();
        Ok(self.apply(x, self.running_mean.data(), &inv_std, false))
    }

    pub fn update_running(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        for (r, &s) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (T::one() - m) * *r + m * s;
        }
        for (r, &s) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = (T::one() - m) * *r + m * s;
        }
    }

    pub fn backward(&self, cache: &BnCache<T>, dy: &Tensor<T>) -> (Tensor<T>, AffineGrads<T>) {
        let c = self.channels();
        let n = dy.len() / c;
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for (g, xh) in dy.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                dgamma[ch] += g[ch] * xh[ch];
                dbeta[ch] += g[ch];
            }
        }
        let mut dx = Tensor::zeros(dy.shape());
        let gamma = self.gamma.data();
        let nf = T::lit(n as f64);
        for ((out, g), xh) in dx.data_mut().chunks_exact_mut(c).zip(dy.data().chunks_exact(c)).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                let scale = gamma[ch] * cache.inv_std[ch];
                out[ch] = if cache.train {
                    // sum(dxhat) = gamma*dbeta and sum(dxhat*xhat) = gamma*dgamma
                    scale * (g[ch] - (dbeta[ch] + xh[ch] * dgamma[ch]) / nf)
                } else {
                    scale * g[ch]
                };
            }
        }
        let grads = AffineGrads {
            weight: Tensor::from_vec(&[c], dgamma).expect("shape"),
            bias: Tensor::from_vec(&[c], dbeta).expect("shape"),
        };
        (dx, grads)
    }
}

/// Fully connected layer `y = x W^T + b` on `[batch, in]` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self { weight: uniform_init(&[outputs, inputs], inputs, rng), bias: uniform_init(&[outputs], inputs, rng) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (i, o) = (self.inputs(), self.outputs());
        if x.shape().len() != 2 || x.shape()[1] != i {
            return Err(Error::ShapeMismatch { expected: vec![0, i], got: x.shape().to_vec() });
        }
        let b = x.shape()[0];
        let mut y = Tensor::zeros(&[b, o]);
        for row in y.data_mut().chunks_exact_mut(o) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(T::one(), x.data(), b, i, Op::N, self.weight.data(), o, i, Op::T, T::one(), y.data_mut());
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, need_input: bool) -> (Option<Tensor<T>>, AffineGrads<T>) {
        let (i, o) = (self.inputs(), self.outputs());
        let b = x.shape()[0];
        let mut dw = Tensor::zeros(&[o, i]);
        gemm(T::one(), dy.data(), b, o, Op::T, x.data(), b, i, Op::N, T::zero(), dw.data_mut());
        let db = Tensor::from_vec(&[o], column_sums(dy.data(), o)).expect("shape");
        let dx = need_input.then(|| {
            let mut dx = Tensor::zeros(&[b, i]);
            gemm(T::one(), dy.data(), b, o, Op::N, self.weight.data(), o, i, Op::N, T::zero(), dx.data_mut());
            dx
        });
        (dx, AffineGrads { weight: dw, bias: db })
    }
}

/// Scales every row of a `[batch, d]` tensor to unit Euclidean norm.
pub fn l2_normalize<T: Scalar>(h: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let d = *h.shape().last().unwrap_or(&1);
    let mut z = h.clone();
    let norms = z
        .data_mut()
        .chunks_exact_mut(d)
        .map(|row| {
            let n = row.iter().map(|&v| v * v).sum::<T>().sqrt().max(T::min_positive_value());
            row.iter_mut().for_each(|v| *v /= n);
            n
        })
        .collect();
    (z, norms)
}

/// `dh = (dz - z <z, dz>) / |h|`.
pub fn l2_normalize_backward<T: Scalar>(z: &Tensor<T>, norms: &[T], dz: &Tensor<T>) -> Tensor<T> {
    let d = *z.shape().last().unwrap_or(&1);
    let mut dh = dz.clone();
    for ((g, zr), &n) in dh.data_mut().chunks_exact_mut(d).zip(z.data().chunks_exact(d)).zip(norms) {
        let proj: T = g.iter().zip(zr).map(|(&a, &b)| a * b).sum();
        for (gi, &zi) in g.iter_mut().zip(zr) {
            *gi = (*gi - zi * proj) / n;
        }
    }
    dh
}
