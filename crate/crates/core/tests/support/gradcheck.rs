//! Central finite-difference checks for every differentiable operation.
//!
//! Each check contracts the layer output with a random cotangent `r`, so the
//! scalar `<r, f(x)>` has gradient `J^T r`, which is what the analytic
//! backward passes compute.

#![allow(dead_code)]

use funclearn::nn::layers::{
    l2_normalize, l2_normalize_backward, leaky_relu, leaky_relu_backward, max_pool, max_pool_backward, BatchNorm,
    Conv1d, Linear,
};
use funclearn::nn::{info_nce, EncoderConfig, EncoderParams, Mode, Tensor};
use funclearn::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-6;

/// Norm-wise relative error `|a - n|_inf / max(|a|_inf, |n|_inf, 1e-6)`.
///
/// The floor keeps identically-zero gradients (the single-pair contrastive
/// loss) from turning round-off into a relative error of 1.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(1e-6, f64::max);
    diff / scale
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + H;
            let up = f(&probe);
            probe[i] = orig - H;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn normal(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Normal draws pushed at least `gap` away from zero.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    normal(rng, shape).map(|v| if v.abs() < gap { v.signum() * gap + v } else { v })
}

fn contract(r: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

fn with_data(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

fn conv(rng: &mut impl Rng) -> f64 {
    let (cin, cout) = (rng.random_range(1..4), rng.random_range(1..4));
    let (k, s) = (rng.random_range(1..5), rng.random_range(1..3));
    let (b, l) = (rng.random_range(1..4), rng.random_range(k + 1..k + 10));
    let layer = Conv1d::<f64>::new(cin, cout, k, s, rng);
    let x = normal(rng, &[b, l, cin]);
    let (y, cache) = layer.forward(&x).unwrap();
    let r = normal(rng, y.shape());
    let (dx, g) = layer.backward(&cache, &r, true);
    let fx = numeric_grad(x.data(), |d| contract(&r, &layer.forward(&with_data(&x, d)).unwrap().0));
    let fw = numeric_grad(layer.weight.data(), |d| {
        let mut l2 = layer.clone();
        l2.weight = with_data(&layer.weight, d);
        contract(&r, &l2.forward(&x).unwrap().0)
    });
    let fb = numeric_grad(layer.bias.data(), |d| {
        let mut l2 = layer.clone();
        l2.bias = with_data(&layer.bias, d);
        contract(&r, &l2.forward(&x).unwrap().0)
    });
    rel_err(dx.unwrap().data(), &fx).max(rel_err(g.weight.data(), &fw)).max(rel_err(g.bias.data(), &fb))
}

fn pool(rng: &mut impl Rng) -> f64 {
    let (b, l, c) = (rng.random_range(1..4), rng.random_range(2..12), rng.random_range(1..4));
    // Distinct values with clear gaps, so no perturbation flips an argmax.
    let n = b * l * c;
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    let x = Tensor::from_vec(&[b, l, c], vals).unwrap();
    let (y, cache) = max_pool(&x, 2).unwrap();
    let r = normal(rng, y.shape());
    let dx = max_pool_backward(&cache, &r);
    let fx = numeric_grad(x.data(), |d| contract(&r, &max_pool(&with_data(&x, d), 2).unwrap().0));
    rel_err(dx.data(), &fx)
}

fn lrelu(rng: &mut impl Rng) -> f64 {
    let shape = [rng.random_range(1..5), rng.random_range(1..12)];
    let x = away_from_zero(rng, &shape, 1e-2);
    let slope = 0.01;
    let y = leaky_relu(&x, slope);
    let r = normal(rng, y.shape());
    let dx = leaky_relu_backward(&y, &r, slope);
    let fx = numeric_grad(x.data(), |d| contract(&r, &leaky_relu(&with_data(&x, d), slope)));
    rel_err(dx.data(), &fx)
}

fn batch_norm(rng: &mut impl Rng, train: bool) -> f64 {
    let c = rng.random_range(1..5);
    let mut bn = BatchNorm::<f64>::new(c, 1e-5, 0.1);
    bn.gamma = normal(rng, &[c]);
    bn.beta = normal(rng, &[c]);
    bn.running_mean = normal(rng, &[c]);
    bn.running_var = normal(rng, &[c]).map(|v| v.abs() + 0.5);
    // Two samples normalize to +-1 whatever x is, leaving a zero input gradient.
    let shape = [rng.random_range(2..4), rng.random_range(2..6), c];
    let x = normal(rng, &shape);
    let fwd = |bn: &BatchNorm<f64>, x: &Tensor<f64>| {
        if train {
            let (y, cache, _) = bn.forward_train(x).unwrap();
            (y, cache)
        } else {
            bn.forward_eval(x).unwrap()
        }
    };
    let (y, cache) = fwd(&bn, &x);
    let r = normal(rng, y.shape());
    let (dx, g) = bn.backward(&cache, &r);
    let fx = numeric_grad(x.data(), |d| contract(&r, &fwd(&bn, &with_data(&x, d)).0));
    let fg = numeric_grad(bn.gamma.data(), |d| {
        let mut b2 = bn.clone();
        b2.gamma = with_data(&bn.gamma, d);
        contract(&r, &fwd(&b2, &x).0)
    });
    let fb = numeric_grad(bn.beta.data(), |d| {
        let mut b2 = bn.clone();
        b2.beta = with_data(&bn.beta, d);
        contract(&r, &fwd(&b2, &x).0)
    });
    rel_err(dx.data(), &fx).max(rel_err(g.weight.data(), &fg)).max(rel_err(g.bias.data(), &fb))
}

fn linear(rng: &mut impl Rng) -> f64 {
    let layer = Linear::<f64>::new(rng.random_range(1..10), rng.random_range(1..10), rng);
    let shape = [rng.random_range(1..5), layer.inputs()];
    let x = normal(rng, &shape);
    let y = layer.forward(&x).unwrap();
    let r = normal(rng, y.shape());
    let (dx, g) = layer.backward(&x, &r, true);
    let fx = numeric_grad(x.data(), |d| contract(&r, &layer.forward(&with_data(&x, d)).unwrap()));
    let fw = numeric_grad(layer.weight.data(), |d| {
        let l2 = Linear { weight: with_data(&layer.weight, d), bias: layer.bias.clone() };
        contract(&r, &l2.forward(&x).unwrap())
    });
    let fb = numeric_grad(layer.bias.data(), |d| {
        let l2 = Linear { weight: layer.weight.clone(), bias: with_data(&layer.bias, d) };
        contract(&r, &l2.forward(&x).unwrap())
    });
    rel_err(dx.unwrap().data(), &fx).max(rel_err(g.weight.data(), &fw)).max(rel_err(g.bias.data(), &fb))
}

fn normalize(rng: &mut impl Rng) -> f64 {
    let shape = [rng.random_range(1..5), rng.random_range(2..10)];
    let x = normal(rng, &shape);
    let (z, norms) = l2_normalize(&x);
    let r = normal(rng, z.shape());
    let dx = l2_normalize_backward(&z, &norms, &r);
    let fx = numeric_grad(x.data(), |d| contract(&r, &l2_normalize(&with_data(&x, d)).0));
    rel_err(dx.data(), &fx)
}

fn contrastive(rng: &mut impl Rng) -> f64 {
    // N = 1 has an identically zero loss; the closed-form tests cover it.
    let rows = 2 * rng.random_range(2..5);
    let shape = [rows, rng.random_range(2..8)];
    let x = normal(rng, &shape);
    // Gradient with respect to free (not renormalized) rows.
    let tau = rng.random_range(0.2..1.0);
    let (_, dz) = info_nce(&x, tau).unwrap();
    let fx = numeric_grad(x.data(), |d| info_nce(&with_data(&x, d), tau).unwrap().0);
    rel_err(dz.data(), &fx)
}

/// A narrow encoder on full-length inputs, checked end to end through the
/// projector and the contrastive loss.
fn encoder(rng: &mut impl Rng, mode: Mode) -> f64 {
    let cfg = EncoderConfig { channels: 3, rep_dim: 5, proj_hidden: 4, proj_dim: 3, bn_momentum: 1.0, ..Default::default() };
    let tau = 0.5;
    let loss = |p: &EncoderParams<f64>, x: &Tensor<f64>| {
        let t = p.forward(x, mode, true).unwrap();
        info_nce(t.z().unwrap(), tau).unwrap().0
    };
    // A narrow random network sometimes maps every input onto one direction.
    // The loss then sits at tau ln 3 with gradients below finite-difference
    // resolution, so such draws are replaced.
    let (mut p, x) = loop {
        let mut p = EncoderParams::<f64>::new(cfg.clone(), rng).unwrap();
        let x = normal(rng, &[4, 100]);
        // Eval mode starts from this batch's statistics, jittered; arbitrary
        // running statistics collapse the embeddings just the same.
        let warm = p.forward(&x, Mode::Train, true).unwrap();
        p.update_running_stats(&warm);
        for (k, b) in p.buffers_mut().into_iter().enumerate() {
            let jitter = normal(rng, b.shape());
            let data = b.data().iter().zip(jitter.data());
            let data: Vec<f64> =
                if k % 2 == 0 { data.map(|(m, j)| m + 0.1 * j).collect() } else { data.map(|(v, j)| v * (1.0 + 0.1 * j.abs())).collect() };
            *b = with_data(b, &data);
        }
        if (loss(&p, &x) - tau * 3f64.ln()).abs() > 1e-2 {
            break (p, x);
        }
    };
    let trace = p.forward(&x, mode, true).unwrap();
    let (_, dz) = info_nce(trace.z().unwrap(), tau).unwrap();
    let g = p.backward(&trace, Some(&dz), None, true).unwrap();
    let input = rel_err(g.input.unwrap().data(), &numeric_grad(x.data(), |d| loss(&p, &with_data(&x, d))));
    // Parameters are compared as one vector: biases ahead of a train-mode
    // batch norm have a true gradient of zero, and per tensor their
    // round-off would dominate the floored ratio.
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for k in 0..g.params.len() {
        let base = p.params()[k].clone();
        numeric.extend(numeric_grad(base.data(), |d| {
            *p.params_mut()[k] = with_data(&base, d);
            loss(&p, &x)
        }));
        *p.params_mut()[k] = base;
        analytic.extend_from_slice(g.params[k].data());
    }
    input.max(rel_err(&analytic, &numeric))
}

/// One randomized trial over every operation; returns `(name, error)`.
pub fn trial(seed: u64, index: u64) -> Vec<(&'static str, f64)> {
    let mut rng = stream(seed, &[index]);
    let mut out = vec![
        ("conv1d", conv(&mut rng)),
        ("max_pool", pool(&mut rng)),
        ("leaky_relu", lrelu(&mut rng)),
        ("batch_norm_train", batch_norm(&mut rng, true)),
        ("batch_norm_eval", batch_norm(&mut rng, false)),
        ("linear", linear(&mut rng)),
        ("l2_normalize", normalize(&mut rng)),
        ("info_nce", contrastive(&mut rng)),
    ];
    // The full network is the slow part; every fifth trial covers it.
    if index % 5 == 0 {
        let mode = if index % 10 == 0 { Mode::Train } else { Mode::Eval };
        out.push(("encoder", encoder(&mut rng, mode)));
    }
    out
}
