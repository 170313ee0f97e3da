mod support;

use funclearn::augment::AugmentConfig;
use funclearn::nn::{info_nce, pair_similarity, train_encoder, EncoderConfig, EncoderParams, FreshCurves, Mode, Tensor, TrainConfig};
use funclearn::rng::{seeded, stream};
use rand::Rng;
use rand_distr::StandardNormal;
use support::gradcheck;

#[test]
fn analytic_gradients_match_finite_differences() {
    for i in 0..20 {
        for (name, err) in gradcheck::trial(11, i) {
            assert!(err < 1e-4, "trial {i} {name}: relative error {err:e}");
        }
    }
}

fn unit_rows(rows: usize, d: usize, seed: u64) -> Tensor<f64> {
    let mut rng = seeded(seed);
    let mut data: Vec<f64> = (0..rows * d).map(|_| rng.sample(StandardNormal)).collect();
    for r in data.chunks_mut(d) {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.iter_mut().for_each(|v| *v /= n);
    }
    Tensor::from_vec(&[rows, d], data).unwrap()
}

#[test]
fn info_nce_single_pair_is_identically_zero() {
    for s in 0..50 {
        let (loss, _) = info_nce(&unit_rows(2, 7, s), 0.5).unwrap();
        assert_eq!(loss, 0.0);
    }
}

#[test]
fn info_nce_identical_rows() {
    for n in 1..6usize {
        let z = Tensor::from_vec(&[2 * n, 3], [0.0, 0.6, 0.8].repeat(2 * n)).unwrap();
        let (loss, _) = info_nce(&z, 0.5).unwrap();
        assert!((loss - 0.5 * ((2 * n - 1) as f64).ln()).abs() < 1e-9);
    }
}

#[test]
fn info_nce_matches_enumeration() {
    // e1, e2, e1, e2: row i pairs with row i + 2.
    let z = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
    let tau: f64 = 0.5;
    let rows = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
    let dotp = |a: &[f64; 2], b: &[f64; 2]| a[0] * b[0] + a[1] * b[1];
    let mut total = 0.0;
    for i in 0..4 {
        let pos = dotp(&rows[i], &rows[(i + 2) % 4]);
        let mut s = 0.0;
        for j in 0..4 {
            if j != i {
                s += (dotp(&rows[i], &rows[j]) / tau).exp();
            }
        }
        total += pos - tau * s.ln();
    }
    let want = -total / 4.0;
    let (got, _) = info_nce(&z, tau).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn eval_mode_items_are_independent() {
    let mut p = EncoderParams::<f64>::new(EncoderConfig::default(), &mut seeded(4)).unwrap();
    let mut rng = seeded(5);
    for b in p.buffers_mut() {
        let n = b.len();
        *b = Tensor::from_vec(b.shape(), (0..n).map(|_| rng.random_range(0.5..1.5)).collect()).unwrap();
    }
    let x = Tensor::from_vec(&[32, 100], (0..3200).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let batched = p.encode(&x, Mode::Eval).unwrap();
    for k in [0, 13, 31] {
        let single = p.encode(&Tensor::from_rows(&[x.row(k)]).unwrap(), Mode::Eval).unwrap();
        for (a, b) in single.data().iter().zip(batched.row(k)) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn projections_are_unit_norm() {
    let p = EncoderParams::<f32>::new(EncoderConfig::default(), &mut seeded(6)).unwrap();
    let mut rng = seeded(7);
    let x = Tensor::from_vec(&[16, 100], (0..1600).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap();
    for mode in [Mode::Train, Mode::Eval] {
        let t = p.forward(&x, mode, true).unwrap();
        for r in t.z().unwrap().data().chunks(128) {
            let n = r.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn short_training_run_learns() {
    let train = TrainConfig { batch_size: 64, total_curves: 64 * 120, seed: 3, learning_rate: 3e-3, ..Default::default() };
    let source = FreshCurves::default();
    let aug = AugmentConfig::default();
    let enc = EncoderConfig { channels: 16, ..Default::default() };
    let mut seen = 0;
    let out = train_encoder(&train, &enc, &aug, &source, |_, _| seen += 1).unwrap();
    assert_eq!(seen, 120);
    assert_eq!(out.losses.len(), train.total_steps());
    let head: f64 = out.losses[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = out.losses[100..].iter().sum::<f64>() / 20.0;
    assert!(tail < head, "loss did not decrease: {head} -> {tail}");
    let (pos, neg) = pair_similarity(&out.params, &source, &aug, 200, 99).unwrap();
    assert!(pos > neg, "positive {pos} vs random {neg}");
}

#[test]
fn training_is_deterministic() {
    let train = TrainConfig { batch_size: 16, total_curves: 48, seed: 8, ..Default::default() };
    let enc = EncoderConfig { channels: 8, ..Default::default() };
    let run = || train_encoder(&train, &enc, &AugmentConfig::default(), &FreshCurves::default(), |_, _| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.params, b.params);
    assert_eq!(a.losses, b.losses);
    let mut other = EncoderParams::<f32>::new(enc.clone(), &mut stream(9, &[1])).unwrap();
    other.conv1.bias.fill(0.0);
    assert_ne!(a.params, other);
}
