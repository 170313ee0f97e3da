//! Contrastive training loop over freshly generated curves.

use rayon::prelude::*;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::encoder::{EncoderConfig, EncoderParams, Mode};
use super::loss::info_nce;
use super::tensor::Tensor;
use crate::augment::{augment, AugmentConfig};
use crate::curves::{generate_fresh_curve, Curve, RedrawSampler};
use crate::error::{Error, Result};
use crate::gp::Grid;
use crate::rng::{stream, Rng};

const INIT_TAG: u64 = 0x494e_4954;
const CURVE_TAG: u64 = 0x4355_5256;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub total_curves: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            learning_rate: 1e-3,
            weight_decay: 1e-6,
            total_curves: 500_000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self) -> usize {
        self.total_curves.div_ceil(self.batch_size)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_curves == 0 {
            return Err(Error::Invalid("batch_size and total_curves must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Invalid("learning_rate must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }
}

/// Where training curves come from. Implementations must be pure functions
/// of the generator so that batches do not depend on scheduling.
pub trait CurveSource: Sync {
    fn grid(&self) -> &Grid<f64>;
    fn draw(&self, rng: &mut Rng) -> Result<Curve<f64>>;
}

/// Curves with freshly sampled family and hyperparameters.
#[derive(Clone, Debug, Default)]
pub struct FreshCurves {
    pub grid: Grid<f64>,
}

impl CurveSource for FreshCurves {
    fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    fn draw(&self, rng: &mut Rng) -> Result<Curve<f64>> {
        generate_fresh_curve(&self.grid, rng)
    }
}

impl CurveSource for RedrawSampler<f64> {
    fn grid(&self) -> &Grid<f64> {
        RedrawSampler::grid(self)
    }

    fn draw(&self, rng: &mut Rng) -> Result<Curve<f64>> {
        self.generate(rng)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: EncoderParams<f32>,
    /// Loss before each update.
    pub losses: Vec<f64>,
}

/// `[2N, T]` batch of positive pairs: row `i` and row `i + N` are two views
/// of curve `i`, which comes from stream `(seed, [tag, step, i])`.
pub fn pair_batch(
    source: &dyn CurveSource,
    aug: &AugmentConfig,
    grid: &Grid<f32>,
    n: usize,
    seed: u64,
    step: usize,
) -> Result<Tensor<f32>> {
    let pairs: Vec<(Vec<f32>, Vec<f32>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[CURVE_TAG, step as u64, i as u64]);
            let curve: Curve<f32> = source.draw(&mut rng)?.cast();
            Ok((augment(&curve.values, grid, aug, &mut rng)?, augment(&curve.values, grid, aug, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<&[f32]> = pairs.iter().map(|p| p.0.as_slice()).chain(pairs.iter().map(|p| p.1.as_slice())).collect();
    Tensor::from_rows(&rows)
}

/// Runs `total_steps` Adam updates on the contrastive loss. `on_step`
/// receives the step index and the loss of that step's batch.
pub fn train_encoder(
    train: &TrainConfig,
    encoder: &EncoderConfig,
    aug: &AugmentConfig,
    source: &dyn CurveSource,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    train.validate()?;
    aug.validate()?;
    if source.grid().len() != encoder.input_len {
        return Err(Error::ShapeMismatch { expected: vec![encoder.input_len], got: vec![source.grid().len()] });
    }
    let grid: Grid<f32> = Grid::new(source.grid().points().iter().map(|&x| x as f32).collect())?;
    let mut params = EncoderParams::<f32>::new(encoder.clone(), &mut stream(train.seed, &[INIT_TAG]))?;
    let mut state = AdamState::new(params.params());
    let adam = train.adam();
    let tau = encoder.temperature as f32;
    let mut losses = Vec::with_capacity(train.total_steps());
    for step in 0..train.total_steps() {
        let at = |source| Error::AtStep { step, source: Box::new(source) };
        let x = pair_batch(source, aug, &grid, train.batch_size, train.seed, step).map_err(at)?;
        let trace = params.forward(&x, Mode::Train, true).map_err(at)?;
        let (loss, dz) = info_nce(trace.z().expect("projected"), tau).map_err(at)?;
        if !loss.is_finite() {
            return Err(at(Error::Invalid("loss is not finite".into())));
        }
        let grads = params.backward(&trace, Some(&dz), None, false).map_err(at)?;
        adam_step(&mut params.params_mut(), &grads.params, &mut state, &adam);
        params.update_running_stats(&trace);
        losses.push(loss as f64);
        on_step(step, loss as f64);
    }
    Ok(TrainOutcome { params, losses })
}

/// Mean cosine similarity of projections for positive pairs and for
/// mismatched pairs (curve `i` against the other view of curve `i + 1`).
pub fn pair_similarity(
    params: &EncoderParams<f32>,
    source: &dyn CurveSource,
    aug: &AugmentConfig,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let grid: Grid<f32> = Grid::new(source.grid().points().iter().map(|&x| x as f32).collect())?;
    let x = pair_batch(source, aug, &grid, n, seed, usize::MAX)?;
    let z = params.project(&params.encode(&x, Mode::Eval)?)?;
    let cos = |a: usize, b: usize| z.row(a).iter().zip(z.row(b)).map(|(&p, &q)| (p * q) as f64).sum::<f64>();
    let pos = (0..n).map(|i| cos(i, n + i)).sum::<f64>() / n as f64;
    let neg = (0..n).map(|i| cos(i, n + (i + 1) % n)).sum::<f64>() / n as f64;
    Ok((pos, neg))
}
