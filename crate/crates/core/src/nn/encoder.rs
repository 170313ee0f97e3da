//! The convolutional encoder `f` and the projector `g`.
//!
//! `f`: Conv(64,5,2) → MaxPool(2) → LeakyReLU → BatchNorm → Conv(64,5,1) →
//! MaxPool(2) → LeakyReLU → BatchNorm → Conv(64,3,1) → LeakyReLU → Linear(128).
//! `g`: Linear → LeakyReLU → Linear, renormalized onto the unit sphere.

use rand::Rng;

use super::layers::{
    l2_normalize, l2_normalize_backward, leaky_relu, leaky_relu_backward, max_pool, max_pool_backward, AffineGrads,
    BatchNorm, BatchStats, BnCache, Conv1d, ConvCache, Linear, PoolCache,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const POOL: usize = 2;
const CONV: [(usize, usize); 3] = [(5, 2), (5, 1), (3, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm uses batch statistics.
    Train,
    /// Batch norm uses running statistics; items are independent.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub input_len: usize,
    pub channels: usize,
    pub rep_dim: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
    pub temperature: f64,
    pub leaky_slope: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_len: 100,
            channels: 64,
            rep_dim: 128,
            proj_hidden: 128,
            proj_dim: 128,
            temperature: 0.5,
            leaky_slope: 0.01,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl EncoderConfig {
    /// Sequence lengths after conv1, pool1, conv2, pool2 and conv3.
    pub fn lengths(&self) -> Result<[usize; 5]> {
        let conv = |len: usize, (k, s): (usize, usize)| (len >= k).then(|| (len - k) / s + 1);
        let too_short = || Error::Invalid(format!("input length {} is too short for the encoder", self.input_len));
        let l1 = conv(self.input_len, CONV[0]).ok_or_else(too_short)?;
        let p1 = l1 / POOL;
        let l2 = conv(p1, CONV[1]).ok_or_else(too_short)?;
        let p2 = l2 / POOL;
        let l3 = conv(p2, CONV[2]).ok_or_else(too_short)?;
        Ok([l1, p1, l2, p2, l3])
    }

    pub fn validate(&self) -> Result<()> {
        self.lengths()?;
        if self.channels == 0 || self.rep_dim == 0 || self.proj_hidden == 0 || self.proj_dim == 0 {
            return Err(Error::Invalid("encoder widths must be positive".into()));
        }
        if !(self.temperature > 0.0) || !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Invalid("temperature, bn_eps and bn_momentum out of range".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub conv1: Conv1d<T>,
    pub bn1: BatchNorm<T>,
    pub conv2: Conv1d<T>,
    pub bn2: BatchNorm<T>,
    pub conv3: Conv1d<T>,
    pub fc: Linear<T>,
    pub proj1: Linear<T>,
    pub proj2: Linear<T>,
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    batch: usize,
    c1: ConvCache<T>,
    pool1: PoolCache,
    r1: Tensor<T>,
    bn1: BnCache<T>,
    stats1: Option<BatchStats<T>>,
    c2: ConvCache<T>,
    pool2: PoolCache,
    r2: Tensor<T>,
    bn2: BnCache<T>,
    stats2: Option<BatchStats<T>>,
    c3: ConvCache<T>,
    r3: Tensor<T>,
    flat: Tensor<T>,
    /// Representation `f(x)`.
    pub h: Tensor<T>,
    proj: Option<ProjTrace<T>>,
}

#[derive(Clone, Debug)]
struct ProjTrace<T> {
    v: Tensor<T>,
    norms: Vec<T>,
    z: Tensor<T>,
}

impl<T: Scalar> Trace<T> {
    /// Unit-norm projection `g(f(x))`, present when the pass included the projector.
    pub fn z(&self) -> Option<&Tensor<T>> {
        self.proj.as_ref().map(|p| &p.z)
    }
}

/// Parameter gradients in [`EncoderParams::param_names`] order.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub params: Vec<Tensor<T>>,
    pub input: Option<Tensor<T>>,
}

impl<T: Scalar> EncoderParams<T> {
    /// Weights uniform in `±1/sqrt(fan_in)`, batch norm at identity.
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let last = config.lengths()?[4];
        let (eps, mom) = (T::lit(config.bn_eps), T::lit(config.bn_momentum));
        Ok(Self {
            conv1: Conv1d::new(1, c, CONV[0].0, CONV[0].1, rng),
            bn1: BatchNorm::new(c, eps, mom),
            conv2: Conv1d::new(c, c, CONV[1].0, CONV[1].1, rng),
            bn2: BatchNorm::new(c, eps, mom),
            conv3: Conv1d::new(c, c, CONV[2].0, CONV[2].1, rng),
            fc: Linear::new(c * last, config.rep_dim, rng),
            proj1: Linear::new(config.rep_dim, config.proj_hidden, rng),
            proj2: Linear::new(config.proj_hidden, config.proj_dim, rng),
            config,
        })
    }

    pub fn param_names() -> [&'static str; 16] {
        [
            "conv1.weight",
            "conv1.bias",
            "bn1.weight",
            "bn1.bias",
            "conv2.weight",
            "conv2.bias",
            "bn2.weight",
            "bn2.bias",
            "conv3.weight",
            "conv3.bias",
            "fc.weight",
            "fc.bias",
            "proj1.weight",
            "proj1.bias",
            "proj2.weight",
            "proj2.bias",
        ]
    }

    pub fn buffer_names() -> [&'static str; 4] {
        ["bn1.running_mean", "bn1.running_var", "bn2.running_mean", "bn2.running_var"]
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![
            &self.conv1.weight,
            &self.conv1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.conv3.weight,
            &self.conv3.bias,
            &self.fc.weight,
            &self.fc.bias,
            &self.proj1.weight,
            &self.proj1.bias,
            &self.proj2.weight,
            &self.proj2.bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.conv3.weight,
            &mut self.conv3.bias,
            &mut self.fc.weight,
            &mut self.fc.bias,
            &mut self.proj1.weight,
            &mut self.proj1.bias,
            &mut self.proj2.weight,
            &mut self.proj2.bias,
        ]
    }

    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        vec![&self.bn1.running_mean, &self.bn1.running_var, &self.bn2.running_mean, &self.bn2.running_var]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.bn1.running_mean, &mut self.bn1.running_var, &mut self.bn2.running_mean, &mut self.bn2.running_var]
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn slope(&self) -> T {
        T::lit(self.config.leaky_slope)
    }

    fn batch_norm(bn: &BatchNorm<T>, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BnCache<T>, Option<BatchStats<T>>)> {
        match mode {
            Mode::Train => bn.forward_train(x).map(|(y, c, s)| (y, c, Some(s))),
            Mode::Eval => bn.forward_eval(x).map(|(y, c)| (y, c, None)),
        }
    }

    /// Full pass over a `[batch, input_len]` tensor; the projector runs when
    /// `project` is set.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode, project: bool) -> Result<Trace<T>> {
        let n = self.config.input_len;
        let batch = match *x.shape() {
            [b, l] if l == n => b,
            _ => return Err(Error::ShapeMismatch { expected: vec![0, n], got: x.shape().to_vec() }),
        };
        let slope = self.slope();
        let x = x.clone().reshape(&[batch, n, 1])?;
        let (a1, c1) = self.conv1.forward(&x)?;
        let (p1, pool1) = max_pool(&a1, POOL)?;
        let r1 = leaky_relu(&p1, slope);
        let (n1, bn1, stats1) = Self::batch_norm(&self.bn1, &r1, mode)?;
        let (a2, c2) = self.conv2.forward(&n1)?;
        let (p2, pool2) = max_pool(&a2, POOL)?;
        let r2 = leaky_relu(&p2, slope);
        let (n2, bn2, stats2) = Self::batch_norm(&self.bn2, &r2, mode)?;
        let (a3, c3) = self.conv3.forward(&n2)?;
        let r3 = leaky_relu(&a3, slope);
        let width = r3.len() / batch.max(1);
        let flat = r3.clone().reshape(&[batch, width])?;
        let h = self.fc.forward(&flat)?;
        let proj = if project {
            let v = leaky_relu(&self.proj1.forward(&h)?, slope);
            let (z, norms) = l2_normalize(&self.proj2.forward(&v)?);
            Some(ProjTrace { v, norms, z })
        } else {
            None
        };
        Ok(Trace { batch, c1, pool1, r1, bn1, stats1, c2, pool2, r2, bn2, stats2, c3, r3, flat, h, proj })
    }

    /// Representation `f(x)` of a `[batch, input_len]` tensor.
    pub fn encode(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(self.forward(x, mode, false)?.h)
    }

    /// `g(h)` on the unit sphere.
    pub fn project(&self, h: &Tensor<T>) -> Result<Tensor<T>> {
        let v = leaky_relu(&self.proj1.forward(h)?, self.slope());
        Ok(l2_normalize(&self.proj2.forward(&v)?).0)
    }

    /// Backpropagates `dz` (through the projector) and `dh` (directly into the
    /// representation). Projector gradients are zero when `dz` is absent.
    pub fn backward(&self, trace: &Trace<T>, dz: Option<&Tensor<T>>, dh: Option<&Tensor<T>>, need_input: bool) -> Result<Gradients<T>> {
        let slope = self.slope();
        let zero_affine = |l: &Linear<T>| AffineGrads { weight: Tensor::zeros(l.weight.shape()), bias: Tensor::zeros(l.bias.shape()) };
        let mut dh_total = dh.cloned().unwrap_or_else(|| Tensor::zeros(trace.h.shape()));
        let (g_p1, g_p2) = match (dz, &trace.proj) {
            (Some(dz), Some(p)) => {
                let dw = l2_normalize_backward(&p.z, &p.norms, dz);
                let (dv, g2) = self.proj2.backward(&p.v, &dw, true);
                let du = leaky_relu_backward(&p.v, &dv.expect("input grad"), slope);
                let (dhp, g1) = self.proj1.backward(&trace.h, &du, true);
                for (a, &b) in dh_total.data_mut().iter_mut().zip(dhp.expect("input grad").data()) {
                    *a += b;
                }
                (g1, g2)
            }
            (Some(_), None) => return Err(Error::Invalid("trace has no projector pass".into())),
            _ => (zero_affine(&self.proj1), zero_affine(&self.proj2)),
        };
        let (dflat, g_fc) = self.fc.backward(&trace.flat, &dh_total, true);
        let dr3 = dflat.expect("input grad").reshape(trace.r3.shape())?;
        let da3 = leaky_relu_backward(&trace.r3, &dr3, slope);
        let (dn2, g_c3) = self.conv3.backward(&trace.c3, &da3, true);
        let (dr2, g_bn2) = self.bn2.backward(&trace.bn2, &dn2.expect("input grad"));
        let dp2 = leaky_relu_backward(&trace.r2, &dr2, slope);
        let da2 = max_pool_backward(&trace.pool2, &dp2);
        let (dn1, g_c2) = self.conv2.backward(&trace.c2, &da2, true);
        let (dr1, g_bn1) = self.bn1.backward(&trace.bn1, &dn1.expect("input grad"));
        let dp1 = leaky_relu_backward(&trace.r1, &dr1, slope);
        let da1 = max_pool_backward(&trace.pool1, &dp1);
        let (dx, g_c1) = self.conv1.backward(&trace.c1, &da1, need_input);
        let input = match dx {
            Some(dx) => Some(dx.reshape(&[trace.batch, self.config.input_len])?),
            None => None,
        };
        let params = [g_c1, g_bn1, g_c2, g_bn2, g_c3, g_fc, g_p1, g_p2].into_iter().flat_map(|g| [g.weight, g.bias]).collect();
        Ok(Gradients { params, input })
    }

    /// Folds a training pass's batch statistics into the running averages.
    pub fn update_running_stats(&mut self, trace: &Trace<T>) {
        if let Some(s) = &trace.stats1 {
            self.bn1.update_running(s);
        }
        if let Some(s) = &trace.stats2 {
            self.bn2.update_running(s);
        }
    }

    /// Eval-mode representations, processed in chunks of `chunk` rows.
    pub fn embed_rows(&self, rows: &[&[T]], chunk: usize) -> Result<Tensor<T>> {
        let d = self.config.rep_dim;
        let mut out = Vec::with_capacity(rows.len() * d);
        for part in rows.chunks(chunk.max(1)) {
            let x = Tensor::from_rows(part)?;
            out.extend_from_slice(self.encode(&x, Mode::Eval)?.data());
        }
        Tensor::from_vec(&[rows.len(), d], out)
    }

    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        let conv = |c: &Conv1d<T>| Conv1d {
            weight: c.weight.cast(),
            bias: c.bias.cast(),
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            kernel: c.kernel,
            stride: c.stride,
        };
        let bn = |b: &BatchNorm<T>| BatchNorm {
            gamma: b.gamma.cast(),
            beta: b.beta.cast(),
            running_mean: b.running_mean.cast(),
            running_var: b.running_var.cast(),
            eps: U::lit(b.eps.as_f64()),
            momentum: U::lit(b.momentum.as_f64()),
        };
        let lin = |l: &Linear<T>| Linear { weight: l.weight.cast(), bias: l.bias.cast() };
        EncoderParams {
            config: self.config.clone(),
            conv1: conv(&self.conv1),
            bn1: bn(&self.bn1),
            conv2: conv(&self.conv2),
            bn2: bn(&self.bn2),
            conv3: conv(&self.conv3),
            fc: lin(&self.fc),
            proj1: lin(&self.proj1),
            proj2: lin(&self.proj2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn default_lengths() {
        assert_eq!(EncoderConfig::default().lengths().unwrap(), [48, 24, 20, 10, 8]);
        let p = EncoderParams::<f32>::new(EncoderConfig::default(), &mut seeded(0)).unwrap();
        assert_eq!(p.fc.inputs(), 512);
        assert_eq!(p.params().len(), EncoderParams::<f32>::param_names().len());
    }

    #[test]
    fn short_input_rejected() {
        let cfg = EncoderConfig { input_len: 20, ..Default::default() };
        assert!(EncoderParams::<f64>::new(cfg, &mut seeded(0)).is_err());
    }

    #[test]
    fn output_shapes() {
        let p = EncoderParams::<f64>::new(EncoderConfig::default(), &mut seeded(1)).unwrap();
        let x = Tensor::from_vec(&[3, 100], (0..300).map(|i| (i as f64 * 0.1).sin()).collect()).unwrap();
        let t = p.forward(&x, Mode::Train, true).unwrap();
        assert_eq!(t.h.shape(), &[3, 128]);
        for row in t.z().unwrap().data().chunks(128) {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert!(p.encode(&Tensor::zeros(&[2, 99]), Mode::Eval).is_err());
    }
}
