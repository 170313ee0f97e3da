use super::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// First and second moments per parameter tensor plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Vec<T>> = params.into_iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self { v: m.clone(), m, t: 0 }
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step<T: Scalar>(params: &mut [&mut Tensor<T>], grads: &[Tensor<T>], state: &mut AdamState<T>, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter tensor");
    assert_eq!(params.len(), state.m.len(), "optimizer state does not match parameters");
    state.t += 1;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::one() - T::lit(cfg.beta1.powi(state.t as i32));
    let c2 = T::one() - T::lit(cfg.beta2.powi(state.t as i32));
    let (lr, eps, wd) = (T::lit(cfg.learning_rate), T::lit(cfg.eps), T::lit(cfg.weight_decay));
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.len(), g.len(), "gradient shape");
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            let gi = g.data()[i] + wd * *w;
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut st, &AdamConfig::default());
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::from_vec(&[1], vec![0.3f64]).unwrap();
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Tensor::from_vec(&[1], vec![1.0]).unwrap()], &mut st, &AdamConfig::default());
        // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
        assert!((0.3 - p.data()[0] - 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }
}
