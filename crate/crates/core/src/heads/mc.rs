//! Two-alternative extrapolation: problem construction and the bilinear
//! chooser `p_i ∝ exp<W h_i, W h_0>`.

use rand::Rng;

use super::classifier::Standardizer;
use crate::error::{Error, Result};
use crate::gp::{Conditioner, KernelFamily};
use crate::curves::{HyperparamRedraw, RedrawSampler};
use crate::gp::Grid;
use crate::linalg::Matrix;
use crate::nn::{adam_step, AdamConfig, AdamState, Tensor};
use crate::scalar::{gemm, Op};

/// Observed prefix length of a problem.
pub const PROMPT_LEN: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PromptSource {
    Cg,
    Sm,
}

impl PromptSource {
    pub fn tag(self) -> &'static str {
        match self {
            PromptSource::Cg => "CG",
            PromptSource::Sm => "SM",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McProblem {
    pub prompt: Vec<f64>,
    /// The full generated curve the prompt was cut from.
    pub truth: Vec<f64>,
    /// `[CG completion, SM completion]`, each the prompt followed by a
    /// constant-mean posterior mean.
    pub candidates: [Vec<f64>; 2],
    pub correct: usize,
    pub source: PromptSource,
    pub family: KernelFamily,
    /// The CG family whose evidence on the prompt was highest.
    pub cg_family: KernelFamily,
}

/// A redraw with the 14 conditioners on the prompt block precomputed.
#[derive(Debug)]
pub struct McBuilder<'a> {
    sampler: &'a RedrawSampler<f64>,
    conditioners: Vec<Conditioner<f64>>,
    prompt_len: usize,
}

impl<'a> McBuilder<'a> {
    pub fn new(sampler: &'a RedrawSampler<f64>, prompt_len: usize) -> Result<Self> {
        let grid = sampler.grid();
        if prompt_len == 0 || prompt_len >= grid.len() {
            return Err(Error::Invalid(format!("prompt length {prompt_len} must lie in 1..{}", grid.len())));
        }
        let conditioners = sampler
            .redraw()
            .specs()
            .iter()
            .map(|s| Conditioner::new(s, grid, prompt_len))
            .collect::<Result<_>>()?;
        Ok(Self { sampler, conditioners, prompt_len })
    }

    fn query(&self) -> &[f64] {
        &self.sampler.grid().points()[self.prompt_len..]
    }

    fn complete(&self, family: KernelFamily, prompt: &[f64]) -> Result<Vec<f64>> {
        let tail = self.conditioners[family.index()].posterior_mean_offset(prompt, self.query())?;
        Ok(prompt.iter().copied().chain(tail).collect())
    }

    /// The CG family with the highest marginal likelihood of `prompt` (its
    /// constant offset profiled out), and the completion under it.
    pub fn cg_completion(&self, prompt: &[f64]) -> Result<(KernelFamily, Vec<f64>)> {
        let mut best = (KernelFamily::COMPOSITIONAL[0], f64::NEG_INFINITY);
        for &f in KernelFamily::COMPOSITIONAL.iter() {
            let lml = self.conditioners[f.index()].log_likelihood_offset(prompt)?;
            if lml > best.1 {
                best = (f, lml);
            }
        }
        Ok((best.0, self.complete(best.0, prompt)?))
    }

    /// A problem whose prompt comes from SM or a uniformly chosen CG family,
    /// each with probability 1/2.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<McProblem> {
        let source = if rng.random_bool(0.5) { PromptSource::Sm } else { PromptSource::Cg };
        let family = match source {
            PromptSource::Sm => KernelFamily::SpectralMixture,
            PromptSource::Cg => KernelFamily::COMPOSITIONAL[rng.random_range(0..KernelFamily::COMPOSITIONAL.len())],
        };
        self.build_from(family, rng)
    }

    pub fn build_from<R: Rng + ?Sized>(&self, family: KernelFamily, rng: &mut R) -> Result<McProblem> {
        let truth = self.sampler.generate_family(family, rng)?.values;
        let prompt = truth[..self.prompt_len].to_vec();
        let (cg_family, cg) = self.cg_completion(&prompt)?;
        let sm = self.complete(KernelFamily::SpectralMixture, &prompt)?;
        let source = if family.is_compositional() { PromptSource::Cg } else { PromptSource::Sm };
        let correct = match source {
            PromptSource::Cg => 0,
            PromptSource::Sm => 1,
        };
        Ok(McProblem { prompt, truth, candidates: [cg, sm], correct, source, family, cg_family })
    }
}

/// One problem from a redraw; builds the conditioners on every call.
pub fn build_mc_problem<R: Rng + ?Sized>(redraw: &HyperparamRedraw<f64>, grid: &Grid<f64>, rng: &mut R) -> Result<McProblem> {
    let sampler = RedrawSampler::new(redraw.clone(), grid.clone())?;
    McBuilder::new(&sampler, PROMPT_LEN)?.build(rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub proj_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { proj_dim: 32, epochs: 200, learning_rate: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McHead {
    /// `[proj_dim, d]`, acting on standardized features.
    pub w: Matrix<f64>,
    pub standardizer: Standardizer,
}

/// Standardized features of the prompt and both candidates.
struct Triplet {
    h0: Matrix<f64>,
    h1: Matrix<f64>,
    h2: Matrix<f64>,
}

fn project(x: &Matrix<f64>, w: &[f64], k: usize) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut out = vec![0.0; n * k];
    gemm(1.0, x.as_slice(), n, d, Op::N, w, k, d, Op::T, 0.0, &mut out);
    out
}

/// Logit of choosing candidate 1 over candidate 2: `<W(h1 - h2), W h0>`.
fn margins(t: &Triplet, w: &[f64], k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Matrix<f64>) {
    let diff = Matrix::from_fn(t.h1.rows(), t.h1.cols(), |i, j| t.h1[(i, j)] - t.h2[(i, j)]);
    let u0 = project(&t.h0, w, k);
    let ud = project(&diff, w, k);
    let m = u0.chunks_exact(k).zip(ud.chunks_exact(k)).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect();
    (m, u0, ud, diff)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl McHead {
    fn triplet(&self, h0: &Matrix<f64>, h1: &Matrix<f64>, h2: &Matrix<f64>) -> Result<Triplet> {
        let d = self.w.cols();
        for h in [h0, h1, h2] {
            if h.cols() != d || h.rows() != h0.rows() {
                return Err(Error::ShapeMismatch { expected: vec![h0.rows(), d], got: vec![h.rows(), h.cols()] });
            }
        }
        Ok(Triplet { h0: self.standardizer.apply(h0), h1: self.standardizer.apply(h1), h2: self.standardizer.apply(h2) })
    }

    /// `(p_1, p_2)` for every problem (rows of the three feature matrices).
    pub fn probabilities(&self, h0: &Matrix<f64>, h1: &Matrix<f64>, h2: &Matrix<f64>) -> Result<Vec<[f64; 2]>> {
        let t = self.triplet(h0, h1, h2)?;
        let (m, ..) = margins(&t, self.w.as_slice(), self.w.rows());
        Ok(m.into_iter().map(|s| {
            let p1 = sigmoid(s);
            [p1, 1.0 - p1]
        }).collect())
    }
}

/// Full-batch Adam on the mean cross-entropy of the correct candidates.
pub fn fit_mc_head<R: Rng + ?Sized>(
    h0: &Matrix<f64>,
    h1: &Matrix<f64>,
    h2: &Matrix<f64>,
    correct: &[usize],
    cfg: &McConfig,
    rng: &mut R,
) -> Result<McHead> {
    let (n, d) = (h0.rows(), h0.cols());
    if n == 0 || correct.len() != n {
        return Err(Error::ShapeMismatch { expected: vec![n], got: vec![correct.len()] });
    }
    if correct.iter().any(|&c| c > 1) {
        return Err(Error::Invalid("correct index must be 0 or 1".into()));
    }
    let stacked = Matrix::from_rows(&(0..n).flat_map(|i| [h0.row(i), h1.row(i), h2.row(i)]).collect::<Vec<_>>())?;
    let k = cfg.proj_dim;
    let bound = 1.0 / (d as f64).sqrt();
    let w0 = Matrix::from_fn(k, d, |_, _| rng.random_range(-bound..bound));
    let mut head = McHead { w: w0, standardizer: Standardizer::fit(&stacked) };
    let t = head.triplet(h0, h1, h2)?;
    let mut w = Tensor::from_vec(&[k, d], head.w.as_slice().to_vec())?;
    let mut state = AdamState::new([&w]);
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() };
    for _ in 0..cfg.epochs {
        let (m, u0, ud, diff) = margins(&t, w.data(), k);
        // dL/dmargin = p1 - y1, averaged over problems.
        let g: Vec<f64> = m.iter().zip(correct).map(|(&s, &c)| (sigmoid(s) - f64::from(u8::from(c == 0))) / n as f64).collect();
        let scaled = |u: &[f64]| -> Vec<f64> { u.chunks_exact(k).zip(&g).flat_map(|(r, &gi)| r.iter().map(move |v| v * gi)).collect() };
        let (gud, gu0) = (scaled(&ud), scaled(&u0));
        let mut grad = Tensor::zeros(&[k, d]);
        gemm(1.0, &gud, n, k, Op::T, t.h0.as_slice(), n, d, Op::N, 0.0, grad.data_mut());
        gemm(1.0, &gu0, n, k, Op::T, diff.as_slice(), n, d, Op::N, 1.0, grad.data_mut());
        adam_step(&mut [&mut w], &[grad], &mut state, &adam);
    }
    head.w = Matrix::from_vec(k, d, w.into_data())?;
    Ok(head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn identical_candidates_are_a_coin_flip() {
        let mut rng = seeded(0);
        let h0 = Matrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
        let h1 = Matrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
        let head = fit_mc_head(&h0, &h1, &h1.clone(), &[0, 1, 0, 1, 0], &McConfig { epochs: 5, ..Default::default() }, &mut rng).unwrap();
        for p in head.probabilities(&h0, &h1, &h1).unwrap() {
            assert_eq!(p, [0.5, 0.5]);
        }
    }
}
