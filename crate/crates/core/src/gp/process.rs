//! Covariance construction, prior sampling, posterior-mean extrapolation and
//! marginal-likelihood scoring on a fixed grid.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::KernelSpec;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, dot, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Jitter starts at this fraction of the mean diagonal...
pub const JITTER_START: f64 = 1e-8;
/// ...and grows tenfold per retry up to `1e-2` of the mean diagonal.
pub const JITTER_STEPS: usize = 7;

/// Ordered abscissae shared by every curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    points: Vec<T>,
    uniform: bool,
}

impl<T: Scalar> Grid<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.is_empty() || points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("grid points must be non-empty and strictly increasing".into()));
        }
        Ok(Self { points, uniform: false })
    }

    /// `n` evenly spaced points from `start` to `end` inclusive.
    pub fn uniform(start: f64, end: f64, n: usize) -> Result<Self> {
        if n < 2 || !(end > start) {
            return Err(Error::Invalid(format!("uniform grid needs n >= 2 and end > start (n={n})")));
        }
        let step = (end - start) / (n - 1) as f64;
        let points = (0..n).map(|i| T::lit(if i == n - 1 { end } else { start + step * i as f64 })).collect();
        Ok(Self { points, uniform: true })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> T {
        self.points[0]
    }

    pub fn last(&self) -> T {
        self.points[self.points.len() - 1]
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }
}

impl<T: Scalar> Default for Grid<T> {
    /// 100 evenly spaced points on `[0, 10]`.
    fn default() -> Self {
        Self::uniform(0.0, 10.0, 100).expect("default grid is valid")
    }
}

/// `K(xs_i, ys_j)` for arbitrary point sets.
pub fn kernel_matrix<T: Scalar>(spec: &KernelSpec<T>, xs: &[T], ys: &[T]) -> Matrix<T> {
    Matrix::from_fn(xs.len(), ys.len(), |i, j| spec.value(xs[i], ys[j]))
}

/// Symmetric Gram matrix on a grid. On uniform grids the stationary atoms are
/// evaluated once per lag.
fn gram<T: Scalar>(spec: &KernelSpec<T>, grid: &Grid<T>) -> Matrix<T> {
    let x = grid.points();
    let n = x.len();
    let mut k = Matrix::zeros(n, n);
    if grid.is_uniform() {
        let lags: Vec<(T, T)> = (0..n).map(|l| spec.stationary_parts(x[l] - x[0])).collect();
        let family = spec.family();
        for i in 0..n {
            for j in 0..=i {
                let (a, b) = lags[i - j];
                let v = if family.is_compositional() { family.combine(spec.linear_part(x[i], x[j]), a, b) } else { a };
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
    } else {
        for i in 0..n {
            for j in 0..=i {
                let v = spec.value(x[i], x[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
    }
    k
}

/// Cholesky of `entries + jitter*I` with the smallest jitter of the schedule.
pub fn jittered_cholesky<T: Scalar>(entries: &Matrix<T>) -> Result<(Cholesky<T>, T)> {
    let diag = entries.diagonal();
    let mean_diag = diag.iter().copied().sum::<T>() / T::lit(diag.len().max(1) as f64);
    let scale = if mean_diag > T::zero() { mean_diag } else { T::one() };
    cholesky_with_jitter(entries, scale * T::lit(JITTER_START), JITTER_STEPS)
}

/// Kernel covariance on a grid together with its jittered Cholesky factor.
#[derive(Clone, Debug)]
pub struct CovMatrix<T> {
    entries: Matrix<T>,
    jitter: T,
    factor: Cholesky<T>,
}

impl<T: Scalar> CovMatrix<T> {
    /// Entries before jitter.
    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    /// `L z` for a fresh standard-normal `z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let n = self.factor.dim();
        let z: Vec<T> = (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let l = self.factor.lower();
        (0..n).map(|i| dot(&l.row(i)[..=i], &z[..=i])).collect()
    }
}

pub fn covariance<T: Scalar>(spec: &KernelSpec<T>, grid: &Grid<T>) -> Result<CovMatrix<T>> {
    let entries = gram(spec, grid);
    let (factor, jitter) = jittered_cholesky(&entries)?;
    Ok(CovMatrix { entries, jitter, factor })
}

/// One unnormalized draw from the zero-mean GP prior on the grid.
pub fn sample_gp<T: Scalar, R: Rng + ?Sized>(spec: &KernelSpec<T>, grid: &Grid<T>, rng: &mut R) -> Result<Vec<T>> {
    Ok(covariance(spec, grid)?.sample(rng))
}

/// Gaussian log density `-1/2 y^T K^{-1} y - 1/2 log det K - m/2 log 2pi`
/// given the Cholesky factor of `K`.
pub fn gaussian_log_density<T: Scalar>(factor: &Cholesky<T>, y: &[T]) -> T {
    let half = T::lit(0.5);
    let w = factor.solve_lower(y);
    let quad = dot(&w, &w);
    -half * quad - half * factor.log_det() - T::lit(0.5 * y.len() as f64 * (2.0 * PI).ln())
}

/// A kernel conditioned on the first `m` grid points. Factoring once lets
/// many prompts be scored or completed against the same spec.
#[derive(Clone, Debug)]
pub struct Conditioner<T> {
    spec: KernelSpec<T>,
    observed: Vec<T>,
    factor: Cholesky<T>,
    jitter: T,
    /// `L^{-1} 1` and its squared norm `1^T K^{-1} 1`.
    ones: Vec<T>,
    ones_norm: T,
}

impl<T: Scalar> Conditioner<T> {
    pub fn new(spec: &KernelSpec<T>, grid: &Grid<T>, m: usize) -> Result<Self> {
        if m == 0 || m > grid.len() {
            return Err(Error::Invalid(format!("observed count {m} outside 1..={}", grid.len())));
        }
        let observed = grid.points()[..m].to_vec();
        let entries = if grid.is_uniform() {
            // Leading block of the grid Gram matrix.
            let full = gram(spec, grid);
            Matrix::from_fn(m, m, |i, j| full[(i, j)])
        } else {
            kernel_matrix(spec, &observed, &observed)
        };
        let (factor, jitter) = jittered_cholesky(&entries)?;
        let ones = factor.solve_lower(&vec![T::one(); m]);
        let ones_norm = dot(&ones, &ones);
        Ok(Self { spec: spec.clone(), observed, factor, jitter, ones, ones_norm })
    }

    pub fn observed_len(&self) -> usize {
        self.observed.len()
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    fn check(&self, y_obs: &[T]) -> Result<()> {
        if y_obs.len() != self.observed.len() {
            return Err(Error::ShapeMismatch { expected: vec![self.observed.len()], got: vec![y_obs.len()] });
        }
        Ok(())
    }

    /// `K(query, obs) (K(obs, obs) + jitter I)^{-1} y_obs`, evaluated as
    /// `(L^{-1} k_q) . (L^{-1} y_obs)`. Near rank-deficient kernels (LIN) keep
    /// both factors bounded this way, unlike forming `K^{-1} y` explicitly.
    pub fn posterior_mean(&self, y_obs: &[T], query: &[T]) -> Result<Vec<T>> {
        self.check(y_obs)?;
        let w = self.factor.solve_lower(y_obs);
        Ok(query
            .iter()
            .map(|&q| {
                let k: Vec<T> = self.observed.iter().map(|&x| self.spec.value(q, x)).collect();
                dot(&self.factor.solve_lower(&k), &w)
            })
            .collect())
    }

    /// Log marginal likelihood of the observations under the (jittered) prior.
    pub fn log_marginal_likelihood(&self, y_obs: &[T]) -> Result<T> {
        self.check(y_obs)?;
        Ok(gaussian_log_density(&self.factor, y_obs))
    }

    /// Generalized least-squares estimate of an unknown constant mean,
    /// `1^T K^{-1} y / 1^T K^{-1} 1`.
    pub fn offset(&self, y_obs: &[T]) -> Result<T> {
        self.check(y_obs)?;
        Ok(dot(&self.ones, &self.factor.solve_lower(y_obs)) / self.ones_norm)
    }

    /// Posterior mean when the process has an unknown constant mean with a
    /// flat prior: `b + K(query, obs) K^{-1} (y - b 1)` with `b` from
    /// [`Conditioner::offset`]. Shifting `y_obs` by `c` shifts the result
    /// by `c`, which min-max normalized curves need.
    pub fn posterior_mean_offset(&self, y_obs: &[T], query: &[T]) -> Result<Vec<T>> {
        let b = self.offset(y_obs)?;
        let centered: Vec<T> = y_obs.iter().map(|&v| v - b).collect();
        Ok(self.posterior_mean(&centered, query)?.into_iter().map(|v| v + b).collect())
    }

    /// Log marginal likelihood of `y_obs - b 1` with `b` profiled out.
    pub fn log_likelihood_offset(&self, y_obs: &[T]) -> Result<T> {
        let b = self.offset(y_obs)?;
        let centered: Vec<T> = y_obs.iter().map(|&v| v - b).collect();
        self.log_marginal_likelihood(&centered)
    }
}

/// Posterior mean at the given grid indices given values on the first
/// `y_obs.len()` grid points.
pub fn posterior_mean<T: Scalar>(spec: &KernelSpec<T>, grid: &Grid<T>, y_obs: &[T], query: &[usize]) -> Result<Vec<T>> {
    if y_obs.len() >= grid.len() {
        return Err(Error::Invalid(format!("need fewer than {} observations, got {}", grid.len(), y_obs.len())));
    }
    let xs = query
        .iter()
        .map(|&i| grid.points().get(i).copied().ok_or_else(|| Error::Invalid(format!("query index {i} off grid"))))
        .collect::<Result<Vec<_>>>()?;
    Conditioner::new(spec, grid, y_obs.len())?.posterior_mean(y_obs, &xs)
}

/// Posterior mean on every grid point after the observed prefix.
pub fn extrapolate<T: Scalar>(spec: &KernelSpec<T>, grid: &Grid<T>, y_obs: &[T]) -> Result<Vec<T>> {
    let query: Vec<usize> = (y_obs.len()..grid.len()).collect();
    posterior_mean(spec, grid, y_obs, &query)
}

/// [`extrapolate`] with the constant mean estimated from the prefix.
pub fn extrapolate_offset<T: Scalar>(spec: &KernelSpec<T>, grid: &Grid<T>, y_obs: &[T]) -> Result<Vec<T>> {
    if y_obs.len() >= grid.len() {
        return Err(Error::Invalid(format!("need fewer than {} observations, got {}", grid.len(), y_obs.len())));
    }
    Conditioner::new(spec, grid, y_obs.len())?.posterior_mean_offset(y_obs, &grid.points()[y_obs.len()..])
}

pub fn log_marginal_likelihood<T: Scalar>(spec: &KernelSpec<T>, grid: &Grid<T>, y_obs: &[T]) -> Result<T> {
    Conditioner::new(spec, grid, y_obs.len())?.log_marginal_likelihood(y_obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::kernel::{sample_hyperparams, KernelFamily, LinearAtom};
    use crate::rng::seeded;

    #[test]
    fn default_grid_is_hundred_points_on_zero_ten() {
        let g: Grid<f64> = Grid::default();
        assert_eq!(g.len(), 100);
        assert_eq!(g.first(), 0.0);
        assert_eq!(g.last(), 10.0);
        assert!(g.points().windows(2).all(|w| w[1] > w[0]));
        assert!(Grid::new(vec![0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn linear_covariance_hand_values() {
        let spec = KernelSpec::<f64>::grammar(KernelFamily::Lin, Some(LinearAtom { theta1: 0.0 }), None, None).unwrap();
        let grid = Grid::new(vec![1.0, 2.0]).unwrap();
        let cov = covariance(&spec, &grid).unwrap();
        assert_eq!(cov.entries().as_slice(), &[1.0, 2.0, 2.0, 4.0]);
        // Rank one, so zero jitter never suffices; first schedule step is 2.5e-8.
        assert!(cov.jitter() >= 2.5e-8 && cov.jitter() <= 2.5e-2);
        let l = cov.factor().lower();
        let rec = l.matmul(&l.transpose()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = cov.entries()[(i, j)] + if i == j { cov.jitter() } else { 0.0 };
                assert!((rec[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_entries_match_kernel_value() {
        let grid: Grid<f64> = Grid::default();
        let mut rng = seeded(17);
        for f in KernelFamily::ALL {
            let spec: KernelSpec<f64> = sample_hyperparams(f, &mut rng);
            let cov = covariance(&spec, &grid).unwrap();
            let x = grid.points();
            for i in (0..100).step_by(7) {
                for j in (0..100).step_by(5) {
                    let want = spec.value(x[i], x[j]);
                    assert!((cov.entries()[(i, j)] - want).abs() <= 1e-12 * want.abs().max(1.0), "{f} {i} {j}");
                }
            }
        }
    }

    #[test]
    fn rbf_covariance_diagonal_is_theta3() {
        let spec: KernelSpec<f64> = sample_hyperparams(KernelFamily::Rbf, &mut seeded(4));
        let cov = covariance(&spec, &Grid::default()).unwrap();
        assert!(cov.entries().diagonal().iter().all(|&d| d == spec.param("theta3").unwrap()));
    }

    #[test]
    fn sample_is_seed_deterministic_with_grid_length() {
        let grid = Grid::default();
        let spec: KernelSpec<f64> = sample_hyperparams(KernelFamily::LinPlusPerTimesRbf, &mut seeded(8));
        let a = sample_gp(&spec, &grid, &mut seeded(99)).unwrap();
        let b = sample_gp(&spec, &grid, &mut seeded(99)).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn conditioning_on_m80_yields_twenty_values() {
        let grid = Grid::default();
        let spec: KernelSpec<f64> = sample_hyperparams(KernelFamily::SpectralMixture, &mut seeded(8));
        let y = sample_gp(&spec, &grid, &mut seeded(1)).unwrap();
        assert_eq!(extrapolate(&spec, &grid, &y[..80]).unwrap().len(), 20);
        assert!(extrapolate(&spec, &grid, &y).is_err());
    }

    #[test]
    fn identity_covariance_log_density() {
        let id = Matrix::<f64>::identity(6);
        let chol = id.cholesky().unwrap();
        let got = gaussian_log_density(&chol, &[0.0; 6]);
        assert!((got + 3.0 * (2.0 * PI).ln()).abs() < 1e-14);
    }
}
