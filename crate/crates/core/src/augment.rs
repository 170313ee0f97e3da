//! Stochastic topological distortions of curves and positive-pair
//! construction: reflection (T1), jittered KDE upsampling (T2) and random
//! rescaling (T3), always applied in that order.

use rand::Rng;

use crate::curves::{min_max, Curve};
use crate::error::{Error, Result};
use crate::gp::Grid;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    /// Gaussian KDE bandwidth of T2.
    pub kde_bandwidth: f64,
    /// How far, as a fraction of the grid width, the T2 interval may extend
    /// past each end of the grid.
    pub warp_extension: f64,
    /// T3 output spans are drawn from `(rescale_min_span, 1)`.
    pub rescale_min_span: f64,
    /// Number of warp points; `None` means one per grid point.
    pub warp_point_count: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { kde_bandwidth: 0.1, warp_extension: 0.4, rescale_min_span: 0.8, warp_point_count: None }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kde_bandwidth > 0.0) {
            return Err(Error::Invalid("kde_bandwidth must be positive".into()));
        }
        if !(self.warp_extension >= 0.0) {
            return Err(Error::Invalid("warp_extension must be non-negative".into()));
        }
        if !(self.rescale_min_span > 0.0 && self.rescale_min_span < 1.0) {
            return Err(Error::Invalid("rescale_min_span must lie in (0, 1)".into()));
        }
        if self.warp_point_count == Some(0) {
            return Err(Error::Invalid("warp_point_count must be positive".into()));
        }
        Ok(())
    }
}

/// Two independent augmentations of the same source curve.
#[derive(Clone, Debug)]
pub struct PositivePair<'a, T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub source: &'a Curve<T>,
}

/// T1: negates the curve with probability 1/2.
pub fn t1_reflect<T: Scalar, R: Rng + ?Sized>(y: &[T], rng: &mut R) -> Vec<T> {
    if rng.random_bool(0.5) {
        y.iter().map(|&v| -v).collect()
    } else {
        y.to_vec()
    }
}

/// Nadaraya-Watson resampling: value `i` is the Gaussian-weighted average of
/// `y_j` placed at `warp_points[j]`, evaluated at `x[i]`.
///
/// Weights are normalized in log space, so far-away evaluation points still
/// get a well-defined convex combination.
pub fn kde_resample<T: Scalar>(y: &[T], x: &[T], warp_points: &[T], bandwidth: T) -> Vec<T> {
    assert_eq!(y.len(), warp_points.len(), "one value per warp point");
    let inv = -T::one() / (T::lit(2.0) * bandwidth * bandwidth);
    let mut logw = vec![T::zero(); warp_points.len()];
    x.iter()
        .map(|&xi| {
            let mut top = T::neg_infinity();
            for (l, &w) in logw.iter_mut().zip(warp_points) {
                let d = w - xi;
                *l = d * d * inv;
                top = top.max(*l);
            }
            let (mut num, mut den) = (T::zero(), T::zero());
            for (&l, &v) in logw.iter().zip(y) {
                let e = (l - top).exp();
                num += e * v;
                den += e;
            }
            num / den
        })
        .collect()
}

/// T2: crop-and-warp via KDE on sorted uniform points of a random interval
/// `[a, b]` containing the grid.
pub fn t2_warp<T: Scalar, R: Rng + ?Sized>(y: &[T], grid: &Grid<T>, cfg: &AugmentConfig, rng: &mut R) -> Result<Vec<T>> {
    if y.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: vec![grid.len()], got: vec![y.len()] });
    }
    let (x1, xt) = (grid.first().as_f64(), grid.last().as_f64());
    let ext = cfg.warp_extension * (xt - x1);
    let a = if ext > 0.0 { rng.random_range(x1 - ext..x1) } else { x1 };
    let b = if ext > 0.0 { rng.random_range(xt..xt + ext) } else { xt };
    let count = cfg.warp_point_count.unwrap_or(grid.len());
    if count != y.len() {
        return Err(Error::Invalid(format!("warp_point_count {count} must equal the curve length {}", y.len())));
    }
    let mut points: Vec<f64> = (0..count).map(|_| rng.random_range(a..b)).collect();
    points.sort_by(f64::total_cmp);
    let points: Vec<T> = points.into_iter().map(T::lit).collect();
    Ok(kde_resample(y, grid.points(), &points, T::lit(cfg.kde_bandwidth)))
}

/// Affine map sending `min y` to `a` and `max y` to `b`.
pub fn rescale_to<T: Scalar>(y: &[T], a: T, b: T) -> Result<Vec<T>> {
    let (lo, hi) = min_max(y);
    let span = hi - lo;
    if !(span > T::zero()) {
        return Err(Error::DegenerateCurve);
    }
    Ok(y.iter().map(|&v| (b - a) * ((v - lo) / span) + a).collect())
}

/// T3: rescale onto a random `[a, b] ⊂ [0, 1]` with span drawn from
/// `U(min_span, 1)` and offset from `U(0, 1 - span)`.
pub fn t3_rescale<T: Scalar, R: Rng + ?Sized>(y: &[T], cfg: &AugmentConfig, rng: &mut R) -> Result<Vec<T>> {
    let span: f64 = rng.random_range(cfg.rescale_min_span..1.0);
    let a: f64 = if span < 1.0 { rng.random_range(0.0..1.0 - span) } else { 0.0 };
    rescale_to(y, T::lit(a), T::lit(a + span))
}

/// `T3(T2(T1(y)))`.
pub fn augment<T: Scalar, R: Rng + ?Sized>(y: &[T], grid: &Grid<T>, cfg: &AugmentConfig, rng: &mut R) -> Result<Vec<T>> {
    let reflected = t1_reflect(y, rng);
    let warped = t2_warp(&reflected, grid, cfg, rng)?;
    t3_rescale(&warped, cfg, rng)
}

/// Two independent draws of the augmentation pipeline.
pub fn make_pair<'a, T: Scalar, R: Rng + ?Sized>(
    y: &'a Curve<T>,
    grid: &Grid<T>,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<PositivePair<'a, T>> {
    let first = augment(&y.values, grid, cfg, rng)?;
    let second = augment(&y.values, grid, cfg, rng)?;
    Ok(PositivePair { first, second, source: y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn reflection_frequency_and_magnitudes() {
        let mut rng = seeded(3);
        let y = vec![0.1, 0.7, 0.3];
        let mut flipped = 0;
        for _ in 0..10_000 {
            let out = t1_reflect(&y, &mut rng);
            assert!(out.iter().zip(&y).all(|(a, b): (&f64, &f64)| a.abs() == b.abs()));
            if out[1] < 0.0 {
                flipped += 1;
            }
        }
        let f = flipped as f64 / 1e4;
        assert!((f - 0.5).abs() < 0.015, "{f}");
        assert_eq!(t1_reflect(&y, &mut seeded(1)), t1_reflect(&y, &mut seeded(1)));
    }

    #[test]
    fn warp_of_constant_is_constant() {
        let grid = Grid::default();
        let y = vec![0.37f64; 100];
        let out = t2_warp(&y, &grid, &AugmentConfig::default(), &mut seeded(2)).unwrap();
        assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn warp_at_grid_points_with_tiny_bandwidth_is_identity() {
        let grid: Grid<f64> = Grid::default();
        let y: Vec<f64> = (0..100).map(|i| (i as f64 * 0.2).sin()).collect();
        let out = kde_resample(&y, grid.points(), grid.points(), 1e-3);
        for (a, b) in out.iter().zip(&y) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn rescale_identity_and_span() {
        assert_eq!(rescale_to(&[0.0, 0.5, 1.0], 0.0, 1.0).unwrap(), vec![0.0, 0.5, 1.0]);
        let out = t3_rescale(&[0.2, -1.0, 3.0], &AugmentConfig::default(), &mut seeded(5)).unwrap();
        let (lo, hi) = min_max(&out);
        assert!(hi - lo > 0.8 && lo >= 0.0 && hi <= 1.0);
        assert!(matches!(rescale_to(&[1.0, 1.0], 0.0, 1.0), Err(Error::DegenerateCurve)));
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        assert!(AugmentConfig { kde_bandwidth: 0.0, ..Default::default() }.validate().is_err());
        assert!(AugmentConfig { rescale_min_span: 1.0, ..Default::default() }.validate().is_err());
    }
}
