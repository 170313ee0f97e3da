//! The 14-kernel generative mixture over curves, normalization, fixed
//! hyperparameter redraws and dataset persistence.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::kernel::fmt_real;
use crate::gp::{covariance, sample_hyperparams, CovMatrix, Grid, KernelFamily, KernelSpec};
use crate::rng::stream;
use crate::scalar::Scalar;

/// Consecutive degenerate draws tolerated before giving up.
pub const MAX_RESAMPLES: usize = 10;

/// Function values on the shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve<T> {
    pub values: Vec<T>,
    pub origin: Option<KernelFamily>,
    pub redraw_id: Option<usize>,
}

impl<T: Scalar> Curve<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values, origin: None, redraw_id: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Affinely maps the values onto `[0, 1]` (min to 0, max to 1).
    pub fn normalized(&self) -> Result<Self> {
        Ok(Self { values: normalize(&self.values)?, origin: self.origin, redraw_id: self.redraw_id })
    }

    pub fn cast<U: Scalar>(&self) -> Curve<U> {
        Curve {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            origin: self.origin,
            redraw_id: self.redraw_id,
        }
    }
}

/// `(min, max)` of a non-empty slice.
pub fn min_max<T: Scalar>(v: &[T]) -> (T, T) {
    v.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Min-max normalization onto `[0, 1]`.
pub fn normalize<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::DegenerateCurve);
    }
    let (lo, hi) = min_max(values);
    let span = hi - lo;
    if !(span > T::lit(1e-12)) {
        return Err(Error::DegenerateCurve);
    }
    Ok(values
        .iter()
        .map(|&v| {
            if v == hi {
                T::one()
            } else {
                (v - lo) / span
            }
        })
        .collect())
}

/// SM with probability 1/2, each grammar family with probability 1/26.
pub fn sample_family<R: Rng + ?Sized>(rng: &mut R) -> KernelFamily {
    let k = rng.random_range(0..26usize);
    if k < 13 {
        KernelFamily::COMPOSITIONAL[k]
    } else {
        KernelFamily::SpectralMixture
    }
}

fn draw_normalized<T: Scalar, R: Rng + ?Sized>(cov: &CovMatrix<T>, rng: &mut R) -> Result<Vec<T>> {
    for _ in 0..MAX_RESAMPLES {
        match normalize(&cov.sample(rng)) {
            Ok(v) => return Ok(v),
            Err(Error::DegenerateCurve) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateCurve)
}

/// One fixed hyperparameter assignment for every family.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperparamRedraw<T> {
    pub redraw_id: usize,
    specs: Vec<KernelSpec<T>>,
}

impl<T: Scalar> HyperparamRedraw<T> {
    pub fn new(redraw_id: usize, specs: Vec<KernelSpec<T>>) -> Result<Self> {
        let ok = specs.len() == KernelFamily::COUNT && specs.iter().zip(KernelFamily::ALL).all(|(s, f)| s.family() == f);
        if !ok {
            return Err(Error::Invalid("a redraw needs one spec per family, in family order".into()));
        }
        Ok(Self { redraw_id, specs })
    }

    /// Samples all 14 specs, in family order, from `rng`.
    pub fn sample<R: Rng + ?Sized>(redraw_id: usize, rng: &mut R) -> Self {
        let specs = KernelFamily::ALL.iter().map(|&f| sample_hyperparams(f, rng)).collect();
        Self { redraw_id, specs }
    }

    pub fn spec(&self, family: KernelFamily) -> &KernelSpec<T> {
        &self.specs[family.index()]
    }

    pub fn specs(&self) -> &[KernelSpec<T>] {
        &self.specs
    }
}

/// Manifest text: `redraw=<id>` followed by one spec record per line.
impl<T: Scalar> fmt::Display for HyperparamRedraw<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "redraw={}", self.redraw_id)?;
        for s in &self.specs {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

impl<T: Scalar> FromStr for HyperparamRedraw<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let head = lines.next().ok_or_else(|| Error::Parse("empty redraw manifest".into()))?;
        let id = head
            .strip_prefix("redraw=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad redraw header `{head}`")))?;
        let specs = lines.map(str::parse).collect::<Result<Vec<KernelSpec<T>>>>()?;
        Self::new(id, specs)
    }
}

/// `count` redraws; redraw `r` is sampled from stream `(master_seed, r)`.
pub fn make_redraws<T: Scalar>(count: usize, master_seed: u64) -> Result<Vec<HyperparamRedraw<T>>> {
    if count == 0 {
        return Err(Error::Invalid("redraw count must be at least 1".into()));
    }
    Ok((0..count).map(|r| HyperparamRedraw::sample(r, &mut stream(master_seed, &[0x5245_4452, r as u64]))).collect())
}

/// Curve generation from a redraw; samples the family then draws from that
/// family's fixed spec.
pub fn generate_curve<T: Scalar, R: Rng + ?Sized>(
    redraw: &HyperparamRedraw<T>,
    grid: &Grid<T>,
    rng: &mut R,
) -> Result<Curve<T>> {
    let family = sample_family(rng);
    let cov = covariance(redraw.spec(family), grid)?;
    Ok(Curve { values: draw_normalized(&cov, rng)?, origin: Some(family), redraw_id: Some(redraw.redraw_id) })
}

/// A redraw with its 14 covariance factors precomputed on a grid.
///
/// Produces the same curves as [`generate_curve`] for the same generator.
#[derive(Clone, Debug)]
pub struct RedrawSampler<T> {
    redraw: HyperparamRedraw<T>,
    grid: Grid<T>,
    covs: Vec<CovMatrix<T>>,
}

impl<T: Scalar> RedrawSampler<T> {
    pub fn new(redraw: HyperparamRedraw<T>, grid: Grid<T>) -> Result<Self> {
        let covs = redraw.specs().iter().map(|s| covariance(s, &grid)).collect::<Result<_>>()?;
        Ok(Self { redraw, grid, covs })
    }

    pub fn redraw(&self) -> &HyperparamRedraw<T> {
        &self.redraw
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Curve<T>> {
        let family = sample_family(rng);
        self.generate_family(family, rng)
    }

    pub fn generate_family<R: Rng + ?Sized>(&self, family: KernelFamily, rng: &mut R) -> Result<Curve<T>> {
        Ok(Curve {
            values: draw_normalized(&self.covs[family.index()], rng)?,
            origin: Some(family),
            redraw_id: Some(self.redraw.redraw_id),
        })
    }

    /// `per_class` curves of every family, family-major. Curve `i` of family
    /// `f` comes from stream `(seed, [f, i])`, so prefixes are stable when
    /// `per_class` grows.
    pub fn balanced(&self, per_class: usize, seed: u64) -> Result<Vec<Curve<T>>> {
        (0..KernelFamily::COUNT * per_class)
            .into_par_iter()
            .map(|k| {
                let (f, i) = (k / per_class, k % per_class);
                self.generate_family(KernelFamily::ALL[f], &mut stream(seed, &[f as u64, i as u64]))
            })
            .collect()
    }
}

/// Curve with freshly sampled hyperparameters: family, then spec, then values.
pub fn generate_fresh_curve<T: Scalar, R: Rng + ?Sized>(grid: &Grid<T>, rng: &mut R) -> Result<Curve<T>> {
    let family = sample_family(rng);
    let spec: KernelSpec<T> = sample_hyperparams(family, rng);
    let cov = covariance(&spec, grid)?;
    Ok(Curve { values: draw_normalized(&cov, rng)?, origin: Some(family), redraw_id: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

/// Curves generated under one redraw.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveDataset<T> {
    pub curves: Vec<Curve<T>>,
    pub grid: Grid<T>,
    pub redraw_id: usize,
    pub split: Split,
}

impl<T: Scalar> CurveDataset<T> {
    pub fn new(curves: Vec<Curve<T>>, grid: Grid<T>, redraw_id: usize, split: Split) -> Result<Self> {
        if let Some(c) = curves.iter().find(|c| c.len() != grid.len()) {
            return Err(Error::ShapeMismatch { expected: vec![grid.len()], got: vec![c.len()] });
        }
        Ok(Self { curves, grid, redraw_id, split })
    }

    /// Header `T=<int> n=<int> redraw=<int>`, then per curve a `label=<tag>`
    /// line and a line of comma-separated values at 17 significant digits.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "T={} n={} redraw={}", self.grid.len(), self.curves.len(), self.redraw_id)?;
        for c in &self.curves {
            writeln!(w, "label={}", c.origin.map_or("none", KernelFamily::tag))?;
            let line: Vec<String> = c.values.iter().map(|v| fmt_real(v.as_f64())).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads a dataset written by [`CurveDataset::write_to`]; the grid is the
    /// evenly spaced `[0, 10]` grid of the stored length.
    pub fn read_from<R: BufRead>(r: R, split: Split) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse("unexpected end of dataset".into()))?.map_err(Error::from)
        };
        let header = next()?;
        let field = |key: &str| -> Result<usize> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse(format!("dataset header lacks `{key}`: `{header}`")))
        };
        let (t, n, redraw_id) = (field("T")?, field("n")?, field("redraw")?);
        let mut curves = Vec::with_capacity(n);
        for _ in 0..n {
            let label = next()?;
            let tag = label.strip_prefix("label=").ok_or_else(|| Error::Parse(format!("expected label, got `{label}`")))?;
            let origin = if tag == "none" { None } else { Some(tag.parse()?) };
            let values = next()?
                .split(',')
                .map(|v| v.trim().parse::<f64>().map(T::lit).map_err(|_| Error::Parse(format!("bad value `{v}`"))))
                .collect::<Result<Vec<T>>>()?;
            if values.len() != t {
                return Err(Error::ShapeMismatch { expected: vec![t], got: vec![values.len()] });
            }
            curves.push(Curve { values, origin, redraw_id: Some(redraw_id) });
        }
        Self::new(curves, Grid::uniform(0.0, 10.0, t)?, redraw_id, split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn normalize_hand_example() {
        assert_eq!(normalize(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(matches!(normalize(&[3.0, 3.0, 3.0]), Err(Error::DegenerateCurve)));
    }

    #[test]
    fn family_frequencies() {
        let mut rng = seeded(1);
        let n = 100_000;
        let mut counts = [0usize; 14];
        for _ in 0..n {
            counts[sample_family(&mut rng).index()] += 1;
        }
        let sm = counts[13] as f64 / n as f64;
        let lin = counts[0] as f64 / n as f64;
        assert!((sm - 0.5).abs() < 0.005, "SM {sm}");
        assert!((lin - 1.0 / 26.0).abs() < 0.003, "LIN {lin}");
    }

    #[test]
    fn family_sequence_is_seeded() {
        let a: Vec<_> = (0..50).map({
            let mut r = seeded(4);
            move |_| sample_family(&mut r)
        })
        .collect();
        let b: Vec<_> = (0..50).map({
            let mut r = seeded(4);
            move |_| sample_family(&mut r)
        })
        .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn redraws_are_distinct_and_reproducible() {
        let a = make_redraws::<f64>(10, 42).unwrap();
        let b = make_redraws::<f64>(10, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|r| r.specs().len() == 14));
        let theta1: Vec<f64> = a.iter().map(|r| r.spec(KernelFamily::Lin).param("theta1").unwrap()).collect();
        for i in 0..10 {
            assert_eq!(a[i].redraw_id, i);
            for j in 0..i {
                assert_ne!(theta1[i], theta1[j]);
            }
        }
        assert!(make_redraws::<f64>(0, 1).is_err());
    }

    #[test]
    fn redraw_manifest_roundtrip() {
        let r = &make_redraws::<f64>(2, 7).unwrap()[1];
        let back: HyperparamRedraw<f64> = r.to_string().parse().unwrap();
        assert_eq!(&back, r);
    }

    #[test]
    fn cached_sampler_matches_direct_generation() {
        let grid = Grid::default();
        let redraw = make_redraws::<f64>(1, 3).unwrap().remove(0);
        let sampler = RedrawSampler::new(redraw.clone(), grid.clone()).unwrap();
        for s in 0..20 {
            let a = generate_curve(&redraw, &grid, &mut seeded(s)).unwrap();
            let b = sampler.generate(&mut seeded(s)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 100);
            let (lo, hi) = min_max(&a.values);
            assert_eq!((lo, hi), (0.0, 1.0));
        }
    }

    #[test]
    fn dataset_roundtrip_is_bit_identical() {
        let grid = Grid::default();
        let redraw = make_redraws::<f64>(1, 9).unwrap().remove(0);
        let sampler = RedrawSampler::new(redraw, grid.clone()).unwrap();
        let curves = sampler.balanced(2, 5).unwrap();
        let ds = CurveDataset::new(curves, grid, 0, Split::Train).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("T=100 n=28 redraw=0\nlabel=LIN\n"));
        let back = CurveDataset::<f64>::read_from(&buf[..], Split::Train).unwrap();
        assert_eq!(back, ds);
    }
}
