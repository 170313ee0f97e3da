//! Kernel families of the compositional grammar plus the spectral mixture,
//! their hyperparameters, priors and pointwise evaluation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower clamp applied to sampled periods (`theta5`).
pub const MIN_PERIOD: f64 = 0.01;

/// The 14 generative kernel families: 13 compositional grammar kernels and SM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelFamily {
    Lin,
    Rbf,
    Per,
    LinPlusPer,
    LinPlusRbf,
    RbfPlusPer,
    LinTimesPer,
    LinTimesRbf,
    RbfTimesPer,
    LinPlusRbfPlusPer,
    LinPlusPerTimesRbf,
    PerPlusLinTimesRbf,
    LinTimesRbfTimesPer,
    SpectralMixture,
}

impl KernelFamily {
    pub const COUNT: usize = 14;

    pub const ALL: [KernelFamily; 14] = [
        KernelFamily::Lin,
        KernelFamily::Rbf,
        KernelFamily::Per,
        KernelFamily::LinPlusPer,
        KernelFamily::LinPlusRbf,
        KernelFamily::RbfPlusPer,
        KernelFamily::LinTimesPer,
        KernelFamily::LinTimesRbf,
        KernelFamily::RbfTimesPer,
        KernelFamily::LinPlusRbfPlusPer,
        KernelFamily::LinPlusPerTimesRbf,
        KernelFamily::PerPlusLinTimesRbf,
        KernelFamily::LinTimesRbfTimesPer,
        KernelFamily::SpectralMixture,
    ];

    /// The 13 compositional grammar families, in tag order.
    pub const COMPOSITIONAL: [KernelFamily; 13] = [
        KernelFamily::Lin,
        KernelFamily::Rbf,
        KernelFamily::Per,
        KernelFamily::LinPlusPer,
        KernelFamily::LinPlusRbf,
        KernelFamily::RbfPlusPer,
        KernelFamily::LinTimesPer,
        KernelFamily::LinTimesRbf,
        KernelFamily::RbfTimesPer,
        KernelFamily::LinPlusRbfPlusPer,
        KernelFamily::LinPlusPerTimesRbf,
        KernelFamily::PerPlusLinTimesRbf,
        KernelFamily::LinTimesRbfTimesPer,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            KernelFamily::Lin => "LIN",
            KernelFamily::Rbf => "RBF",
            KernelFamily::Per => "PER",
            KernelFamily::LinPlusPer => "LIN+PER",
            KernelFamily::LinPlusRbf => "LIN+RBF",
            KernelFamily::RbfPlusPer => "RBF+PER",
            KernelFamily::LinTimesPer => "LIN*PER",
            KernelFamily::LinTimesRbf => "LIN*RBF",
            KernelFamily::RbfTimesPer => "RBF*PER",
            KernelFamily::LinPlusRbfPlusPer => "LIN+RBF+PER",
            KernelFamily::LinPlusPerTimesRbf => "LIN+PER*RBF",
            KernelFamily::PerPlusLinTimesRbf => "PER+LIN*RBF",
            KernelFamily::LinTimesRbfTimesPer => "LIN*RBF*PER",
            KernelFamily::SpectralMixture => "SM",
        }
    }

    /// Position in [`KernelFamily::ALL`]; doubles as the class label.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_compositional(self) -> bool {
        self != KernelFamily::SpectralMixture
    }

    pub fn uses_linear(self) -> bool {
        self.is_compositional() && self.tag().contains("LIN")
    }

    pub fn uses_rbf(self) -> bool {
        self.tag().contains("RBF")
    }

    pub fn uses_periodic(self) -> bool {
        self.tag().contains("PER")
    }

    /// Combines atom values according to the family's sum/product structure.
    /// Atoms the family does not reference are ignored.
    #[inline]
    pub fn combine<T: Scalar>(self, lin: T, rbf: T, per: T) -> T {
        match self {
            KernelFamily::Lin => lin,
            KernelFamily::Rbf => rbf,
            KernelFamily::Per => per,
            KernelFamily::LinPlusPer => lin + per,
            KernelFamily::LinPlusRbf => lin + rbf,
            KernelFamily::RbfPlusPer => rbf + per,
            KernelFamily::LinTimesPer => lin * per,
            KernelFamily::LinTimesRbf => lin * rbf,
            KernelFamily::RbfTimesPer => rbf * per,
            KernelFamily::LinPlusRbfPlusPer => lin + rbf + per,
            KernelFamily::LinPlusPerTimesRbf => lin + per * rbf,
            KernelFamily::PerPlusLinTimesRbf => per + lin * rbf,
            KernelFamily::LinTimesRbfTimesPer => lin * rbf * per,
            KernelFamily::SpectralMixture => panic!("spectral mixture has no grammar atoms"),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.tag() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown kernel family `{s}`")))
    }
}

/// `K(x, x') = (x - theta1)(x' - theta1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearAtom<T> {
    pub theta1: T,
}

/// `K = theta3 * exp(-(x - x')^2 / theta2^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbfAtom<T> {
    pub theta2: T,
    pub theta3: T,
}

/// `K = theta4 * exp(-sin^2(2 pi |x - x'| / theta5) / theta6^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicAtom<T> {
    pub theta4: T,
    pub theta5: T,
    pub theta6: T,
}

/// One spectral-mixture component. `sigma` is kept as drawn (possibly
/// negative) and enters the kernel through its absolute value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureComponent<T> {
    pub weight: T,
    pub mean: T,
    pub sigma: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelParams<T> {
    Grammar { linear: Option<LinearAtom<T>>, rbf: Option<RbfAtom<T>>, periodic: Option<PeriodicAtom<T>> },
    Mixture(Vec<MixtureComponent<T>>),
}

/// A kernel family with a concrete hyperparameter assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec<T> {
    family: KernelFamily,
    params: KernelParams<T>,
}

impl<T: Scalar> LinearAtom<T> {
    #[inline]
    pub fn eval(&self, xi: T, xj: T) -> T {
        (xi - self.theta1) * (xj - self.theta1)
    }
}

impl<T: Scalar> RbfAtom<T> {
    #[inline]
    pub fn eval(&self, d: T) -> T {
        self.theta3 * (-(d * d) / (self.theta2 * self.theta2)).exp()
    }
}

impl<T: Scalar> PeriodicAtom<T> {
    #[inline]
    pub fn eval(&self, d: T) -> T {
        let s = (T::lit(2.0 * PI) * d.abs() / self.theta5).sin();
        self.theta4 * (-(s * s) / (self.theta6 * self.theta6)).exp()
    }
}

impl<T: Scalar> MixtureComponent<T> {
    #[inline]
    pub fn eval(&self, d: T) -> T {
        let envelope = (-T::lit(2.0 * PI * PI) * d * d * self.sigma.abs()).exp();
        self.weight * envelope * (T::lit(2.0 * PI) * d * self.mean).cos()
    }
}

impl<T: Scalar> KernelSpec<T> {
    /// Builds a grammar spec; exactly the atoms the family references must be given.
    pub fn grammar(
        family: KernelFamily,
        linear: Option<LinearAtom<T>>,
        rbf: Option<RbfAtom<T>>,
        periodic: Option<PeriodicAtom<T>>,
    ) -> Result<Self> {
        if !family.is_compositional() {
            return Err(Error::Invalid("SM is not a grammar family".into()));
        }
        if family.uses_linear() != linear.is_some()
            || family.uses_rbf() != rbf.is_some()
            || family.uses_periodic() != periodic.is_some()
        {
            return Err(Error::Invalid(format!("hyperparameters do not match family {family}")));
        }
        let spec = Self { family, params: KernelParams::Grammar { linear, rbf, periodic } };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mixture(components: Vec<MixtureComponent<T>>) -> Result<Self> {
        let spec = Self { family: KernelFamily::SpectralMixture, params: KernelParams::Mixture(components) };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("{}: {what}", self.family)));
        match &self.params {
            KernelParams::Grammar { rbf, periodic, .. } => {
                if let Some(r) = rbf {
                    if !(r.theta2 > T::zero() && r.theta3 > T::zero()) {
                        return bad("theta2 and theta3 must be positive");
                    }
                }
                if let Some(p) = periodic {
                    if !(p.theta4 > T::zero() && p.theta6 > T::zero()) {
                        return bad("theta4 and theta6 must be positive");
                    }
                    if !(p.theta5 >= T::lit(MIN_PERIOD)) {
                        return bad("theta5 below clamp");
                    }
                }
            }
            KernelParams::Mixture(c) => {
                if !(2..=6).contains(&c.len()) {
                    return bad("mixture must have 2..=6 components");
                }
                if c.iter().any(|c| c.weight < T::zero() || c.weight > T::one()) {
                    return bad("mixture weights must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    /// Kernel value `K(xi, xj)`.
    pub fn value(&self, xi: T, xj: T) -> T {
        let d = xi - xj;
        match &self.params {
            KernelParams::Grammar { linear, rbf, periodic } => self.family.combine(
                linear.map_or(T::zero(), |a| a.eval(xi, xj)),
                rbf.map_or(T::zero(), |a| a.eval(d)),
                periodic.map_or(T::zero(), |a| a.eval(d)),
            ),
            KernelParams::Mixture(c) => c.iter().map(|c| c.eval(d)).sum(),
        }
    }

    /// Values of the stationary atoms at offset `d`: `(rbf, periodic)` for
    /// grammar kernels, `(mixture, 0)` for SM.
    pub(crate) fn stationary_parts(&self, d: T) -> (T, T) {
        match &self.params {
            KernelParams::Grammar { rbf, periodic, .. } => {
                (rbf.map_or(T::zero(), |a| a.eval(d)), periodic.map_or(T::zero(), |a| a.eval(d)))
            }
            KernelParams::Mixture(c) => (c.iter().map(|c| c.eval(d)).sum(), T::zero()),
        }
    }

    pub(crate) fn linear_part(&self, xi: T, xj: T) -> T {
        match &self.params {
            KernelParams::Grammar { linear: Some(a), .. } => a.eval(xi, xj),
            _ => T::zero(),
        }
    }

    /// Named hyperparameters in canonical order (`theta1`..`theta6`, or
    /// `w1, mu1, sigma1, ...` for SM).
    pub fn named_params(&self) -> Vec<(String, T)> {
        let mut out = Vec::new();
        match &self.params {
            KernelParams::Grammar { linear, rbf, periodic } => {
                if let Some(a) = linear {
                    out.push(("theta1".to_string(), a.theta1));
                }
                if let Some(a) = rbf {
                    out.push(("theta2".to_string(), a.theta2));
                    out.push(("theta3".to_string(), a.theta3));
                }
                if let Some(a) = periodic {
                    out.push(("theta4".to_string(), a.theta4));
                    out.push(("theta5".to_string(), a.theta5));
                    out.push(("theta6".to_string(), a.theta6));
                }
            }
            KernelParams::Mixture(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    out.push((format!("w{}", i + 1), c.weight));
                    out.push((format!("mu{}", i + 1), c.mean));
                    out.push((format!("sigma{}", i + 1), c.sigma));
                }
            }
        }
        out
    }

    pub fn param(&self, name: &str) -> Option<T> {
        self.named_params().into_iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn cast<U: Scalar>(&self) -> KernelSpec<U> {
        let c = |v: T| U::lit(v.as_f64());
        let params = match &self.params {
            KernelParams::Grammar { linear, rbf, periodic } => KernelParams::Grammar {
                linear: linear.map(|a| LinearAtom { theta1: c(a.theta1) }),
                rbf: rbf.map(|a| RbfAtom { theta2: c(a.theta2), theta3: c(a.theta3) }),
                periodic: periodic.map(|a| PeriodicAtom { theta4: c(a.theta4), theta5: c(a.theta5), theta6: c(a.theta6) }),
            },
            KernelParams::Mixture(cs) => KernelParams::Mixture(
                cs.iter().map(|m| MixtureComponent { weight: c(m.weight), mean: c(m.mean), sigma: c(m.sigma) }).collect(),
            ),
        };
        KernelSpec { family: self.family, params }
    }
}

/// Draws hyperparameters for `family` from the generative priors.
///
/// Draw order is fixed (`theta1`, `theta2..3`, `theta4..6`; for SM the
/// component count then `(w, mu, sigma)` per component) so a seeded
/// generator reproduces the spec exactly.
pub fn sample_hyperparams<T: Scalar, R: Rng + ?Sized>(family: KernelFamily, rng: &mut R) -> KernelSpec<T> {
    let normal = |rng: &mut R, sd: f64| Normal::new(0.0, sd).expect("valid sd").sample(rng);
    let params = if family.is_compositional() {
        let linear = family.uses_linear().then(|| LinearAtom { theta1: T::lit(normal(rng, 2.0)) });
        let rbf = family.uses_rbf().then(|| RbfAtom {
            theta2: T::lit(rng.random_range(1.0..5.0)),
            theta3: T::lit(rng.random_range(1.0..3.0)),
        });
        let periodic = family.uses_periodic().then(|| {
            let theta4 = rng.random_range(1.0..3.0);
            let theta5 = rng.random_range(0.0..0.5f64).max(MIN_PERIOD);
            let theta6 = rng.random_range(1.0..5.0);
            PeriodicAtom { theta4: T::lit(theta4), theta5: T::lit(theta5), theta6: T::lit(theta6) }
        });
        KernelParams::Grammar { linear, rbf, periodic }
    } else {
        let m = rng.random_range(2..=6usize);
        let components = (0..m)
            .map(|_| {
                let weight = rng.random_range(0.0..1.0);
                let mean = normal(rng, 0.01);
                let sigma = normal(rng, 0.02);
                MixtureComponent { weight: T::lit(weight), mean: T::lit(mean), sigma: T::lit(sigma) }
            })
            .collect();
        KernelParams::Mixture(components)
    };
    KernelSpec { family, params }
}

/// Formats a real with 17 significant digits.
pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// `family=<tag>; theta={name: value, ...}`; SM records also carry `m`.
impl<T: Scalar> fmt::Display for KernelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "family={}; theta={{", self.family)?;
        let mut first = true;
        if let KernelParams::Mixture(cs) = &self.params {
            write!(f, "m: {}", cs.len())?;
            first = false;
        }
        for (name, v) in self.named_params() {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{name}: {}", fmt_real(v.as_f64()))?;
        }
        f.write_str("}")
    }
}

impl<T: Scalar> FromStr for KernelSpec<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let perr = |msg: &str| Error::Parse(format!("{msg} in kernel spec `{s}`"));
        let (fam, rest) = s.split_once(';').ok_or_else(|| perr("missing `;`"))?;
        let family: KernelFamily =
            fam.trim().strip_prefix("family=").ok_or_else(|| perr("missing `family=`"))?.parse()?;
        let body = rest
            .trim()
            .strip_prefix("theta={")
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| perr("malformed theta block"))?;
        let mut values = Vec::new();
        for item in body.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (k, v) = item.split_once(':').ok_or_else(|| perr("malformed entry"))?;
            let v: f64 = v.trim().parse().map_err(|_| perr("bad number"))?;
            values.push((k.trim().to_string(), v));
        }
        let get = |name: &str| {
            values.iter().find(|(k, _)| k == name).map(|(_, v)| T::lit(*v)).ok_or_else(|| perr(&format!("missing {name}")))
        };
        if family.is_compositional() {
            let linear = if family.uses_linear() { Some(LinearAtom { theta1: get("theta1")? }) } else { None };
            let rbf = if family.uses_rbf() { Some(RbfAtom { theta2: get("theta2")?, theta3: get("theta3")? }) } else { None };
            let periodic = if family.uses_periodic() {
                Some(PeriodicAtom { theta4: get("theta4")?, theta5: get("theta5")?, theta6: get("theta6")? })
            } else {
                None
            };
            let expected = usize::from(linear.is_some()) + 2 * usize::from(rbf.is_some()) + 3 * usize::from(periodic.is_some());
            if values.len() != expected {
                return Err(perr("unexpected hyperparameters"));
            }
            KernelSpec::grammar(family, linear, rbf, periodic)
        } else {
            let m = get("m")?.as_f64();
            if m.fract() != 0.0 || m < 0.0 {
                return Err(perr("m must be an integer"));
            }
            let m = m as usize;
            let components = (1..=m)
                .map(|i| {
                    Ok(MixtureComponent {
                        weight: get(&format!("w{i}"))?,
                        mean: get(&format!("mu{i}"))?,
                        sigma: get(&format!("sigma{i}"))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != 1 + 3 * m {
                return Err(perr("unexpected hyperparameters"));
            }
            KernelSpec::mixture(components)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn thirteen_grammar_families_plus_sm() {
        assert_eq!(KernelFamily::ALL.len(), 14);
        assert_eq!(KernelFamily::ALL.iter().filter(|f| f.is_compositional()).count(), 13);
        assert_eq!(KernelFamily::COMPOSITIONAL.to_vec(), KernelFamily::ALL[..13].to_vec());
        for (i, f) in KernelFamily::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(f.tag().parse::<KernelFamily>().unwrap(), *f);
        }
    }

    #[test]
    fn lin_spec_only_has_theta1() {
        let spec: KernelSpec<f64> = sample_hyperparams(KernelFamily::Lin, &mut seeded(3));
        let names: Vec<_> = spec.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["theta1"]);
    }

    #[test]
    fn theta1_follows_normal_prior_with_sd_two() {
        let mut rng = seeded(11);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| sample_hyperparams::<f64, _>(KernelFamily::Lin, &mut rng).param("theta1").unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 2.0).abs() < 0.05, "sd {}", var.sqrt());
    }

    #[test]
    fn same_seed_same_spec() {
        for f in KernelFamily::ALL {
            let a: KernelSpec<f64> = sample_hyperparams(f, &mut seeded(5));
            let b: KernelSpec<f64> = sample_hyperparams(f, &mut seeded(5));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn theta2_monte_carlo_mean() {
        // Oracle: E[U(1, 5)] = 3.
        let mut rng = seeded(2024);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_hyperparams::<f64, _>(KernelFamily::Rbf, &mut rng).param("theta2").unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 3.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn sampled_specs_respect_prior_supports() {
        let mut rng = seeded(9);
        for _ in 0..2000 {
            for f in KernelFamily::ALL {
                let s: KernelSpec<f64> = sample_hyperparams(f, &mut rng);
                s.validate().unwrap();
                match s.params() {
                    KernelParams::Grammar { rbf, periodic, .. } => {
                        if let Some(r) = rbf {
                            assert!((1.0..5.0).contains(&r.theta2) && (1.0..3.0).contains(&r.theta3));
                        }
                        if let Some(p) = periodic {
                            assert!((1.0..3.0).contains(&p.theta4));
                            assert!((MIN_PERIOD..0.5).contains(&p.theta5));
                            assert!((1.0..5.0).contains(&p.theta6));
                        }
                    }
                    KernelParams::Mixture(c) => {
                        assert!((2..=6).contains(&c.len()));
                        assert!(c.iter().all(|c| (0.0..1.0).contains(&c.weight)));
                    }
                }
            }
        }
    }

    #[test]
    fn linear_kernel_hand_value() {
        let s = KernelSpec::grammar(KernelFamily::Lin, Some(LinearAtom { theta1: 0.0 }), None, None).unwrap();
        assert_eq!(s.value(1.0, 2.0), 2.0);
    }

    #[test]
    fn rbf_diagonal_is_variance() {
        let mut rng = seeded(1);
        for _ in 0..50 {
            let s: KernelSpec<f64> = sample_hyperparams(KernelFamily::Rbf, &mut rng);
            let x = rng.random_range(-5.0..15.0);
            assert_eq!(s.value(x, x), s.param("theta3").unwrap());
        }
    }

    #[test]
    fn spectral_mixture_uses_abs_sigma() {
        let c = |sigma| MixtureComponent { weight: 0.7, mean: 0.02, sigma };
        let pos = KernelSpec::mixture(vec![c(0.03), c(0.03)]).unwrap();
        let neg = KernelSpec::mixture(vec![c(-0.03), c(0.03)]).unwrap();
        assert_eq!(pos.value(0.3, 2.9), neg.value(0.3, 2.9));
        // Hand evaluation of one component pair.
        let d: f64 = 0.3 - 2.9;
        let want = 2.0 * 0.7 * (-2.0 * PI * PI * d * d * 0.03).exp() * (2.0 * PI * d * 0.02).cos();
        assert!((pos.value(0.3, 2.9) - want).abs() < 1e-15);
    }

    fn atoms(s: &KernelSpec<f64>, xi: f64, xj: f64) -> (f64, f64, f64) {
        let (l, r, p) = match s.params() {
            KernelParams::Grammar { linear, rbf, periodic } => (*linear, *rbf, *periodic),
            _ => unreachable!(),
        };
        let lin = l.map_or(0.0, |a| (xi - a.theta1) * (xj - a.theta1));
        let rbf = r.map_or(0.0, |a| a.theta3 * (-(xi - xj).powi(2) / a.theta2.powi(2)).exp());
        let per = p.map_or(0.0, |a| {
            a.theta4 * (-(2.0 * PI * (xi - xj).abs() / a.theta5).sin().powi(2) / a.theta6.powi(2)).exp()
        });
        (lin, rbf, per)
    }

    proptest! {
        #[test]
        fn composites_equal_arithmetic_of_atoms(seed in any::<u64>(), fi in 0usize..13, xi in 0.0f64..10.0, xj in 0.0f64..10.0) {
            let family = KernelFamily::COMPOSITIONAL[fi];
            let s: KernelSpec<f64> = sample_hyperparams(family, &mut seeded(seed));
            let (l, r, p) = atoms(&s, xi, xj);
            let want = match family {
                KernelFamily::Lin => l,
                KernelFamily::Rbf => r,
                KernelFamily::Per => p,
                KernelFamily::LinPlusPer => l + p,
                KernelFamily::LinPlusRbf => l + r,
                KernelFamily::RbfPlusPer => r + p,
                KernelFamily::LinTimesPer => l * p,
                KernelFamily::LinTimesRbf => l * r,
                KernelFamily::RbfTimesPer => r * p,
                KernelFamily::LinPlusRbfPlusPer => l + r + p,
                KernelFamily::LinPlusPerTimesRbf => l + p * r,
                KernelFamily::PerPlusLinTimesRbf => p + l * r,
                KernelFamily::LinTimesRbfTimesPer => l * r * p,
                KernelFamily::SpectralMixture => unreachable!(),
            };
            prop_assert!((s.value(xi, xj) - want).abs() <= 1e-12 * want.abs().max(1.0));
        }

        #[test]
        fn display_parse_roundtrip(seed in any::<u64>(), fi in 0usize..14) {
            let s: KernelSpec<f64> = sample_hyperparams(KernelFamily::ALL[fi], &mut seeded(seed));
            let text = s.to_string();
            let back: KernelSpec<f64> = text.parse().unwrap();
            prop_assert_eq!(back, s);
        }
    }

    #[test]
    fn display_format() {
        let s = KernelSpec::grammar(KernelFamily::Lin, Some(LinearAtom { theta1: 0.5 }), None, None).unwrap();
        assert_eq!(s.to_string(), "family=LIN; theta={theta1: 5.0000000000000000e-1}");
        assert!("family=LIN; theta={theta2: 1.0}".parse::<KernelSpec<f64>>().is_err());
        assert!("family=FOO; theta={}".parse::<KernelSpec<f64>>().is_err());
    }
}
