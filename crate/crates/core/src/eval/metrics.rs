//! Scores for the three tasks and their aggregation over repetitions.

use crate::error::{Error, Result};
use crate::heads::{argmax, PromptSource};

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { expected: vec![a.len()], got: vec![b.len()] });
    }
    if a.len() < 2 {
        return Err(Error::Invalid("pearson needs at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// [`pearson`] with constant inputs scored as 0, so cells keep their counts.
pub fn pearson_or_zero(a: &[f64], b: &[f64]) -> Result<f64> {
    match pearson(a, b) {
        Err(Error::ConstantInput) => Ok(0.0),
        other => other,
    }
}

/// Root-mean-square difference.
pub fn l2_metric(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch { expected: vec![a.len()], got: vec![b.len()] });
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Fraction of rows whose argmax (ties to the lower index) is the label.
pub fn choice_accuracy<P: AsRef<[f64]>>(probs: &[P], correct: &[usize]) -> Result<f64> {
    if probs.len() != correct.len() || probs.is_empty() {
        return Err(Error::ShapeMismatch { expected: vec![probs.len()], got: vec![correct.len()] });
    }
    let hits = probs.iter().zip(correct).filter(|(p, &c)| argmax(p.as_ref()) == c).count();
    Ok(hits as f64 / correct.len() as f64)
}

/// Mean `p1` over CG-sourced problems minus mean `p2` over SM-sourced ones.
pub fn delta_acc(probs: &[[f64; 2]], sources: &[PromptSource]) -> Result<f64> {
    if probs.len() != sources.len() {
        return Err(Error::ShapeMismatch { expected: vec![probs.len()], got: vec![sources.len()] });
    }
    let mean = |src: PromptSource, k: usize| -> Result<f64> {
        let v: Vec<f64> = probs.iter().zip(sources).filter(|(_, &s)| s == src).map(|(p, _)| p[k]).collect();
        if v.is_empty() {
            return Err(Error::MissingSource(src.tag()));
        }
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(mean(PromptSource::Cg, 0)? - mean(PromptSource::Sm, 1)?)
}

/// Mean and 95% half-width `1.96 s / sqrt(n)` of repeated measurements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, ci95: f64::NAN, n };
        }
        // Sorting first makes the sums independent of measurement order.
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / n as f64;
        let ci95 = if n < 2 {
            0.0
        } else {
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        };
        Self { mean, ci95, n }
    }

    /// Whether the two intervals overlap.
    pub fn overlaps(&self, other: &Summary) -> bool {
        (self.mean - other.mean).abs() <= self.ci95 + other.ci95
    }
}
