//! Frozen representations consumed by the heads.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::EncoderParams;

const CHUNK: usize = 256;

/// A fixed map from length-`T` curves to feature vectors.
pub trait Embedder: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Length of the curves [`Embedder::embed`] accepts.
    fn input_len(&self) -> usize;
    /// One feature row per curve.
    fn embed(&self, curves: &[&[f64]]) -> Result<Matrix<f64>>;
}

/// The baseline that copies its input.
#[derive(Clone, Debug)]
pub struct RawEmbedder {
    pub len: usize,
}

impl Embedder for RawEmbedder {
    fn name(&self) -> &str {
        "raw"
    }

    fn dim(&self) -> usize {
        self.len
    }

    fn input_len(&self) -> usize {
        self.len
    }

    fn embed(&self, curves: &[&[f64]]) -> Result<Matrix<f64>> {
        if let Some(bad) = curves.iter().find(|c| c.len() != self.len) {
            return Err(Error::ShapeMismatch { expected: vec![self.len], got: vec![bad.len()] });
        }
        Matrix::from_rows(curves)
    }
}

/// Eval-mode encoder outputs (the projector is not used).
#[derive(Clone, Debug)]
pub struct EncoderEmbedder {
    pub name: String,
    pub params: EncoderParams<f32>,
}

impl Embedder for EncoderEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.params.config.rep_dim
    }

    fn input_len(&self) -> usize {
        self.params.config.input_len
    }

    fn embed(&self, curves: &[&[f64]]) -> Result<Matrix<f64>> {
        let rows: Vec<Vec<f32>> = curves.iter().map(|c| c.iter().map(|&v| v as f32).collect()).collect();
        let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
        let h = self.params.embed_rows(&refs, CHUNK)?;
        Matrix::from_vec(curves.len(), self.dim(), h.data().iter().map(|&v| v as f64).collect())
    }
}

/// Shared embedders, so callers can keep a handle to what a model reads.
impl<E: Embedder + Send + ?Sized> Embedder for std::sync::Arc<E> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn input_len(&self) -> usize {
        (**self).input_len()
    }

    fn embed(&self, curves: &[&[f64]]) -> Result<Matrix<f64>> {
        (**self).embed(curves)
    }
}
