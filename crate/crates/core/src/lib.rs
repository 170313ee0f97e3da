//! Self-supervised function learning.
//!
//! Curves are drawn from a Gaussian-process kernel grammar, a 1-D convolutional
//! encoder is trained contrastively on topologically distorted pairs, and small
//! heads read the frozen representations for kernel classification,
//! multiple-choice and freeform extrapolation.
//!
//! The numerical core is generic over [`Scalar`] (`f32`/`f64`); aliases at the
//! crate root pick the precisions the pipeline uses.

pub mod archive;
pub mod augment;
pub mod curves;
pub mod embed;
pub mod error;
pub mod eval;
pub mod gp;
pub mod heads;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Precision of curves, GP algebra and heads.
pub type Real = f64;
/// Precision the encoder trains and runs in.
pub type NetReal = f32;

pub type Curve = curves::Curve<Real>;
pub type CurveDataset = curves::CurveDataset<Real>;
pub type Grid = gp::Grid<Real>;
pub type HyperparamRedraw = curves::HyperparamRedraw<Real>;
pub type KernelSpec = gp::KernelSpec<Real>;
pub type Matrix = linalg::Matrix<Real>;
pub type EncoderParams = nn::EncoderParams<NetReal>;
