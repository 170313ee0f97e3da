//! Dense tensors with hand-written backpropagation, the contrastive encoder,
//! InfoNCE, Adam and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod encoder;
pub mod layers;
pub mod loss;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use encoder::{EncoderConfig, EncoderParams, Gradients, Mode, Trace};
pub use loss::info_nce;
pub use tensor::Tensor;
pub use train::{pair_batch, pair_similarity, train_encoder, CurveSource, FreshCurves, TrainConfig, TrainOutcome};
