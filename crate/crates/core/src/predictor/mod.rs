//! Per-model quality prediction from a query embedding.

pub mod checkpoint;
pub mod encoder;
pub mod head;
pub mod ops;
pub mod train;

pub use checkpoint::{Checkpoint, EncoderKind};
pub use encoder::{hashed_ngram, Embedding, EmbeddingStore, Encoder};
pub use head::{Gradients, HeadDims, ParamView, PredictorHead};
pub use ops::{gelu, glu, huber_loss, sigmoid, GluParams};
pub use train::{evaluate, train, AdamW, TrainConfig, TrainReport};

use crate::error::Result;

/// Default widths: embedding 256, first linear 256, GLU 128.
pub const DEFAULT_D: usize = 256;
pub const DEFAULT_H: usize = 256;
pub const DEFAULT_G: usize = 128;

/// Quality scores for every registry model, in registry order.
pub fn predict(head: &PredictorHead, embedding: &Embedding) -> Result<Vec<f64>> {
    head.predict(&embedding.vector)
}
