//! Supervised hashing from triplet labels.
//!
//! Images (represented by precomputed feature vectors) are mapped by a small
//! trainable encoder to relaxed real-valued codes `u`, which are quantized to
//! binary codes `b = sgn(u)`. The encoder is trained by minimizing the negative
//! log-likelihood of triplet labels `(query, positive, negative)` plus a
//! quantization penalty `λ Σ ||b - u||²`. Retrieval ranks a database of packed
//! codes by Hamming distance and is scored with mean average precision.
//!
//! Module map:
//!
//! - [`codes`]: packed binary codes, sign quantization, Hamming distance, `BHC1` files
//! - [`loss`]: triplet likelihood, loss with quantization error, analytic gradient
//! - [`encoder`]: linear / one-hidden-layer encoders, `ENC1` checkpoints
//! - [`sampler`]: label stores, similarity ground truth, triplet sampling
//! - [`trainer`]: minibatch SGD
//! - [`index`]: exhaustive Hamming search
//! - [`eval`]: average precision, MAP, precision@k
//! - [`features`]: feature matrices and `FVC1` files
//! - [`synthetic`]: Gaussian-cluster benchmark generator

pub mod codes;
pub mod encoder;
mod error;
mod wire;
pub mod eval;
pub mod features;
pub mod index;
pub mod loss;
pub mod sampler;
pub mod synthetic;
pub mod trainer;

pub use codes::{BitCode, RealCode};
pub use encoder::{Architecture, EncoderGrads, EncoderParams};
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use index::{CodeDatabase, Neighbor};
pub use loss::{LossConfig, QuantizationSum, Triplet};
pub use sampler::{LabelMode, LabelStore, TripletSampler};
pub use trainer::{TrainConfig, TrainReport};
