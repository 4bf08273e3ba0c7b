//! Pre-training graph neural network encoders for cold-start users and items.
//!
//! The pipeline learns ground-truth embeddings for well-observed nodes,
//! simulates cold-start neighborhoods as K-shot episodes and trains an
//! encoder to reconstruct the ground truth from them. A self-attention
//! meta learner and a policy-gradient neighbor sampler refine the encoder,
//! which is then fine-tuned for BPR ranking.

pub mod dataio;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod evalrec;
pub mod ground_truth;
pub mod meta_agg;
pub mod meta_learner;
pub mod numerics;
pub mod orchestrator;
pub mod sampler;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
