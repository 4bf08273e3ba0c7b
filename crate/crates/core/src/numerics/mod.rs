//! Dense math, reverse-mode differentiation, optimisation and statistics.

pub mod batch;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod rng;
pub mod stats;
pub mod tape;
pub mod tensor;

pub use batch::{accumulate, plateaued, Accum, TrainConfig};
pub use gradcheck::{grad_check, grad_check_detailed, GradCheck};
pub use optim::{Adam, AdamState};
pub use params::{Bound, ParamSet};
pub use stats::spearman;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
