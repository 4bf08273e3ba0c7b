//! Interaction loading, meta splits and K-shot episode sampling.

pub mod episode;
pub mod graph;
pub mod split;

pub use episode::{build_episode, kshot_mask_testset, Episode, EpisodeNode, KShotTestSet};
pub use graph::{load_interactions, parse_interactions, Edge, InputFormat, InteractionGraph, NodeId, Side};
pub use split::{chronological_split, split_meta, split_train_test, ChronoSplit, MetaSplit, TrainTestSplit};
