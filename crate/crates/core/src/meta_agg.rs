//! Meta-aggregated convolution: every step also sees the node's meta
//! embedding, `σ(W · [h̃ ; h_self ; AGG(neighbors)])`.

use crate::dataio::{Episode, InteractionGraph};
use crate::encoder::{activate, aggregate, encode, Activation, AggContext, AggregatorKind, GnnParams};
use crate::error::{Error, Result};
use crate::ground_truth::EmbeddingTable;
use crate::meta_learner::MetaLearner;
use crate::numerics::tape::{Tape, Var};

#[allow(clippy::too_many_arguments)]
pub fn meta_conv_step(
    tape: &mut Tape,
    act: Activation,
    kind: AggregatorKind,
    meta_embed: Var,
    self_embed: Var,
    neighbors: &[Var],
    w: Var,
    ctx: AggContext<'_>,
) -> Result<Var> {
    let agg = aggregate(tape, kind, neighbors, AggContext { self_embed: Some(self_embed), ..ctx })?;
    let x = tape.concat(&[meta_embed, self_embed, agg])?;
    let z = tape.matvec(w, x)?;
    activate(tape, act, z)
}

/// Encode with the meta-aggregated convolution. `params` must have been
/// built with `use_meta`.
pub fn encode_with_meta(
    episode: &Episode,
    graph: &InteractionGraph,
    init: &EmbeddingTable,
    params: &GnnParams,
    meta: &MetaLearner,
) -> Result<Vec<f64>> {
    if !params.cfg.use_meta {
        return Err(Error::Validation("encoder parameters are not sized for meta aggregation".into()));
    }
    encode(episode, graph, init, params, Some(meta))
}
