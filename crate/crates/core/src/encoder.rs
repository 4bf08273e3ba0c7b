//! Multi-step graph convolution over an episode, and the reconstruction
//! objective of the basic pre-training model.
//!
//! Convolution runs bottom-up over the sampled tree: at step `s` every node
//! of order `1..=L-s` combines its own level-`s-1` embedding with the
//! aggregate of its children's level-`s-1` embeddings. After `L-1` steps the
//! first-order neighbors are aggregated once more and projected, without a
//! self term, to give the target embedding.

use std::collections::HashMap;

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{build_episode, Episode, InteractionGraph, NodeId};
use crate::error::{Error, Result};
use crate::ground_truth::EmbeddingTable;
use crate::meta_learner::MetaLearner;
use crate::numerics::batch::{accumulate, plateaued, TrainConfig};
use crate::numerics::optim::{Adam, AdamState};
use crate::numerics::params::{Bound, ParamSet};
use crate::numerics::rng;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

/// Neighbor cap applied to the degree normaliser of the LightGCN aggregator.
pub const NEIGHBOR_CAP: usize = 10;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    Mean,
    Attention,
    LightGcn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub aggregator: AggregatorKind,
    pub activation: Activation,
    /// Concatenate a meta embedding into every convolution step.
    pub use_meta: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            layers: 3,
            aggregator: AggregatorKind::Mean,
            activation: Activation::Sigmoid,
            use_meta: false,
        }
    }
}

/// Θ_f: one weight per convolution step plus the final projection.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams {
    pub cfg: EncoderConfig,
    pub params: ParamSet,
}

pub fn step_name(step: usize) -> String {
    format!("step{step}.w")
}

fn step_att_name(step: usize) -> String {
    format!("step{step}.att")
}

pub const FINAL_W: &str = "final.w";
const FINAL_ATT: &str = "final.att";

impl GnnParams {
    pub fn new(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        if cfg.layers == 0 || cfg.dim == 0 {
            return Err(Error::Validation(format!(
                "encoder needs layers >= 1 and dim >= 1, got {} / {}",
                cfg.layers, cfg.dim
            )));
        }
        let d = cfg.dim;
        let arity = if cfg.use_meta { 3 } else { 2 };
        let mut params = ParamSet::new();
        for s in 1..cfg.layers {
            let mut r = rng::stream(seed, &[0xf, s as u64, arity as u64]);
            params.insert(step_name(s), Tensor::xavier(d, arity * d, &mut r));
            if cfg.aggregator == AggregatorKind::Attention {
                params.insert(step_att_name(s), attention_vector(2 * d, &mut r));
            }
        }
        let mut r = rng::stream(seed, &[0xf, 0]);
        params.insert(FINAL_W, Tensor::xavier(d, d, &mut r));
        if cfg.aggregator == AggregatorKind::Attention {
            params.insert(FINAL_ATT, attention_vector(d, &mut r));
        }
        Ok(Self { cfg, params })
    }

    pub fn from_params(cfg: EncoderConfig, params: ParamSet) -> Result<Self> {
        let fresh = Self::new(cfg, 0)?;
        for (name, t) in fresh.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::Shape(format!(
                        "encoder parameter `{name}` has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::Format(format!("encoder parameter `{name}` missing"))),
            }
        }
        Ok(Self { cfg, params })
    }
}

fn attention_vector(n: usize, r: &mut rng::Rng) -> Tensor {
    let t = Tensor::xavier(1, n, r);
    Tensor::vector(t.into_data())
}

/// Inputs that only some aggregators need.
#[derive(Clone, Copy, Debug, Default)]
pub struct AggContext<'a> {
    /// Embedding of the receiving node, scored alongside neighbors by the
    /// attention aggregator.
    pub self_embed: Option<Var>,
    /// Learned scoring vector of the attention aggregator.
    pub score: Option<Var>,
    /// Graph degree of each neighbor, for the LightGCN normaliser.
    pub neighbor_degrees: Option<&'a [usize]>,
}

/// Combine neighbor embeddings into one vector.
///
/// * mean: elementwise average.
/// * attention: softmax over `LeakyReLU(aᵀ[h_self; h_j])` (or `aᵀh_j`
///   without a receiving node), then a weighted sum.
/// * lightgcn: `Σ_j h_j / √(|S(v)| · min(deg(j), 10))` where `S(v)` is the
///   sampled neighbor set.
pub fn aggregate(tape: &mut Tape, kind: AggregatorKind, neighbors: &[Var], ctx: AggContext<'_>) -> Result<Var> {
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighborhood("aggregate over no neighbors".into()));
    }
    match kind {
        AggregatorKind::Mean => tape.mean(neighbors),
        AggregatorKind::Attention => {
            let a = ctx
                .score
                .ok_or_else(|| Error::Validation("attention aggregator needs a scoring vector".into()))?;
            let mut scores = Vec::with_capacity(neighbors.len());
            for &n in neighbors {
                let input = match ctx.self_embed {
                    Some(s) => tape.concat(&[s, n])?,
                    None => n,
                };
                let raw = tape.dot(a, input)?;
                scores.push(tape.leaky_relu(raw, LEAKY_SLOPE)?);
            }
            let s = tape.concat(&scores)?;
            let w = tape.softmax(s)?;
            tape.weighted_sum(w, neighbors)
        }
        AggregatorKind::LightGcn => {
            let n = neighbors.len() as f64;
            let degs = ctx.neighbor_degrees;
            let coef: Vec<f64> = (0..neighbors.len())
                .map(|j| {
                    let dj = degs.map_or(neighbors.len(), |d| d[j]).clamp(1, NEIGHBOR_CAP) as f64;
                    1.0 / (n * dj).sqrt()
                })
                .collect();
            let w = tape.constant_vec(&coef);
            tape.weighted_sum(w, neighbors)
        }
    }
}

pub fn activate(tape: &mut Tape, act: Activation, x: Var) -> Result<Var> {
    match act {
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
    }
}

/// `σ(W · [h_self ; AGG(neighbors)])`.
pub fn conv_step(
    tape: &mut Tape,
    act: Activation,
    kind: AggregatorKind,
    self_embed: Var,
    neighbors: &[Var],
    w: Var,
    ctx: AggContext<'_>,
) -> Result<Var> {
    let agg = aggregate(tape, kind, neighbors, AggContext { self_embed: Some(self_embed), ..ctx })?;
    let x = tape.concat(&[self_embed, agg])?;
    let z = tape.matvec(w, x)?;
    activate(tape, act, z)
}

/// `σ(W^L · AGG(first-hop embeddings))`, no self term.
pub fn final_step(
    tape: &mut Tape,
    act: Activation,
    kind: AggregatorKind,
    first_hop: &[Var],
    w: Var,
    ctx: AggContext<'_>,
) -> Result<Var> {
    let agg = aggregate(tape, kind, first_hop, AggContext { self_embed: None, ..ctx })?;
    let z = tape.matvec(w, agg)?;
    activate(tape, act, z)
}

/// `1 − cos(h_pred, h_true)`.
pub fn reconstruction_loss(tape: &mut Tape, pred: Var, truth: Var) -> Result<Var> {
    let c = tape.cosine(pred, truth)?;
    tape.affine(c, -1.0, 1.0)
}

/// Initial-embedding leaves, recorded once per node id.
pub struct NodeInputs<'a> {
    table: &'a EmbeddingTable,
    trainable: bool,
    vars: HashMap<NodeId, Var>,
}

impl<'a> NodeInputs<'a> {
    pub fn new(table: &'a EmbeddingTable, trainable: bool) -> Self {
        Self {
            table,
            trainable,
            vars: HashMap::new(),
        }
    }

    pub fn get(&mut self, tape: &mut Tape, v: NodeId) -> Result<Var> {
        if let Some(&x) = self.vars.get(&v) {
            return Ok(x);
        }
        let row = self.table.try_row(v)?;
        let x = tape.leaf(&Tensor::vector(row.to_vec()), self.trainable);
        self.vars.insert(v, x);
        Ok(x)
    }

    pub fn vars(&self) -> &HashMap<NodeId, Var> {
        &self.vars
    }

    pub fn table(&self) -> &EmbeddingTable {
        self.table
    }
}

/// Parameters of the encoder as recorded on a tape, with the optional
/// meta learner used by the meta-aggregated variant.
pub struct BoundEncoder<'p> {
    pub params: &'p GnnParams,
    pub bound: Bound,
    pub meta: Option<(&'p MetaLearner, Bound)>,
}

impl<'p> BoundEncoder<'p> {
    pub fn new(tape: &mut Tape, params: &'p GnnParams, train_f: bool, meta: Option<(&'p MetaLearner, bool)>) -> Self {
        let bound = params.params.bind(tape, train_f);
        let meta = meta.map(|(m, train_g)| (m, m.params.bind(tape, train_g)));
        Self { params, bound, meta }
    }
}

/// Evaluate the encoder on an episode and return the predicted target
/// embedding `h^L`.
///
/// A node with no sampled children (a pruned branch, or a hop beyond the
/// episode's depth) aggregates over itself. With the meta variant each
/// interior node's meta embedding is computed from its own sampled
/// children; childless nodes get a zero meta embedding.
pub fn encode_on_tape(
    tape: &mut Tape,
    enc: &BoundEncoder<'_>,
    episode: &Episode,
    graph: &InteractionGraph,
    inputs: &mut NodeInputs<'_>,
) -> Result<Var> {
    let cfg = &enc.params.cfg;
    if cfg.use_meta && enc.meta.is_none() {
        return Err(Error::Staging("meta-aggregated encoder needs a meta learner".into()));
    }
    if episode.hops.is_empty() || episode.hops[0].is_empty() {
        return Err(Error::EmptyNeighborhood(format!("episode of {} has no first-order neighbors", episode.target)));
    }
    let layers = cfg.layers;
    let used = episode.depth().min(layers);
    let children = episode.children();
    let degrees = |ids: &[NodeId]| -> Vec<usize> { ids.iter().map(|&v| graph.degree(v)).collect() };

    let mut cur: Vec<Vec<Var>> = Vec::with_capacity(used);
    for hop in &episode.hops[..used] {
        let mut level = Vec::with_capacity(hop.len());
        for n in hop {
            level.push(inputs.get(tape, n.id)?);
        }
        cur.push(level);
    }

    // meta embeddings of interior nodes (orders 1..L-1), from children's
    // initial embeddings
    let mut meta_embeds: Vec<Vec<Var>> = Vec::new();
    if let (true, Some((learner, mbound))) = (cfg.use_meta, enc.meta.as_ref()) {
        let zero = tape.constant(&Tensor::zeros(&[cfg.dim]));
        for h in 0..used.min(layers.saturating_sub(1)) {
            let mut level = Vec::with_capacity(cur[h].len());
            for i in 0..cur[h].len() {
                let kids: Vec<Var> = if h + 1 < used {
                    children[h][i].iter().map(|&j| cur[h + 1][j]).collect()
                } else {
                    Vec::new()
                };
                level.push(if kids.is_empty() {
                    zero
                } else {
                    learner.embed_on_tape(tape, mbound, &kids)?
                });
            }
            meta_embeds.push(level);
        }
    }

    for s in 1..layers {
        let w = enc.bound.var(&step_name(s));
        let score = enc.bound.get(&step_att_name(s));
        let max_order = layers - s;
        let mut updates: Vec<(usize, usize, Var)> = Vec::new();
        for h in 0..max_order.min(used) {
            for i in 0..cur[h].len() {
                let kid_idx: &[usize] = if h + 1 < used { &children[h][i] } else { &[] };
                let (nbrs, nbr_ids): (Vec<Var>, Vec<NodeId>) = if kid_idx.is_empty() {
                    (vec![cur[h][i]], vec![episode.hops[h][i].id])
                } else {
                    kid_idx
                        .iter()
                        .map(|&j| (cur[h + 1][j], episode.hops[h + 1][j].id))
                        .unzip()
                };
                let degs = degrees(&nbr_ids);
                let ctx = AggContext {
                    self_embed: None,
                    score,
                    neighbor_degrees: Some(&degs),
                };
                let out = if cfg.use_meta {
                    crate::meta_agg::meta_conv_step(
                        tape,
                        cfg.activation,
                        cfg.aggregator,
                        meta_embeds[h][i],
                        cur[h][i],
                        &nbrs,
                        w,
                        ctx,
                    )?
                } else {
                    conv_step(tape, cfg.activation, cfg.aggregator, cur[h][i], &nbrs, w, ctx)?
                };
                updates.push((h, i, out));
            }
        }
        for (h, i, v) in updates {
            cur[h][i] = v;
        }
    }

    let first_ids = episode.first_hop();
    let degs = degrees(&first_ids);
    let ctx = AggContext {
        self_embed: None,
        score: enc.bound.get(FINAL_ATT),
        neighbor_degrees: Some(&degs),
    };
    final_step(tape, cfg.activation, cfg.aggregator, &cur[0], enc.bound.var(FINAL_W), ctx)
}

/// Forward-only encoding with basic parameters.
pub fn encode_target(
    episode: &Episode,
    graph: &InteractionGraph,
    init: &EmbeddingTable,
    params: &GnnParams,
) -> Result<Vec<f64>> {
    encode(episode, graph, init, params, None)
}

/// Forward-only encoding, dispatching on whether a meta learner is given.
pub fn encode(
    episode: &Episode,
    graph: &InteractionGraph,
    init: &EmbeddingTable,
    params: &GnnParams,
    meta: Option<&MetaLearner>,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let enc = BoundEncoder::new(&mut tape, params, false, meta.map(|m| (m, false)));
    let mut inputs = NodeInputs::new(init, false);
    let h = encode_on_tape(&mut tape, &enc, episode, graph, &mut inputs)?;
    Ok(tape.value(h).data().to_vec())
}

/// Episode graph, embedding tables and targets for reconstruction training.
#[derive(Clone, Copy, Debug)]
pub struct PretrainData<'a> {
    /// Graph the episodes are sampled from.
    pub graph: &'a InteractionGraph,
    /// Initial embeddings `h^0` fed to the encoder.
    pub init: &'a EmbeddingTable,
    /// Ground-truth embeddings `h` to reconstruct.
    pub truth: &'a EmbeddingTable,
    pub targets: &'a [NodeId],
    pub k: usize,
}

/// Gradients of one episode's reconstruction loss.
#[derive(Clone, Debug)]
pub struct EpisodeGrads {
    pub loss: f64,
    pub f: ParamSet,
    /// Present when the meta learner was bound as trainable.
    pub g: Option<ParamSet>,
}

pub fn episode_gradients(
    params: &GnnParams,
    meta: Option<(&MetaLearner, bool)>,
    episode: &Episode,
    data: &PretrainData<'_>,
) -> Result<EpisodeGrads> {
    let mut tape = Tape::new();
    let enc = BoundEncoder::new(&mut tape, params, true, meta);
    let mut inputs = NodeInputs::new(data.init, false);
    let h = encode_on_tape(&mut tape, &enc, episode, data.graph, &mut inputs)?;
    let truth = tape.constant_vec(data.truth.try_row(episode.target)?);
    let loss = reconstruction_loss(&mut tape, h, truth)?;
    let grads = tape.backward(loss)?;
    let g = match (&enc.meta, meta) {
        (Some((_, b)), Some((_, true))) => Some(b.gradients(&grads)),
        _ => None,
    };
    Ok(EpisodeGrads {
        loss: tape.value(loss).item(),
        f: enc.bound.gradients(&grads),
        g,
    })
}

const TRAIN_TAG: u64 = 0xf00d;
const EVAL_TAG: u64 = 0xe7a1;

/// One epoch of reconstruction training of Θ_f with Θ_g (if any) frozen.
/// Episodes are re-sampled every epoch.
pub fn train_epoch(
    params: &mut GnnParams,
    meta: Option<&MetaLearner>,
    adam: &Adam,
    state: &mut AdamState,
    data: &PretrainData<'_>,
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<f64> {
    if data.targets.is_empty() {
        return Err(Error::EmptyDataset("encoder has no training targets".into()));
    }
    let ep_seed = rng::derive_seed(cfg.seed, &[TRAIN_TAG, epoch]);
    let mut order = data.targets.to_vec();
    order.shuffle(&mut rng::stream(ep_seed, &[u64::MAX]));
    let depth = params.cfg.layers;
    let mut total = 0.0;
    for batch in order.chunks(cfg.batch_size.max(1)) {
        let snapshot = &*params;
        let acc = accumulate(batch, cfg.parallel, |&t| {
            let ep = build_episode(data.graph, t, data.k, depth, ep_seed)?;
            let eg = episode_gradients(snapshot, meta.map(|m| (m, false)), &ep, data)?;
            Ok((eg.loss, vec![eg.f]))
        })?;
        total += acc.loss;
        adam.step(&mut params.params, &acc.mean_grads()[0], state)?;
    }
    let mean = total / order.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite(format!("encoder loss at epoch {epoch}")));
    }
    Ok(mean)
}

/// Mean reconstruction loss over the targets on one fixed draw of episodes.
pub fn evaluate(params: &GnnParams, meta: Option<&MetaLearner>, data: &PretrainData<'_>, seed: u64) -> Result<f64> {
    let ep_seed = rng::derive_seed(seed, &[EVAL_TAG]);
    let acc = accumulate(data.targets, false, |&t| {
        let ep = build_episode(data.graph, t, data.k, params.cfg.layers, ep_seed)?;
        let h = encode(&ep, data.graph, data.init, params, meta)?;
        let c = crate::numerics::tensor::cosine(&h, data.truth.try_row(t)?)
            .ok_or_else(|| Error::ZeroNorm(format!("encoding of {t}")))?;
        Ok((1.0 - c, Vec::new()))
    })?;
    Ok(acc.mean_loss())
}

/// Train Θ_f until the epoch budget or a loss plateau; per-epoch losses.
pub fn train_encoder(
    params: &mut GnnParams,
    meta: Option<&MetaLearner>,
    data: &PretrainData<'_>,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let adam = Adam::new(cfg.lr);
    let mut state = adam.init(&params.params);
    let mut losses = Vec::new();
    for epoch in 0..cfg.epochs {
        let l = train_epoch(params, meta, &adam, &mut state, data, cfg, epoch as u64)?;
        debug!("encoder epoch {epoch}: loss {l:.6}");
        losses.push(l);
        if plateaued(&losses, cfg.plateau_window, cfg.plateau_tol) {
            break;
        }
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor;

    #[test]
    fn mean_aggregate() {
        let mut t = Tape::new();
        let a = t.constant_vec(&[1.0, 0.0]);
        let b = t.constant_vec(&[0.0, 1.0]);
        let m = aggregate(&mut t, AggregatorKind::Mean, &[a, b], AggContext::default()).unwrap();
        assert_eq!(t.value(m).data(), &[0.5, 0.5]);
    }

    #[test]
    fn attention_over_identical_vectors_is_fixed_point() {
        let mut t = Tape::new();
        let v = [0.3, -0.7, 1.1];
        let xs: Vec<Var> = (0..4).map(|_| t.constant_vec(&v)).collect();
        let s = t.constant_vec(&[0.5, -1.0, 2.0]);
        let out = aggregate(
            &mut t,
            AggregatorKind::Attention,
            &xs,
            AggContext {
                score: Some(s),
                ..Default::default()
            },
        )
        .unwrap();
        for (o, e) in t.value(out).data().iter().zip(v) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn lightgcn_on_two_regular_equals_mean() {
        // 1/sqrt(2·2) = 1/2 per neighbor
        let mut t = Tape::new();
        let a = t.constant_vec(&[2.0, 4.0]);
        let b = t.constant_vec(&[6.0, 0.0]);
        let out = aggregate(
            &mut t,
            AggregatorKind::LightGcn,
            &[a, b],
            AggContext {
                neighbor_degrees: Some(&[2, 2]),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(t.value(out).data(), &[4.0, 2.0]);
    }

    #[test]
    fn empty_neighborhood_is_an_error() {
        let mut t = Tape::new();
        assert!(matches!(
            aggregate(&mut t, AggregatorKind::Mean, &[], AggContext::default()),
            Err(Error::EmptyNeighborhood(_))
        ));
    }

    #[test]
    fn zero_weights_give_sigmoid_of_zero() {
        let mut t = Tape::new();
        let w = t.constant(&Tensor::zeros(&[3, 6]));
        let s = t.constant_vec(&[1.0, 2.0, 3.0]);
        let n = t.constant_vec(&[-1.0, 0.5, 4.0]);
        let out = conv_step(&mut t, Activation::Sigmoid, AggregatorKind::Mean, s, &[n], w, AggContext::default()).unwrap();
        assert_eq!(t.value(out).data(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_neighbor_equal_to_self_duplicates_halves() {
        // with W = [I | 0] the output only sees the self half, with
        // W = [0 | I] only the aggregated half; identical inputs agree
        let v = [0.2, -0.4];
        let left = Tensor::matrix(2, 4, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let right = Tensor::matrix(2, 4, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let mut outs = Vec::new();
        for w in [left, right] {
            let mut t = Tape::new();
            let wv = t.constant(&w);
            let s = t.constant_vec(&v);
            let n = t.constant_vec(&v);
            let o = conv_step(&mut t, Activation::Sigmoid, AggregatorKind::Mean, s, &[n], wv, AggContext::default()).unwrap();
            outs.push(t.value(o).data().to_vec());
        }
        assert_eq!(outs[0], outs[1]);
    }

    #[test]
    fn final_step_singleton() {
        let w = Tensor::matrix(2, 2, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let x = [1.5, -0.5];
        let mut t = Tape::new();
        let wv = t.constant(&w);
        let xv = t.constant_vec(&x);
        let o = final_step(&mut t, Activation::Sigmoid, AggregatorKind::Mean, &[xv], wv, AggContext::default()).unwrap();
        let want = [tensor::sigmoid(0.5 * 1.5 + 0.5), tensor::sigmoid(2.0 * 1.5 - 0.125)];
        for (a, b) in t.value(o).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reconstruction_loss_range() {
        let cases = [([1.0, 2.0], [1.0, 2.0], 0.0), ([1.0, 0.0], [0.0, 3.0], 1.0), ([1.0, -1.0], [-2.0, 2.0], 2.0)];
        for (a, b, want) in cases {
            let mut t = Tape::new();
            let av = t.constant_vec(&a);
            let bv = t.constant_vec(&b);
            let l = reconstruction_loss(&mut t, av, bv).unwrap();
            assert!((t.value(l).item() - want).abs() < 1e-15);
        }
        let mut t = Tape::new();
        let z = t.constant_vec(&[0.0, 0.0]);
        let b = t.constant_vec(&[1.0, 0.0]);
        assert!(reconstruction_loss(&mut t, z, b).is_err());
    }
}
