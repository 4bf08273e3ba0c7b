//! Fine-tuning for ranking and the two evaluation protocols: embedding
//! agreement on masked targets (Spearman) and top-K recommendation for
//! cold-start users (Recall / NDCG).

pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{build_episode, Episode, InteractionGraph, NodeId};
use crate::encoder::{encode, encode_on_tape, BoundEncoder, EncoderConfig, NodeInputs, PretrainData};
use crate::error::{Error, Result};
use crate::ground_truth::{bpr_loss_var, sample_negative, EmbeddingTable};
use crate::numerics::batch::accumulate;
use crate::numerics::optim::Adam;
use crate::numerics::params::ParamSet;
use crate::numerics::rng;
use crate::numerics::stats::spearman;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::{self, Tensor};
use crate::orchestrator::{pretrain, ModelState, TrainingSchedule, Variant};
use crate::sampler::{reinforce_gradient, run_sampling, SampleMode, Trajectory};

pub use metrics::{ndcg_at_k, rank_items, recall_at_k};

pub const HEAD_W: &str = "w";

/// Θ_r: the projection applied to both sides before the dot product.
#[derive(Clone, Debug, PartialEq)]
pub struct RecommenderHead {
    pub params: ParamSet,
}

impl RecommenderHead {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut params = ParamSet::new();
        params.insert(HEAD_W, Tensor::xavier(dim, dim, &mut rng::stream(seed, &[0x4ead])));
        Self { params }
    }

    pub fn w(&self) -> &Tensor {
        self.params.tensor(HEAD_W)
    }
}

/// `σ(W h_u)ᵀ σ(W h_i)`.
pub fn relevance(h_u: &[f64], h_i: &[f64], w: &Tensor) -> f64 {
    let proj = |h: &[f64]| -> Vec<f64> {
        (0..w.rows())
            .map(|r| tensor::sigmoid(tensor::dot(&w.data()[r * w.cols()..(r + 1) * w.cols()], h)))
            .collect()
    };
    tensor::dot(&proj(h_u), &proj(h_i))
}

/// [`relevance`] recorded on a tape.
pub fn relevance_on_tape(tape: &mut Tape, h_u: Var, h_i: Var, w: Var) -> Result<Var> {
    let a = tape.matvec(w, h_u)?;
    let a = tape.sigmoid(a)?;
    let b = tape.matvec(w, h_i)?;
    let b = tape.sigmoid(b)?;
    tape.dot(a, b)
}

/// How a model scores a user-item pair.
#[derive(Clone, Copy, Debug)]
pub enum Scoring<'a> {
    Head(&'a RecommenderHead),
    /// `h_uᵀ h_i`, for encoders trained directly with BPR.
    Dot,
}

impl Scoring<'_> {
    pub fn score(&self, h_u: &[f64], h_i: &[f64]) -> f64 {
        match self {
            Scoring::Head(h) => relevance(h_u, h_i, h.w()),
            Scoring::Dot => tensor::dot(h_u, h_i),
        }
    }
}

/// Inference-time tree: greedy sampler pruning when the model has a
/// sampler, the full episode otherwise.
pub fn inference_episode(state: &ModelState, init: &EmbeddingTable, ep: &Episode) -> Result<Episode> {
    match &state.sampler {
        Some(s) if state.encoder.cfg.layers >= 2 => {
            let mut unused = rng::stream(0, &[]);
            Ok(run_sampling(ep, s, init, SampleMode::Greedy, &mut unused)?.0)
        }
        _ => Ok(ep.clone()),
    }
}

/// Predicted `h^L` of the episode's target.
pub fn infer(state: &ModelState, graph: &InteractionGraph, init: &EmbeddingTable, ep: &Episode) -> Result<Vec<f64>> {
    let e = inference_episode(state, init, ep)?;
    encode(&e, graph, init, &state.encoder, state.meta.as_ref())
}

/// Per-node metric values with their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub per_node: Vec<(String, f64)>,
    pub mean: f64,
    /// Nodes left out, with the reason.
    pub skipped: Vec<(String, String)>,
    pub fingerprint: String,
    pub seed: u64,
}

impl EvalReport {
    pub fn new(metric: &str, per_node: Vec<(String, f64)>, skipped: Vec<(String, String)>, fingerprint: &str, seed: u64) -> Self {
        let mean = if per_node.is_empty() {
            0.0
        } else {
            per_node.iter().map(|(_, v)| v).sum::<f64>() / per_node.len() as f64
        };
        Self {
            metric: metric.to_string(),
            per_node,
            mean,
            skipped,
            fingerprint: fingerprint.to_string(),
            seed,
        }
    }

    /// One JSON object per node, then a summary object.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for (node, value) in &self.per_node {
            out.push_str(&serde_json::to_string(&serde_json::json!({
                "metric": self.metric,
                "node": node,
                "value": value,
            }))?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&serde_json::json!({
            "summary": true,
            "metric": self.metric,
            "mean": self.mean,
            "count": self.per_node.len(),
            "skipped": self.skipped,
            "fingerprint": self.fingerprint,
            "seed": self.seed,
            "aggregation": if self.metric == "spearman" {
                "per-node Spearman across embedding coordinates, then mean over nodes"
            } else {
                "per-user value, then mean over users"
            },
        }))?);
        out.push('\n');
        Ok(out)
    }
}

/// Mean per-node Spearman between predicted and true embeddings. Nodes
/// whose prediction (or truth) is constant are skipped and listed.
pub fn intrinsic_eval(
    predictions: &[(NodeId, Vec<f64>)],
    truth: &EmbeddingTable,
    graph: &InteractionGraph,
    fingerprint: &str,
    seed: u64,
) -> Result<EvalReport> {
    let mut per = Vec::new();
    let mut skipped = Vec::new();
    for (v, pred) in predictions {
        let name = graph.original_id(*v).to_string();
        match spearman(pred, truth.try_row(*v)?) {
            Ok(s) => per.push((name, s)),
            Err(Error::UndefinedCorrelation(why)) => skipped.push((name, why)),
            Err(e) => return Err(e),
        }
    }
    if !skipped.is_empty() {
        info!("{} nodes skipped with constant vectors", skipped.len());
    }
    Ok(EvalReport::new("spearman", per, skipped, fingerprint, seed))
}

/// Encode the given test targets on `graph` with fresh `k`-shot episodes.
pub fn predict_targets(
    state: &ModelState,
    graph: &InteractionGraph,
    init: &EmbeddingTable,
    targets: &[NodeId],
    k: usize,
    seed: u64,
) -> Result<Vec<(NodeId, Vec<f64>)>> {
    let depth = state.encoder.cfg.layers;
    let ep_seed = rng::derive_seed(seed, &[0x7e57]);
    targets
        .iter()
        .map(|&v| {
            let ep = build_episode(graph, v, k, depth, ep_seed)?;
            Ok((v, infer(state, graph, init, &ep)?))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub k: usize,
    /// Update the sampler by policy gradient on the ranking margin.
    pub tune_sampler: bool,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.001,
            batch_size: 64,
            k: 3,
            tune_sampler: true,
            seed: 0,
            parallel: false,
        }
    }
}

/// Positive pairs for BPR, and the graph their episodes come from.
#[derive(Clone, Copy, Debug)]
pub struct FinetuneData<'a> {
    pub graph: &'a InteractionGraph,
    pub init: &'a EmbeddingTable,
    pub pairs: &'a [(NodeId, NodeId)],
}

struct TripleGrads {
    loss: f64,
    f: ParamSet,
    g: ParamSet,
    r: ParamSet,
    s: ParamSet,
}

fn triple_gradients(
    state: &ModelState,
    head: Option<&RecommenderHead>,
    data: &FinetuneData<'_>,
    cfg: &FinetuneConfig,
    (u, i, j): (NodeId, NodeId, NodeId),
    seed: u64,
) -> Result<TripleGrads> {
    let depth = state.encoder.cfg.layers;
    let sampling = state.sampler.is_some() && depth >= 2;
    let full: Vec<Episode> = [u, i, j]
        .iter()
        .map(|&v| build_episode(data.graph, v, cfg.k, depth, seed))
        .collect::<Result<_>>()?;
    let mut used = full.clone();
    let mut trajectories: Vec<Trajectory> = Vec::new();
    if sampling {
        let s = state.sampler.as_ref().expect("sampler");
        for (n, ep) in full.iter().enumerate() {
            let mut r = rng::stream(seed, &[u.0 as u64, i.0 as u64, j.0 as u64, n as u64]);
            let (p, tr) = run_sampling(ep, s, data.init, SampleMode::Stochastic, &mut r)?;
            used[n] = p;
            trajectories.push(tr);
        }
    }

    let mut tape = Tape::new();
    let enc = BoundEncoder::new(&mut tape, &state.encoder, true, state.meta.as_ref().map(|m| (m, true)));
    let head_b = head.map(|h| h.params.bind(&mut tape, true));
    let mut inputs = NodeInputs::new(data.init, false);
    let hs = used
        .iter()
        .map(|e| encode_on_tape(&mut tape, &enc, e, data.graph, &mut inputs))
        .collect::<Result<Vec<_>>>()?;
    let score = |tape: &mut Tape, a: Var, b: Var| -> Result<Var> {
        match &head_b {
            Some(hb) => relevance_on_tape(tape, a, b, hb.var(HEAD_W)),
            None => tape.dot(a, b),
        }
    };
    let y_pos = score(&mut tape, hs[0], hs[1])?;
    let y_neg = score(&mut tape, hs[0], hs[2])?;
    let loss = bpr_loss_var(&mut tape, y_pos, y_neg, 0.0, None)?;
    let grads = tape.backward(loss)?;

    let mut s_grad = state.sampler.as_ref().map(|s| s.params.zeros_like()).unwrap_or_default();
    if sampling && cfg.tune_sampler {
        let scoring = match head {
            Some(h) => Scoring::Head(h),
            None => Scoring::Dot,
        };
        let enc_full: Vec<Vec<f64>> = full
            .iter()
            .map(|e| encode(e, data.graph, data.init, &state.encoder, state.meta.as_ref()))
            .collect::<Result<_>>()?;
        let margin_full = scoring.score(&enc_full[0], &enc_full[1]) - scoring.score(&enc_full[0], &enc_full[2]);
        let margin = tape.value(y_pos).item() - tape.value(y_neg).item();
        let reward = margin - margin_full;
        trajectories.iter_mut().for_each(|t| t.reward = Some(reward));
        s_grad = reinforce_gradient(state.sampler.as_ref().expect("sampler"), &trajectories)?;
    }
    Ok(TripleGrads {
        loss: tape.value(loss).item(),
        f: enc.bound.gradients(&grads),
        g: enc.meta.as_ref().map(|(_, b)| b.gradients(&grads)).unwrap_or_default(),
        r: head_b.map(|b| b.gradients(&grads)).unwrap_or_default(),
        s: s_grad,
    })
}

/// BPR fine-tuning of the head and every module of the model. Returns the
/// mean loss of each epoch.
pub fn finetune(
    state: &mut ModelState,
    mut head: Option<&mut RecommenderHead>,
    data: &FinetuneData<'_>,
    cfg: &FinetuneConfig,
) -> Result<Vec<f64>> {
    if data.pairs.is_empty() {
        return Err(Error::EmptyDataset("no fine-tuning interactions".into()));
    }
    let adam = Adam::new(cfg.lr);
    let mut st_f = adam.init(&state.encoder.params);
    let mut st_g = state.meta.as_ref().map(|m| adam.init(&m.params));
    let mut st_s = state.sampler.as_ref().map(|s| adam.init(&s.params));
    let mut st_r = head.as_ref().map(|h| adam.init(&h.params));
    let mut losses = Vec::new();
    for epoch in 0..cfg.epochs {
        let ep_seed = rng::derive_seed(cfg.seed, &[0xf1e, epoch as u64]);
        let mut r = rng::stream(ep_seed, &[u64::MAX]);
        let mut triples: Vec<(NodeId, NodeId, NodeId)> = data
            .pairs
            .iter()
            .filter_map(|&(u, i)| sample_negative(data.graph, u, &mut r).map(|j| (u, i, j)))
            .collect();
        triples.shuffle(&mut r);
        let mut total = 0.0;
        for batch in triples.chunks(cfg.batch_size.max(1)) {
            let snapshot = &*state;
            let hsnap = head.as_deref();
            let acc = accumulate(batch, cfg.parallel, |&t| {
                let tg = triple_gradients(snapshot, hsnap, data, cfg, t, ep_seed)?;
                Ok((tg.loss, vec![tg.f, tg.g, tg.r, tg.s]))
            })?;
            total += acc.loss;
            let mut g = acc.mean_grads();
            adam.step(&mut state.encoder.params, &g[0], &mut st_f)?;
            if let (Some(m), Some(st)) = (state.meta.as_mut(), st_g.as_mut()) {
                adam.step(&mut m.params, &g[1], st)?;
            }
            if let (Some(h), Some(st)) = (head.as_deref_mut(), st_r.as_mut()) {
                adam.step(&mut h.params, &g[2], st)?;
            }
            if let (Some(s), Some(st)) = (state.sampler.as_mut(), st_s.as_mut()) {
                if cfg.tune_sampler && g[3].norm_sq() > 0.0 {
                    g[3].scale(-1.0);
                    adam.step(&mut s.params, &g[3], st)?;
                }
            }
        }
        let mean = total / triples.len().max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("fine-tuning loss at epoch {epoch}")));
        }
        debug!("finetune epoch {epoch}: loss {mean:.6}");
        losses.push(mean);
    }
    Ok(losses)
}

/// Mean BPR loss over one fixed draw of negatives, without updates.
pub fn bpr_eval(state: &ModelState, scoring: Scoring<'_>, data: &FinetuneData<'_>, k: usize, seed: u64) -> Result<f64> {
    let depth = state.encoder.cfg.layers;
    let ep_seed = rng::derive_seed(seed, &[0xb9e]);
    let mut r = rng::stream(ep_seed, &[]);
    let triples: Vec<(NodeId, NodeId, NodeId)> = data
        .pairs
        .iter()
        .filter_map(|&(u, i)| sample_negative(data.graph, u, &mut r).map(|j| (u, i, j)))
        .collect();
    let mut cache: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    let mut total = 0.0;
    for &(u, i, j) in &triples {
        for v in [u, i, j] {
            if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(v) {
                let ep = build_episode(data.graph, v, k, depth, ep_seed)?;
                e.insert(infer(state, data.graph, data.init, &ep)?);
            }
        }
        let x = scoring.score(&cache[&u], &cache[&i]) - scoring.score(&cache[&u], &cache[&j]);
        total += -tensor::log_sigmoid(x);
    }
    Ok(total / triples.len().max(1) as f64)
}

/// Recall@K and NDCG@K per held-out user.
///
/// Candidates are every item the user has not interacted with in `graph`
/// (the training interactions). Users whose episode cannot be built are
/// skipped and listed.
#[allow(clippy::too_many_arguments)]
pub fn extrinsic_eval(
    state: &ModelState,
    scoring: Scoring<'_>,
    graph: &InteractionGraph,
    init: &EmbeddingTable,
    held_out: &BTreeMap<NodeId, Vec<NodeId>>,
    k_episode: usize,
    k_metric: usize,
    fingerprint: &str,
    seed: u64,
) -> Result<(EvalReport, EvalReport)> {
    let depth = state.encoder.cfg.layers;
    let ep_seed = rng::derive_seed(seed, &[0xe47]);
    let mut items: Vec<(NodeId, Vec<f64>)> = Vec::new();
    for i in graph.items() {
        if graph.degree(i) == 0 {
            continue;
        }
        let ep = build_episode(graph, i, k_episode, depth, ep_seed)?;
        items.push((i, infer(state, graph, init, &ep)?));
    }
    let (mut rec, mut ndcg, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
    for (&u, rel) in held_out {
        let name = graph.original_id(u).to_string();
        if graph.degree(u) == 0 {
            skipped.push((name, "no training interactions".to_string()));
            continue;
        }
        let ep = build_episode(graph, u, k_episode, depth, ep_seed)?;
        let hu = infer(state, graph, init, &ep)?;
        let scores: Vec<(NodeId, f64)> = items
            .iter()
            .filter(|(i, _)| !graph.has_edge(u, *i))
            .map(|(i, hi)| (*i, scoring.score(&hu, hi)))
            .collect();
        // held-out items never seen in training cannot be scored, but still
        // count as relevant
        let relevant: BTreeSet<NodeId> = rel.iter().copied().collect();
        let ranked = rank_items(&scores);
        rec.push((name.clone(), recall_at_k(&ranked, &relevant, k_metric)));
        ndcg.push((name, ndcg_at_k(&ranked, &relevant, k_metric)));
    }
    Ok((
        EvalReport::new(&format!("recall@{k_metric}"), rec, skipped.clone(), fingerprint, seed),
        EvalReport::new(&format!("ndcg@{k_metric}"), ndcg, skipped, fingerprint, seed),
    ))
}

/// Everything needed to train and score one variant under the intrinsic
/// protocol.
#[derive(Clone, Copy, Debug)]
pub struct IntrinsicSetup<'a> {
    /// Training data: episodes from the masked graph, targets `Train_T`.
    pub train: PretrainData<'a>,
    /// Masked test targets, encoded on `train.graph`.
    pub test: &'a [NodeId],
}

/// Pre-train one variant and report its test Spearman.
pub fn run_variant(
    variant: Variant,
    enc: EncoderConfig,
    heads: usize,
    schedule: &TrainingSchedule,
    setup: &IntrinsicSetup<'_>,
    fingerprint: &str,
) -> Result<(ModelState, EvalReport)> {
    let mut state = ModelState::new(variant, enc, heads, schedule.seed)?;
    pretrain(&mut state, &setup.train, schedule)?;
    let preds = predict_targets(&state, setup.train.graph, setup.train.init, setup.test, setup.train.k, schedule.seed)?;
    let report = intrinsic_eval(&preds, setup.train.truth, setup.train.graph, fingerprint, schedule.seed)?;
    Ok((state, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub layers: usize,
    pub variant: Variant,
    pub report: EvalReport,
}

/// Intrinsic evaluation of each variant at each depth.
pub fn layer_sweep(
    layers: &[usize],
    variants: &[Variant],
    enc: EncoderConfig,
    heads: usize,
    schedule: &TrainingSchedule,
    setup: &IntrinsicSetup<'_>,
    fingerprint: &str,
) -> Result<Vec<SweepEntry>> {
    let mut out = Vec::new();
    for &l in layers {
        for &variant in variants {
            let cfg = EncoderConfig { layers: l, ..enc };
            let (_, report) = run_variant(variant, cfg, heads, schedule, setup, fingerprint)?;
            info!("L={l} {variant:?}: spearman {:.4}", report.mean);
            out.push(SweepEntry { layers: l, variant, report });
        }
    }
    Ok(out)
}

/// Encoder trained end to end with BPR on `h_uᵀh_i`, without any
/// reconstruction pre-training.
pub fn train_bpr_encoder(
    enc: EncoderConfig,
    data: &FinetuneData<'_>,
    cfg: &FinetuneConfig,
) -> Result<(ModelState, Vec<f64>)> {
    let mut state = ModelState::new(Variant::Basic, enc, 1, cfg.seed)?;
    let losses = finetune(&mut state, None, data, cfg)?;
    Ok((state, losses))
}
