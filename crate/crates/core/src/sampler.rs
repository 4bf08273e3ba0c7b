//! Adaptive neighbor sampler: a per-order keep/drop policy over orders
//! `2..=L`, trained with a delayed-reward policy gradient.
//!
//! First-order neighbors are always kept. Order `l` is sampled only among
//! children of kept order-`l-1` nodes, so a pruned tree never has orphans.
//! Sampling stops at the first order that keeps nothing, or at `L`.

use serde::{Deserialize, Serialize};

use rand::Rng as _;

use crate::dataio::{Episode, EpisodeNode, InteractionGraph};
use crate::encoder::{encode, GnnParams};
use crate::error::{Error, Result};
use crate::ground_truth::EmbeddingTable;
use crate::meta_learner::MetaLearner;
use crate::numerics::optim::{Adam, AdamState};
use crate::numerics::params::{Bound, ParamSet};
use crate::numerics::rng::{self, Rng};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::{self, Tensor};

pub const DEFAULT_F_MAX: usize = 8;
pub const DEFAULT_TRAJECTORIES: usize = 3;

/// Length of the state vector: `(f_max + 2)(d + 1)`.
pub fn state_dim(dim: usize, f_max: usize) -> usize {
    (f_max + 2) * (dim + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub dim: usize,
    pub layers: usize,
    pub f_max: usize,
    pub hidden: usize,
}

impl SamplerConfig {
    pub fn new(dim: usize, layers: usize) -> Self {
        Self {
            dim,
            layers,
            f_max: DEFAULT_F_MAX,
            hidden: dim,
        }
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self.dim, self.f_max)
    }

    /// Orders that carry a policy.
    pub fn orders(&self) -> std::ops::RangeInclusive<usize> {
        2..=self.layers
    }
}

pub fn w1_name(order: usize) -> String {
    format!("o{order}.w1")
}
pub fn b_name(order: usize) -> String {
    format!("o{order}.b")
}
pub fn w2_name(order: usize) -> String {
    format!("o{order}.w2")
}

/// Θ_s: `W_1^l ∈ R^{hidden×d_s}`, `b^l ∈ R^{hidden}`, `W_2^l ∈ R^{1×hidden}`
/// for each order `l` in `2..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerParams {
    pub cfg: SamplerConfig,
    pub params: ParamSet,
}

impl SamplerParams {
    /// Xavier `W_1`, zero `b` and `W_2`, so every action starts at
    /// probability one half.
    pub fn new(cfg: SamplerConfig, seed: u64) -> Self {
        let ds = cfg.state_dim();
        let mut params = ParamSet::new();
        for l in cfg.orders() {
            let mut r = rng::stream(seed, &[0x5a, l as u64]);
            params.insert(w1_name(l), Tensor::xavier(cfg.hidden, ds, &mut r));
            params.insert(b_name(l), Tensor::zeros(&[cfg.hidden]));
            params.insert(w2_name(l), Tensor::zeros(&[1, cfg.hidden]));
        }
        Self { cfg, params }
    }

    pub fn from_params(cfg: SamplerConfig, params: ParamSet) -> Result<Self> {
        let fresh = Self::new(cfg, 0);
        for (name, t) in fresh.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(Error::Format(format!("sampler parameter `{name}` missing or misshapen"))),
            }
        }
        Ok(Self { cfg, params })
    }

    /// Policy logit `W_2 · ReLU(W_1 s + b)` for one order.
    pub fn logit(&self, order: usize, s: &[f64]) -> Result<f64> {
        let w1 = self
            .params
            .get(&w1_name(order))
            .ok_or_else(|| Error::Validation(format!("no policy for order {order}")))?;
        let b = self.params.tensor(&b_name(order));
        let w2 = self.params.tensor(&w2_name(order));
        let ds = w1.cols();
        if s.len() != ds {
            return Err(Error::Shape(format!("state has {} features, policy expects {ds}", s.len())));
        }
        let mut z = 0.0;
        for (r, (bias, out_w)) in b.data().iter().zip(w2.data()).enumerate() {
            let pre = tensor::dot(&w1.data()[r * ds..(r + 1) * ds], s) + bias;
            z += out_w * pre.max(0.0);
        }
        Ok(z)
    }

    /// `P(a = 1 | s) = σ(W_2 · ReLU(W_1 s + b))`.
    pub fn policy_prob(&self, order: usize, s: &[f64]) -> Result<f64> {
        Ok(tensor::sigmoid(self.logit(order, s)?))
    }
}

fn similarity_block(out: &mut [f64], a: &[f64], b: &[f64]) {
    out[0] = tensor::cosine(a, b).unwrap_or(0.0);
    for (o, (x, y)) in out[1..].iter_mut().zip(a.iter().zip(b)) {
        *o = x * y;
    }
}

/// State of one candidate: `[cos, ⊙]` against the target, against the mean
/// of the formerly selected neighbors, and against each of the first
/// `f_max` of them; absent blocks are zero.
pub fn state_features(target: &[f64], candidate: &[f64], selected_prev: &[&[f64]], f_max: usize) -> Vec<f64> {
    let d = target.len();
    let w = d + 1;
    let mut s = vec![0.0; state_dim(d, f_max)];
    similarity_block(&mut s[..w], candidate, target);
    if !selected_prev.is_empty() {
        let avg = tensor::mean_of(selected_prev);
        similarity_block(&mut s[w..2 * w], candidate, &avg);
        for (k, prev) in selected_prev.iter().take(f_max).enumerate() {
            similarity_block(&mut s[(2 + k) * w..(3 + k) * w], candidate, prev);
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub order: usize,
    pub state: Vec<f64>,
    pub action: bool,
    pub log_prob: f64,
}

/// One sampling pass. The reward is set once, after termination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Last order at which actions were taken; 1 when there were none.
    pub terminal_order: usize,
    pub reward: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Bernoulli draw from the policy.
    Stochastic,
    /// Keep exactly when `P(a = 1) > 0.5`.
    Greedy,
}

/// Drop every node whose mask entry is false, along with all of its
/// descendants, and re-index parents. Hops that end up empty are removed
/// with everything below them.
pub fn prune_episode(episode: &Episode, keep: &[Vec<bool>]) -> Episode {
    let mut hops: Vec<Vec<EpisodeNode>> = Vec::new();
    let mut prev_map: Vec<Option<usize>> = Vec::new();
    for (h, hop) in episode.hops.iter().enumerate() {
        let mut map = vec![None; hop.len()];
        let mut level = Vec::new();
        for (i, n) in hop.iter().enumerate() {
            let parent = if h == 0 { Some(0) } else { prev_map[n.parent] };
            let wanted = keep.get(h).and_then(|k| k.get(i)).copied().unwrap_or(true);
            if let (Some(p), true) = (parent, wanted) {
                map[i] = Some(level.len());
                level.push(EpisodeNode { id: n.id, parent: p });
            }
        }
        if level.is_empty() {
            break;
        }
        hops.push(level);
        prev_map = map;
    }
    Episode {
        target: episode.target,
        hops,
        k: episode.k,
        seed: episode.seed,
    }
}

/// Sample orders `2..=min(L, depth)` of `episode`.
pub fn run_sampling(
    episode: &Episode,
    sampler: &SamplerParams,
    init: &EmbeddingTable,
    mode: SampleMode,
    rng: &mut Rng,
) -> Result<(Episode, Trajectory)> {
    let depth = episode.depth().min(sampler.cfg.layers);
    let target = init.try_row(episode.target)?;
    let mut keep: Vec<Vec<bool>> = episode.hops.iter().map(|h| vec![false; h.len()]).collect();
    keep[0].iter_mut().for_each(|k| *k = true);
    let mut steps = Vec::new();
    let mut terminal = 1;
    for order in 2..=depth {
        let h = order - 1;
        let selected: Vec<&[f64]> = episode.hops[h - 1]
            .iter()
            .zip(&keep[h - 1])
            .filter(|(_, &k)| k)
            .map(|(n, _)| init.try_row(n.id))
            .collect::<Result<_>>()?;
        let mut cands: Vec<usize> = (0..episode.hops[h].len())
            .filter(|&j| keep[h - 1][episode.hops[h][j].parent])
            .collect();
        cands.sort_by_key(|&j| (episode.hops[h][j].id, j));
        terminal = order;
        let mut any = false;
        for j in cands {
            let s = state_features(target, init.try_row(episode.hops[h][j].id)?, &selected, sampler.cfg.f_max);
            let z = sampler.logit(order, &s)?;
            let p = tensor::sigmoid(z);
            let action = match mode {
                SampleMode::Stochastic => rng.gen::<f64>() < p,
                SampleMode::Greedy => p > 0.5,
            };
            let log_prob = if action { tensor::log_sigmoid(z) } else { tensor::log_sigmoid(-z) };
            keep[h][j] = action;
            any |= action;
            steps.push(Step {
                order,
                state: s,
                action,
                log_prob,
            });
        }
        if !any {
            break;
        }
    }
    for k in keep.iter_mut().skip(terminal) {
        k.iter_mut().for_each(|x| *x = false);
    }
    Ok((
        prune_episode(episode, &keep),
        Trajectory {
            steps,
            terminal_order: terminal,
            reward: None,
        },
    ))
}

/// Encoder and tables needed to score a pruned episode.
#[derive(Clone, Copy, Debug)]
pub struct RewardContext<'a> {
    pub graph: &'a InteractionGraph,
    pub init: &'a EmbeddingTable,
    pub truth: &'a EmbeddingTable,
    pub encoder: &'a GnnParams,
    pub meta: Option<&'a MetaLearner>,
}

fn cos_to_truth(ctx: &RewardContext<'_>, ep: &Episode) -> Result<f64> {
    let h = encode(ep, ctx.graph, ctx.init, ctx.encoder, ctx.meta)?;
    tensor::cosine(&h, ctx.truth.try_row(ep.target)?).ok_or_else(|| Error::ZeroNorm(format!("encoding of {}", ep.target)))
}

/// `cos(ĥ, h) − cos(h_full, h)`: how much the pruned neighborhood improves
/// reconstruction over the full one.
pub fn episode_reward(full: &Episode, sampled: &Episode, ctx: &RewardContext<'_>) -> Result<f64> {
    Ok(cos_to_truth(ctx, sampled)? - cos_to_truth(ctx, full)?)
}

/// `log P(a | s)` of one recorded step, on the tape.
pub fn log_prob_on_tape(tape: &mut Tape, bound: &Bound, step: &Step) -> Result<Var> {
    let s = tape.constant_vec(&step.state);
    let pre = tape.matvec(bound.var(&w1_name(step.order)), s)?;
    let pre = tape.add(pre, bound.var(&b_name(step.order)))?;
    let hid = tape.relu(pre)?;
    let z = tape.matvec(bound.var(&w2_name(step.order)), hid)?;
    let signed = tape.affine(z, if step.action { 1.0 } else { -1.0 }, 0.0)?;
    tape.log_sigmoid(signed)
}

/// `(1/M) Σ_m R_m Σ_t ∇ log P(a_t | s_t)`, the gradient of expected reward.
pub fn reinforce_gradient(sampler: &SamplerParams, trajectories: &[Trajectory]) -> Result<ParamSet> {
    let mut tape = Tape::new();
    let bound = sampler.params.bind(&mut tape, true);
    let mut terms = Vec::new();
    for tr in trajectories {
        let r = tr
            .reward
            .ok_or_else(|| Error::Validation("trajectory has no reward".into()))?;
        if r == 0.0 {
            continue;
        }
        for st in &tr.steps {
            let lp = log_prob_on_tape(&mut tape, &bound, st)?;
            terms.push(tape.affine(lp, r / trajectories.len() as f64, 0.0)?);
        }
    }
    if terms.is_empty() {
        return Ok(sampler.params.zeros_like());
    }
    let total = tape.add_n(&terms)?;
    let total = tape.sum(total)?;
    let grads = tape.backward(total)?;
    Ok(bound.gradients(&grads))
}

/// Ascend the REINFORCE gradient with Adam. A batch whose rewards are all
/// zero carries no signal and leaves parameters and moments untouched.
pub fn reinforce_update(
    sampler: &mut SamplerParams,
    trajectories: &[Trajectory],
    adam: &Adam,
    state: &mut AdamState,
) -> Result<bool> {
    if trajectories.is_empty() {
        return Err(Error::Validation("policy update needs at least one trajectory".into()));
    }
    if trajectories.iter().all(|t| t.reward == Some(0.0)) {
        return Ok(false);
    }
    let mut g = reinforce_gradient(sampler, trajectories)?;
    g.scale(-1.0);
    adam.step(&mut sampler.params, &g, state)?;
    Ok(true)
}
