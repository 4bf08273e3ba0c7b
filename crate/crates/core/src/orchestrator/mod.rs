//! Staged pre-training: meta learner, meta-aggregated encoder, sampler,
//! then joint training of all three with soft parameter blending.

pub mod checkpoint;

use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{build_episode, Episode, NodeId};
use crate::encoder::{self, EncoderConfig, GnnParams, PretrainData};
use crate::error::{Error, Result};
use crate::meta_learner::{self, MetaLearner, MetaLearnerConfig};
use crate::numerics::batch::{accumulate, plateaued, TrainConfig};
use crate::numerics::optim::{Adam, AdamState};
use crate::numerics::params::ParamSet;
use crate::numerics::rng;
use crate::numerics::tensor::{self, Tensor};
use crate::sampler::{
    reinforce_gradient, run_sampling, RewardContext, SampleMode, SamplerConfig, SamplerParams, Trajectory,
    DEFAULT_TRAJECTORIES,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    MetaLearner,
    MetaAgg,
    Sampler,
    Joint,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::MetaLearner, Stage::MetaAgg, Stage::Sampler, Stage::Joint];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short name used on the command line.
    pub fn short(self) -> &'static str {
        match self {
            Stage::MetaLearner => "g",
            Stage::MetaAgg => "f",
            Stage::Sampler => "s",
            Stage::Joint => "joint",
        }
    }

    pub fn from_short(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.short() == s)
    }
}

/// Which modules a model carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Encoder only.
    Basic,
    /// Meta learner and meta-aggregated encoder.
    Meta,
    /// Encoder and sampler.
    NSampler,
    /// All three modules.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Basic, Variant::Meta, Variant::NSampler, Variant::Full];

    pub fn has_meta(self) -> bool {
        matches!(self, Variant::Meta | Variant::Full)
    }

    pub fn has_sampler(self) -> bool {
        matches!(self, Variant::NSampler | Variant::Full)
    }

    pub fn stages(self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| match s {
                Stage::MetaLearner => self.has_meta(),
                Stage::MetaAgg => true,
                Stage::Sampler | Stage::Joint => self.has_sampler(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    /// Epoch budgets, indexed by stage.
    pub epochs: [usize; 4],
    pub lrs: [f64; 4],
    pub lambda_blend: f64,
    pub batch_size: usize,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    /// Sampling passes per target per epoch.
    pub trajectories: usize,
    /// Subtract the batch-mean reward before the policy gradient.
    pub reward_baseline: bool,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            epochs: [50, 50, 50, 30],
            lrs: [0.005, 0.003, 0.003, 0.001],
            lambda_blend: 0.05,
            batch_size: 32,
            plateau_window: 5,
            plateau_tol: 1e-4,
            trajectories: DEFAULT_TRAJECTORIES,
            reward_baseline: false,
            seed: 0,
            parallel: false,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lambda_blend > 0.0 && self.lambda_blend < 1.0) {
            errs.push(format!("lambda_blend must lie in (0, 1), got {}", self.lambda_blend));
        }
        for (s, lr) in Stage::ALL.iter().zip(self.lrs) {
            if !(lr >= 0.0 && lr.is_finite()) {
                errs.push(format!("learning rate of stage {} must be finite and >= 0, got {lr}", s.short()));
            }
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be >= 1".into());
        }
        if self.trajectories == 0 {
            errs.push("trajectories must be >= 1".into());
        }
        errs
    }

    pub fn train_config(&self, stage: Stage) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs[stage.index()],
            lr: self.lrs[stage.index()],
            batch_size: self.batch_size,
            plateau_window: self.plateau_window,
            plateau_tol: self.plateau_tol,
            seed: rng::derive_seed(self.seed, &[0x57a9e, stage.index() as u64]),
            parallel: self.parallel,
        }
    }
}

/// `λ·θ_new + (1−λ)·θ_old`, with `λ` strictly inside `(0, 1)`.
pub fn soft_update(new: &ParamSet, old: &ParamSet, lambda: f64) -> Result<ParamSet> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Validation(format!("blend factor {lambda} outside (0, 1)")));
    }
    ParamSet::blend(new, old, lambda)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: Stage,
    pub epoch: usize,
    pub loss: f64,
    /// Mean sampler reward, for the sampler and joint stages.
    pub reward: Option<f64>,
    /// Wall time; not persisted, so checkpoints stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

/// A stage interrupted before its budget or plateau.
#[derive(Clone, Debug, PartialEq)]
pub struct Progress {
    pub stage: Stage,
    pub next_epoch: usize,
    pub losses: Vec<f64>,
    /// Optimiser state per parameter group (`f`, `g`, `s`).
    pub optim: IndexMap<String, AdamState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub variant: Variant,
    pub encoder: GnnParams,
    pub meta: Option<MetaLearner>,
    pub sampler: Option<SamplerParams>,
    pub completed: Vec<Stage>,
    pub progress: Option<Progress>,
    pub history: Vec<EpochLog>,
}

impl ModelState {
    pub fn new(variant: Variant, enc: EncoderConfig, heads: usize, seed: u64) -> Result<Self> {
        let enc = EncoderConfig {
            use_meta: variant.has_meta(),
            ..enc
        };
        let meta = if variant.has_meta() {
            Some(MetaLearner::new(MetaLearnerConfig { dim: enc.dim, heads }, rng::derive_seed(seed, &[0x9]))?)
        } else {
            None
        };
        let sampler = variant
            .has_sampler()
            .then(|| SamplerParams::new(SamplerConfig::new(enc.dim, enc.layers), rng::derive_seed(seed, &[0x5])));
        Ok(Self {
            variant,
            encoder: GnnParams::new(enc, rng::derive_seed(seed, &[0xf]))?,
            meta,
            sampler,
            completed: Vec::new(),
            progress: None,
            history: Vec::new(),
        })
    }

    pub fn is_complete(&self, stage: Stage) -> bool {
        self.completed.contains(&stage)
    }

    /// Stages still to run, in order.
    pub fn remaining(&self) -> Vec<Stage> {
        self.variant.stages().into_iter().filter(|s| !self.is_complete(*s)).collect()
    }

    fn check_ready(&self, stage: Stage) -> Result<()> {
        let stages = self.variant.stages();
        if !stages.contains(&stage) {
            return Err(Error::Staging(format!(
                "stage {} does not apply to the {:?} variant",
                stage.short(),
                self.variant
            )));
        }
        if self.is_complete(stage) {
            return Err(Error::Staging(format!("stage {} has already completed", stage.short())));
        }
        if let Some(later) = self.completed.iter().find(|s| **s > stage) {
            return Err(Error::Staging(format!(
                "stage {} cannot run after stage {} has completed",
                stage.short(),
                later.short()
            )));
        }
        for pre in stages.iter().filter(|s| **s < stage) {
            if !self.is_complete(*pre) {
                return Err(Error::Staging(format!(
                    "stage {} needs stage {} to be completed first",
                    stage.short(),
                    pre.short()
                )));
            }
        }
        if let Some(p) = &self.progress {
            if p.stage != stage {
                return Err(Error::Staging(format!(
                    "stage {} was interrupted; resume it before running stage {}",
                    p.stage.short(),
                    stage.short()
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of a `run_stage` call.
#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub losses: Vec<f64>,
    pub completed: bool,
}

/// Run (or resume) one stage.
///
/// `epoch_limit` caps the epochs executed by this call; the stage is then
/// left in progress and can be checkpointed and resumed. Parameters other
/// than the stage's own are never touched.
pub fn run_stage(
    stage: Stage,
    state: &mut ModelState,
    data: &PretrainData<'_>,
    schedule: &TrainingSchedule,
    epoch_limit: Option<usize>,
) -> Result<StageReport> {
    state.check_ready(stage)?;
    let errs = schedule.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs.join("; ")));
    }
    let tc = schedule.train_config(stage);
    let mut progress = state.progress.take().unwrap_or_else(|| Progress {
        stage,
        next_epoch: 0,
        losses: Vec::new(),
        optim: IndexMap::new(),
    });
    // Without orders above the first there is nothing to sample: neither
    // the sampler nor the joint stage has a gradient to follow.
    let no_policy = matches!(stage, Stage::Sampler | Stage::Joint) && state.encoder.cfg.layers < 2;
    let adam = Adam::new(tc.lr);
    let mut ran = 0;
    let mut done = no_policy;
    while !done && progress.next_epoch < tc.epochs {
        if epoch_limit.is_some_and(|l| ran >= l) {
            break;
        }
        let epoch = progress.next_epoch;
        let t0 = Instant::now();
        let (loss, reward) = match stage {
            Stage::MetaLearner => {
                let m = state.meta.as_mut().expect("variant has a meta learner");
                let st = progress.optim.entry("g".into()).or_insert_with(|| adam.init(&m.params));
                (meta_learner::train_epoch(m, &adam, st, data, &tc, epoch as u64)?, None)
            }
            Stage::MetaAgg => {
                let st = progress
                    .optim
                    .entry("f".into())
                    .or_insert_with(|| adam.init(&state.encoder.params));
                let l = encoder::train_epoch(&mut state.encoder, state.meta.as_ref(), &adam, st, data, &tc, epoch as u64)?;
                (l, None)
            }
            Stage::Sampler => {
                let (l, r) = sampler_epoch(state, &mut progress, &adam, data, schedule, &tc, epoch as u64)?;
                (l, Some(r))
            }
            Stage::Joint => {
                let (l, r) = joint_epoch(state, &mut progress, &adam, data, schedule, &tc, epoch as u64)?;
                (l, Some(r))
            }
        };
        let seconds = t0.elapsed().as_secs_f64();
        info!(
            "stage {} epoch {epoch}: loss {loss:.6}{}",
            stage.short(),
            reward.map(|r| format!(" reward {r:.6}")).unwrap_or_default()
        );
        state.history.push(EpochLog {
            stage,
            epoch,
            loss,
            reward,
            seconds,
        });
        progress.losses.push(loss);
        progress.next_epoch += 1;
        ran += 1;
        done = plateaued(&progress.losses, tc.plateau_window, tc.plateau_tol);
    }
    let completed = done || progress.next_epoch >= tc.epochs;
    let losses = progress.losses.clone();
    if completed {
        state.completed.push(stage);
        state.completed.sort();
    } else {
        state.progress = Some(progress);
    }
    Ok(StageReport {
        stage,
        losses,
        completed,
    })
}

/// Run every remaining stage of the variant to completion.
pub fn pretrain(state: &mut ModelState, data: &PretrainData<'_>, schedule: &TrainingSchedule) -> Result<Vec<StageReport>> {
    let mut out = Vec::new();
    for stage in state.remaining() {
        out.push(run_stage(stage, state, data, schedule, None)?);
    }
    Ok(out)
}

fn epoch_order(targets: &[NodeId], seed: u64) -> Vec<NodeId> {
    let mut order = targets.to_vec();
    order.shuffle(&mut rng::stream(seed, &[u64::MAX]));
    order
}

/// Sampling passes for one target, with rewards attached.
struct Rollout {
    trajectories: Vec<Trajectory>,
    pruned: Vec<Episode>,
    /// Mean `1 − cos(ĥ, h)` over the passes.
    loss: f64,
}

fn rollout(state: &ModelState, data: &PretrainData<'_>, ep: &Episode, passes: usize, seed: u64) -> Result<Rollout> {
    let sampler = state.sampler.as_ref().expect("variant has a sampler");
    let ctx = RewardContext {
        graph: data.graph,
        init: data.init,
        truth: data.truth,
        encoder: &state.encoder,
        meta: state.meta.as_ref(),
    };
    let truth = data.truth.try_row(ep.target)?;
    let cos = |e: &Episode| -> Result<f64> {
        let h = encoder::encode(e, ctx.graph, ctx.init, ctx.encoder, ctx.meta)?;
        tensor::cosine(&h, truth).ok_or_else(|| Error::ZeroNorm(format!("encoding of {}", e.target)))
    };
    let full = cos(ep)?;
    let mut trajectories = Vec::with_capacity(passes);
    let mut pruned = Vec::with_capacity(passes);
    let mut loss = 0.0;
    for m in 0..passes {
        let mut r = rng::stream(seed, &[ep.target.0 as u64, m as u64]);
        let (p, mut tr) = run_sampling(ep, sampler, data.init, SampleMode::Stochastic, &mut r)?;
        let c = cos(&p)?;
        tr.reward = Some(c - full);
        loss += 1.0 - c;
        trajectories.push(tr);
        pruned.push(p);
    }
    Ok(Rollout {
        trajectories,
        pruned,
        loss: loss / passes as f64,
    })
}

fn apply_baseline(trs: &mut [Trajectory]) {
    let n = trs.len() as f64;
    let mean = trs.iter().filter_map(|t| t.reward).sum::<f64>() / n;
    for t in trs {
        t.reward = t.reward.map(|r| r - mean);
    }
}

fn sampler_epoch(
    state: &mut ModelState,
    progress: &mut Progress,
    adam: &Adam,
    data: &PretrainData<'_>,
    schedule: &TrainingSchedule,
    tc: &TrainConfig,
    epoch: u64,
) -> Result<(f64, f64)> {
    let ep_seed = rng::derive_seed(tc.seed, &[epoch]);
    let order = epoch_order(data.targets, ep_seed);
    let depth = state.encoder.cfg.layers;
    let (mut loss, mut reward) = (0.0, 0.0);
    for batch in order.chunks(tc.batch_size) {
        let snapshot = &*state;
        let acc = accumulate(batch, tc.parallel, |&t| {
            let ep = build_episode(data.graph, t, data.k, depth, ep_seed)?;
            let mut ro = rollout(snapshot, data, &ep, schedule.trajectories, ep_seed)?;
            let mean_r = ro.trajectories.iter().filter_map(|t| t.reward).sum::<f64>() / ro.trajectories.len() as f64;
            if schedule.reward_baseline {
                apply_baseline(&mut ro.trajectories);
            }
            let g = reinforce_gradient(snapshot.sampler.as_ref().expect("sampler"), &ro.trajectories)?;
            let mut rp = ParamSet::new();
            rp.insert("r", Tensor::scalar(mean_r));
            Ok((ro.loss, vec![g, rp]))
        })?;
        loss += acc.loss;
        reward += acc.grads[1].tensor("r").item();
        let mut g = acc.mean_grads().swap_remove(0);
        if g.norm_sq() == 0.0 {
            continue;
        }
        g.scale(-1.0);
        let s = state.sampler.as_mut().expect("sampler");
        let st = progress.optim.entry("s".into()).or_insert_with(|| adam.init(&s.params));
        adam.step(&mut s.params, &g, st)?;
    }
    let n = order.len() as f64;
    Ok((loss / n, reward / n))
}

fn joint_epoch(
    state: &mut ModelState,
    progress: &mut Progress,
    adam: &Adam,
    data: &PretrainData<'_>,
    schedule: &TrainingSchedule,
    tc: &TrainConfig,
    epoch: u64,
) -> Result<(f64, f64)> {
    let ep_seed = rng::derive_seed(tc.seed, &[epoch]);
    let depth = state.encoder.cfg.layers;
    let has_meta = state.meta.is_some();
    let snapshot = &*state;
    // gradients accumulate over the whole epoch, then one step per module
    let acc = accumulate(data.targets, tc.parallel, |&t| {
        let ep = build_episode(data.graph, t, data.k, depth, ep_seed)?;
        let mut ro = rollout(snapshot, data, &ep, schedule.trajectories, ep_seed)?;
        let mean_r = ro.trajectories.iter().filter_map(|t| t.reward).sum::<f64>() / ro.trajectories.len() as f64;
        if schedule.reward_baseline {
            apply_baseline(&mut ro.trajectories);
        }
        let gs = reinforce_gradient(snapshot.sampler.as_ref().expect("sampler"), &ro.trajectories)?;
        let mut gf = snapshot.encoder.params.zeros_like();
        let mut gg = snapshot.meta.as_ref().map(|m| m.params.zeros_like()).unwrap_or_default();
        let scale = 1.0 / ro.pruned.len() as f64;
        for p in &ro.pruned {
            let eg = encoder::episode_gradients(&snapshot.encoder, snapshot.meta.as_ref().map(|m| (m, true)), p, data)?;
            gf.add_scaled(&eg.f, scale)?;
            if let Some(g) = eg.g {
                gg.add_scaled(&g, scale)?;
            }
        }
        let mut rp = ParamSet::new();
        rp.insert("r", Tensor::scalar(mean_r));
        Ok((ro.loss, vec![gf, gg, gs, rp]))
    })?;
    let mut grads = acc.mean_grads();
    let reward = grads[3].tensor("r").item();

    let old_f = state.encoder.params.clone();
    let mut new_f = old_f.clone();
    let st = progress.optim.entry("f".into()).or_insert_with(|| adam.init(&old_f));
    adam.step(&mut new_f, &grads[0], st)?;
    state.encoder.params = soft_update(&new_f, &old_f, schedule.lambda_blend)?;

    if has_meta {
        let m = state.meta.as_mut().expect("meta");
        let old_g = m.params.clone();
        let mut new_g = old_g.clone();
        let st = progress.optim.entry("g".into()).or_insert_with(|| adam.init(&old_g));
        adam.step(&mut new_g, &grads[1], st)?;
        m.params = soft_update(&new_g, &old_g, schedule.lambda_blend)?;
    }

    let s = state.sampler.as_mut().expect("sampler");
    let old_s = s.params.clone();
    let mut new_s = old_s.clone();
    grads[2].scale(-1.0);
    let st = progress.optim.entry("s".into()).or_insert_with(|| adam.init(&old_s));
    adam.step(&mut new_s, &grads[2], st)?;
    s.params = soft_update(&new_s, &old_s, schedule.lambda_blend)?;

    Ok((acc.mean_loss(), reward))
}

// ---------------------------------------------------------------------------
// persistence

#[derive(Serialize, Deserialize)]
struct Meta {
    variant: Variant,
    encoder: EncoderConfig,
    meta: Option<MetaLearnerConfig>,
    sampler: Option<SamplerConfig>,
    completed: Vec<Stage>,
    progress: Option<ProgressMeta>,
    history: Vec<EpochLog>,
    extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct ProgressMeta {
    stage: Stage,
    next_epoch: usize,
    losses: Vec<f64>,
    optim_steps: IndexMap<String, u64>,
}

fn put(out: &mut IndexMap<String, Tensor>, prefix: &str, p: &ParamSet) {
    for (k, t) in p.iter() {
        out.insert(format!("{prefix}{k}"), t.clone());
    }
}

fn take(all: &IndexMap<String, Tensor>, prefix: &str) -> ParamSet {
    let mut p = ParamSet::new();
    for (k, t) in all {
        if let Some(rest) = k.strip_prefix(prefix) {
            p.insert(rest, t.clone());
        }
    }
    p
}

/// Save parameters, optimiser moments, stage bookkeeping and caller
/// metadata (`extra`). RNG streams are derived from the seed and epoch
/// counter, so no generator state needs storing.
pub fn checkpoint(state: &ModelState, extra: &serde_json::Value, path: &Path) -> Result<()> {
    let mut tensors = IndexMap::new();
    put(&mut tensors, "f.", &state.encoder.params);
    if let Some(m) = &state.meta {
        put(&mut tensors, "g.", &m.params);
    }
    if let Some(s) = &state.sampler {
        put(&mut tensors, "s.", &s.params);
    }
    let progress = state.progress.as_ref().map(|p| {
        for (group, st) in &p.optim {
            put(&mut tensors, &format!("opt.{group}.m."), &st.m);
            put(&mut tensors, &format!("opt.{group}.v."), &st.v);
        }
        ProgressMeta {
            stage: p.stage,
            next_epoch: p.next_epoch,
            losses: p.losses.clone(),
            optim_steps: p.optim.iter().map(|(k, s)| (k.clone(), s.step)).collect(),
        }
    });
    let meta = Meta {
        variant: state.variant,
        encoder: state.encoder.cfg,
        meta: state.meta.as_ref().map(|m| m.cfg),
        sampler: state.sampler.as_ref().map(|s| s.cfg),
        completed: state.completed.clone(),
        progress,
        history: state.history.clone(),
        extra: extra.clone(),
    };
    checkpoint::write_file(path, &tensors, &serde_json::to_value(meta)?)
}

/// Inverse of [`checkpoint`]; returns the state and the caller metadata.
pub fn restore(path: &Path) -> Result<(ModelState, serde_json::Value)> {
    let (tensors, meta) = checkpoint::read_file(path)?;
    let meta: Meta = serde_json::from_value(meta).map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
    let encoder = GnnParams::from_params(meta.encoder, take(&tensors, "f."))?;
    let meta_l = meta
        .meta
        .map(|c| MetaLearner::from_params(c, take(&tensors, "g.")))
        .transpose()?;
    let sampler = meta
        .sampler
        .map(|c| SamplerParams::from_params(c, take(&tensors, "s.")))
        .transpose()?;
    let progress = meta.progress.map(|p| Progress {
        stage: p.stage,
        next_epoch: p.next_epoch,
        losses: p.losses,
        optim: p
            .optim_steps
            .iter()
            .map(|(g, &step)| {
                (
                    g.clone(),
                    AdamState {
                        step,
                        m: take(&tensors, &format!("opt.{g}.m.")),
                        v: take(&tensors, &format!("opt.{g}.v.")),
                    },
                )
            })
            .collect(),
    });
    if let Some(p) = &progress {
        for (g, st) in &p.optim {
            if st.m.is_empty() && st.step > 0 {
                return Err(Error::Format(format!("optimiser moments of `{g}` missing")));
            }
        }
    }
    Ok((
        ModelState {
            variant: meta.variant,
            encoder,
            meta: meta_l,
            sampler,
            completed: meta.completed,
            progress,
            history: meta.history,
        },
        meta.extra,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![x]));
        p
    }

    #[test]
    fn soft_update_arithmetic() {
        let t = soft_update(&one(2.0), &one(1.0), 0.1).unwrap();
        assert!((t.tensor("w").item() - 1.1).abs() < 1e-15);
        let t = soft_update(&one(2.0), &one(1.0), 1e-300).unwrap();
        assert_eq!(t.tensor("w").item(), 1.0);
        let t = soft_update(&one(3.5), &one(3.5), 0.05).unwrap();
        assert_eq!(t.tensor("w").item(), 3.5);
        assert!(soft_update(&one(1.0), &one(1.0), 0.0).is_err());
        assert!(soft_update(&one(1.0), &one(1.0), 1.0).is_err());
    }

    #[test]
    fn variant_stages() {
        assert_eq!(Variant::Basic.stages(), vec![Stage::MetaAgg]);
        assert_eq!(Variant::NSampler.stages(), vec![Stage::MetaAgg, Stage::Sampler, Stage::Joint]);
        assert_eq!(Variant::Full.stages(), Stage::ALL.to_vec());
        assert_eq!(Stage::from_short("joint"), Some(Stage::Joint));
    }
}
