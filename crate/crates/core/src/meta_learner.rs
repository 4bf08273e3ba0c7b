//! The meta learner g: multi-head self-attention over a node's sampled
//! first-order initial embeddings, averaged into one meta embedding.

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::build_episode;
use crate::encoder::{reconstruction_loss, NodeInputs, PretrainData};
use crate::error::{Error, Result};
use crate::numerics::batch::{accumulate, plateaued, TrainConfig};
use crate::numerics::optim::{Adam, AdamState};
use crate::numerics::params::{Bound, ParamSet};
use crate::numerics::rng;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

pub const WQ: &str = "wq";
pub const WK: &str = "wk";
pub const WV: &str = "wv";

const STREAM_TAG: u64 = 0x9e7a;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaLearnerConfig {
    pub dim: usize,
    pub heads: usize,
}

impl Default for MetaLearnerConfig {
    fn default() -> Self {
        Self { dim: 256, heads: 4 }
    }
}

/// Θ_g: query, key and value projections, each `d × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaLearner {
    pub cfg: MetaLearnerConfig,
    pub params: ParamSet,
}

impl MetaLearner {
    pub fn new(cfg: MetaLearnerConfig, seed: u64) -> Result<Self> {
        Self::check(cfg)?;
        let mut r = rng::stream(seed, &[STREAM_TAG]);
        let mut params = ParamSet::new();
        for name in [WQ, WK, WV] {
            params.insert(name, Tensor::xavier(cfg.dim, cfg.dim, &mut r));
        }
        Ok(Self { cfg, params })
    }

    pub fn from_params(cfg: MetaLearnerConfig, params: ParamSet) -> Result<Self> {
        Self::check(cfg)?;
        for name in [WQ, WK, WV] {
            match params.get(name) {
                Some(t) if t.shape() == [cfg.dim, cfg.dim] => {}
                Some(t) => {
                    return Err(Error::Shape(format!(
                        "meta learner `{name}` has shape {:?}, expected [{d}, {d}]",
                        t.shape(),
                        d = cfg.dim
                    )))
                }
                None => return Err(Error::Format(format!("meta learner parameter `{name}` missing"))),
            }
        }
        Ok(Self { cfg, params })
    }

    fn check(cfg: MetaLearnerConfig) -> Result<()> {
        if cfg.dim == 0 || cfg.heads == 0 || !cfg.dim.is_multiple_of(cfg.heads) {
            return Err(Error::Validation(format!(
                "meta learner needs heads dividing dim, got dim={} heads={}",
                cfg.dim, cfg.heads
            )));
        }
        Ok(())
    }

    /// Record `h̃ = mean_rows(Attention(XW_q, XW_k, XW_v))` on the tape, where
    /// the rows of `X` are `inputs`.
    pub fn embed_on_tape(&self, tape: &mut Tape, bound: &Bound, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::EmptyNeighborhood("meta embedding of an empty neighbor set".into()));
        }
        let x = tape.stack(inputs)?;
        let q = tape.matmul(x, bound.var(WQ))?;
        let k = tape.matmul(x, bound.var(WK))?;
        let v = tape.matmul(x, bound.var(WV))?;
        let att = tape.scaled_dot_attention(q, k, v, self.cfg.heads)?;
        tape.mean_rows(att)
    }

    /// Forward-only meta embedding.
    pub fn meta_embed(&self, first_order_inits: &[&[f64]]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xs: Vec<Var> = first_order_inits.iter().map(|r| tape.constant_vec(r)).collect();
        let h = self.embed_on_tape(&mut tape, &bound, &xs)?;
        Ok(tape.value(h).data().to_vec())
    }
}

/// One pass over the targets in shuffled mini-batches.
///
/// Each target gets a fresh K-shot first-order sample; the loss is
/// `1 − cos(h̃, h)` against its ground truth. Returns the mean loss of the
/// epoch, evaluated before each batch's update.
pub fn train_epoch(
    learner: &mut MetaLearner,
    adam: &Adam,
    state: &mut AdamState,
    data: &PretrainData<'_>,
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<f64> {
    if data.targets.is_empty() {
        return Err(Error::EmptyDataset("meta learner has no training targets".into()));
    }
    let ep_seed = rng::derive_seed(cfg.seed, &[STREAM_TAG, epoch]);
    let mut order = data.targets.to_vec();
    order.shuffle(&mut rng::stream(ep_seed, &[u64::MAX]));
    let mut total = 0.0;
    for batch in order.chunks(cfg.batch_size.max(1)) {
        let snapshot = &*learner;
        let acc = accumulate(batch, cfg.parallel, |&t| {
            let ep = build_episode(data.graph, t, data.k, 1, ep_seed)?;
            let mut tape = Tape::new();
            let bound = snapshot.params.bind(&mut tape, true);
            let mut inputs = NodeInputs::new(data.init, false);
            let xs = ep
                .first_hop()
                .into_iter()
                .map(|v| inputs.get(&mut tape, v))
                .collect::<Result<Vec<_>>>()?;
            let h = snapshot.embed_on_tape(&mut tape, &bound, &xs)?;
            let truth = tape.constant_vec(data.truth.try_row(t)?);
            let loss = reconstruction_loss(&mut tape, h, truth)?;
            let grads = tape.backward(loss)?;
            Ok((tape.value(loss).item(), vec![bound.gradients(&grads)]))
        })?;
        total += acc.loss;
        let g = acc.mean_grads();
        adam.step(&mut learner.params, &g[0], state)?;
    }
    let mean = total / order.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite(format!("meta learner loss at epoch {epoch}")));
    }
    Ok(mean)
}

/// Mean reconstruction loss of the meta embedding, without updates.
pub fn evaluate(learner: &MetaLearner, data: &PretrainData<'_>, seed: u64) -> Result<f64> {
    let ep_seed = rng::derive_seed(seed, &[STREAM_TAG, u64::MAX]);
    let acc = accumulate(data.targets, false, |&t| {
        let ep = build_episode(data.graph, t, data.k, 1, ep_seed)?;
        let rows: Vec<&[f64]> = ep.first_hop().into_iter().map(|v| data.init.row(v)).collect();
        let h = learner.meta_embed(&rows)?;
        let c = crate::numerics::tensor::cosine(&h, data.truth.try_row(t)?)
            .ok_or_else(|| Error::ZeroNorm(format!("meta embedding of {t}")))?;
        Ok((1.0 - c, Vec::new()))
    })?;
    Ok(acc.mean_loss())
}

/// Train Θ_g from scratch-or-given parameters until the epoch budget or a
/// loss plateau. Returns per-epoch mean losses.
pub fn train_meta_learner(learner: &mut MetaLearner, data: &PretrainData<'_>, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let adam = Adam::new(cfg.lr);
    let mut state = adam.init(&learner.params);
    let mut losses = Vec::new();
    for epoch in 0..cfg.epochs {
        let l = train_epoch(learner, &adam, &mut state, data, cfg, epoch as u64)?;
        debug!("meta learner epoch {epoch}: loss {l:.6}");
        losses.push(l);
        if plateaued(&losses, cfg.plateau_window, cfg.plateau_tol) {
            break;
        }
    }
    Ok(losses)
}
