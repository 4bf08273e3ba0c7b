//! Ground-truth embeddings from dot-product matrix factorisation trained
//! with the BPR ranking loss.

use std::collections::BTreeMap;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{InteractionGraph, MetaSplit, NodeId, Side};
use crate::error::{Error, Result};
use crate::numerics::batch::plateaued;
use crate::numerics::rng;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::{self, Tensor};

/// Id-indexed dense rows, one per node of the graph's index space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(Error::Shape(format!("embedding table needs rank 2, got {:?}", t.shape())));
        }
        Ok(Self {
            dim: t.cols(),
            data: t.data().to_vec(),
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.rows(), self.dim, self.data.clone()).expect("table shape")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, v: NodeId) -> &[f64] {
        let k = v.index();
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, v: NodeId) -> &mut [f64] {
        let k = v.index();
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn try_row(&self, v: NodeId) -> Result<&[f64]> {
        if v.index() < self.rows() {
            Ok(self.row(v))
        } else {
            Err(Error::UnknownNode(format!("{v} has no embedding row ({} rows)", self.rows())))
        }
    }

    pub fn row_tensor(&self, v: NodeId) -> Tensor {
        Tensor::vector(self.row(v).to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthConfig {
    pub dim: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub reg: f64,
    pub batch_size: usize,
    pub init_std: f64,
    /// Stop once the relative loss improvement over `plateau_window` epochs
    /// drops below `plateau_tol`.
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub seed: u64,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            max_epochs: 50,
            lr: 0.005,
            reg: 1e-5,
            batch_size: 256,
            init_std: 0.1,
            plateau_window: 5,
            plateau_tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthModel {
    pub table: EmbeddingTable,
    pub reg: f64,
    /// Mean loss before the first update.
    pub initial_loss: f64,
    /// Mean loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
}

impl GroundTruthModel {
    pub fn score(&self, u: NodeId, i: NodeId) -> f64 {
        tensor::dot(self.table.row(u), self.table.row(i))
    }

    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().unwrap_or(&self.initial_loss)
    }
}

/// `−ln σ(y_pos − y_neg) + λ·‖θ‖²`.
pub fn bpr_loss(y_pos: f64, y_neg: f64, reg: f64, theta_norm_sq: f64) -> f64 {
    -tensor::log_sigmoid(y_pos - y_neg) + reg * theta_norm_sq
}

/// Tape version of [`bpr_loss`] over scalar nodes; the norm term is optional.
pub fn bpr_loss_var(tape: &mut Tape, y_pos: Var, y_neg: Var, reg: f64, theta_norm_sq: Option<Var>) -> Result<Var> {
    let diff = tape.sub(y_pos, y_neg)?;
    let ls = tape.log_sigmoid(diff)?;
    let nll = tape.affine(ls, -1.0, 0.0)?;
    match theta_norm_sq {
        Some(n) if reg != 0.0 => {
            let r = tape.affine(n, reg, 0.0)?;
            tape.add(nll, r)
        }
        _ => Ok(nll),
    }
}

/// Uniform item not adjacent to `u`, `None` when `u` has seen every item.
pub fn sample_negative(g: &InteractionGraph, u: NodeId, rng: &mut rng::Rng) -> Option<NodeId> {
    if g.degree(u) >= g.num_items() || g.num_items() == 0 {
        return None;
    }
    loop {
        let j = g.item(rng.gen_range(0..g.num_items()));
        if !g.has_edge(u, j) {
            return Some(j);
        }
    }
}

pub fn random_table(rows: usize, dim: usize, std: f64, seed: u64) -> EmbeddingTable {
    let mut r = rng::stream(seed, &[0x6774_696e]);
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut t = EmbeddingTable::zeros(rows, dim);
    t.data.iter_mut().for_each(|x| *x = normal.sample(&mut r));
    t
}

struct LazyAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

/// BPR matrix factorisation over every edge of `g`.
pub fn train_mf(g: &InteractionGraph, cfg: &GroundTruthConfig) -> Result<GroundTruthModel> {
    if g.num_edges() == 0 {
        return Err(Error::EmptyDataset("no edges to factorise".into()));
    }
    let d = cfg.dim;
    let mut table = random_table(g.num_nodes(), d, cfg.init_std, cfg.seed);
    let mut opt = LazyAdam {
        m: vec![0.0; table.data.len()],
        v: vec![0.0; table.data.len()],
        step: 0,
    };
    let users: Vec<NodeId> = g.edges().iter().map(|e| e.user).collect();
    let items: Vec<NodeId> = g.edges().iter().map(|e| e.item).collect();

    let triples = |epoch: u64| -> Vec<(NodeId, NodeId, NodeId)> {
        let mut r = rng::stream(cfg.seed, &[0x6d66, epoch]);
        let mut order: Vec<usize> = (0..users.len()).collect();
        order.shuffle(&mut r);
        order
            .into_iter()
            .filter_map(|k| sample_negative(g, users[k], &mut r).map(|j| (users[k], items[k], j)))
            .collect()
    };
    let sample_loss = |t: &EmbeddingTable, (u, i, j): (NodeId, NodeId, NodeId)| {
        let (ru, ri, rj) = (t.row(u), t.row(i), t.row(j));
        let norm = tensor::dot(ru, ru) + tensor::dot(ri, ri) + tensor::dot(rj, rj);
        bpr_loss(tensor::dot(ru, ri), tensor::dot(ru, rj), cfg.reg, norm)
    };

    let first = triples(0);
    if first.is_empty() {
        return Err(Error::EmptyDataset("every user has seen every item".into()));
    }
    let initial_loss = first.iter().map(|&s| sample_loss(&table, s)).sum::<f64>() / first.len() as f64;

    let mut epoch_losses = Vec::new();
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    for epoch in 0..cfg.max_epochs {
        let samples = if epoch == 0 { first.clone() } else { triples(epoch as u64) };
        let mut total = 0.0;
        for batch in samples.chunks(cfg.batch_size.max(1)) {
            let mut grads: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
            let scale = 1.0 / batch.len() as f64;
            for &(u, i, j) in batch {
                total += sample_loss(&table, (u, i, j));
                let (ru, ri, rj) = (table.row(u), table.row(i), table.row(j));
                let x = tensor::dot(ru, ri) - tensor::dot(ru, rj);
                let dx = (tensor::sigmoid(x) - 1.0) * scale;
                let two_reg = 2.0 * cfg.reg * scale;
                let gu: Vec<f64> = (0..d).map(|c| dx * (ri[c] - rj[c]) + two_reg * ru[c]).collect();
                let gi: Vec<f64> = (0..d).map(|c| dx * ru[c] + two_reg * ri[c]).collect();
                let gj: Vec<f64> = (0..d).map(|c| -dx * ru[c] + two_reg * rj[c]).collect();
                for (v, gv) in [(u, gu), (i, gi), (j, gj)] {
                    let acc = grads.entry(v).or_insert_with(|| vec![0.0; d]);
                    acc.iter_mut().zip(gv).for_each(|(a, b)| *a += b);
                }
            }
            opt.step += 1;
            let bc1 = 1.0 - b1.powi(opt.step);
            let bc2 = 1.0 - b2.powi(opt.step);
            for (v, gv) in grads {
                let off = v.index() * d;
                for c in 0..d {
                    let k = off + c;
                    opt.m[k] = b1 * opt.m[k] + (1.0 - b1) * gv[c];
                    opt.v[k] = b2 * opt.v[k] + (1.0 - b2) * gv[c] * gv[c];
                    table.data[k] -= cfg.lr * (opt.m[k] / bc1) / ((opt.v[k] / bc2).sqrt() + eps);
                }
            }
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("factorisation loss at epoch {epoch}")));
        }
        debug!("mf epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
        if plateaued(&epoch_losses, cfg.plateau_window, cfg.plateau_tol) {
            break;
        }
    }
    Ok(GroundTruthModel {
        table,
        reg: cfg.reg,
        initial_loss,
        epoch_losses,
    })
}

/// Ground truth for the meta-training targets, learned from all of their
/// observed interactions.
pub fn train_ground_truth(g: &InteractionGraph, split: &MetaSplit, cfg: &GroundTruthConfig) -> Result<GroundTruthModel> {
    if split.d_t.is_empty() {
        return Err(Error::Validation("meta-training set is empty".into()));
    }
    let model = train_mf(g, cfg)?;
    if !model.table.is_finite() {
        return Err(Error::NonFinite("ground-truth table".into()));
    }
    Ok(model)
}

/// Initial embeddings learned on the merged graph of full training
/// interactions and K-shot test interactions.
pub fn train_transductive(merged: &InteractionGraph, cfg: &GroundTruthConfig) -> Result<GroundTruthModel> {
    train_mf(merged, cfg)
}

/// Restrict a graph to the edges touching `nodes` of the given side.
pub fn side_subgraph(g: &InteractionGraph, side: Side, nodes: &[NodeId]) -> InteractionGraph {
    let mut keep = vec![false; g.num_nodes()];
    for v in nodes {
        keep[v.index()] = true;
    }
    g.filter_edges(|e| match side {
        Side::User => keep[e.user.index()],
        Side::Item => keep[e.item.index()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{parse_interactions, split_meta, InputFormat};
    use crate::numerics::grad_check;

    #[test]
    fn bpr_closed_forms() {
        assert!((bpr_loss(0.3, 0.3, 0.0, 5.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bpr_loss(1e3, 0.0, 0.0, 0.0) < 1e-300);
        // −ln σ(1) = ln(1 + e^−1)
        let oracle = (1.0 + (-1.0f64).exp()).ln();
        assert!((bpr_loss(1.0, 0.0, 0.0, 0.0) - oracle).abs() < 1e-15);
        assert!((oracle - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn bpr_gradient_checks() {
        let x = Tensor::vector(vec![0.7, -0.4, 2.0]);
        let err = grad_check(
            |t, v| {
                let a = t.dot(v, v)?;
                let b = t.sum(v)?;
                let n = t.dot(v, v)?;
                bpr_loss_var(t, a, b, 0.01, Some(n))
            },
            &x,
            1e-5,
        );
        assert!(err < 1e-5, "{err}");
    }

    fn tiny() -> InteractionGraph {
        parse_interactions("u i1 1\nv i2 2\n", InputFormat::TsvTriples).unwrap()
    }

    #[test]
    fn learns_observed_over_unobserved() {
        let g = tiny();
        let split = split_meta(&g, Side::User, 0, None).unwrap();
        let cfg = GroundTruthConfig {
            dim: 8,
            max_epochs: 200,
            lr: 0.05,
            plateau_window: 0,
            ..Default::default()
        };
        let m = train_ground_truth(&g, &split, &cfg).unwrap();
        let (u, i1, i2) = (g.user(0), g.item(0), g.item(1));
        assert!(m.score(u, i1) > m.score(u, i2));
        assert!(m.final_loss() < m.initial_loss);
    }

    #[test]
    fn heavy_regularisation_shrinks_norms() {
        let g = tiny();
        let split = split_meta(&g, Side::User, 0, None).unwrap();
        let base = GroundTruthConfig {
            dim: 8,
            max_epochs: 50,
            lr: 0.05,
            reg: 0.0,
            plateau_window: 0,
            ..Default::default()
        };
        let free = train_ground_truth(&g, &split, &base).unwrap();
        let heavy = train_ground_truth(&g, &split, &GroundTruthConfig { reg: 1e3, ..base.clone() }).unwrap();
        let norm = |m: &GroundTruthModel| m.table.to_tensor().norm_sq();
        assert!(norm(&heavy) < norm(&free));
    }

    #[test]
    fn fixed_seed_reproduces_tables() {
        let g = tiny();
        let split = split_meta(&g, Side::User, 0, None).unwrap();
        let cfg = GroundTruthConfig {
            dim: 4,
            max_epochs: 5,
            ..Default::default()
        };
        let a = train_ground_truth(&g, &split, &cfg).unwrap();
        let b = train_ground_truth(&g, &split, &cfg).unwrap();
        assert_eq!(a.table, b.table);
    }

    #[test]
    fn negatives_are_never_observed() {
        let g = parse_interactions("u a 1\nu b 1\nu c 1\nv d 1\n", InputFormat::TsvTriples).unwrap();
        let mut r = rng::stream(1, &[]);
        for _ in 0..200 {
            let j = sample_negative(&g, g.user(0), &mut r).unwrap();
            assert!(!g.has_edge(g.user(0), j));
        }
        let full = parse_interactions("u a 1\nu b 1\n", InputFormat::TsvTriples).unwrap();
        assert_eq!(sample_negative(&full, full.user(0), &mut r), None);
    }
}
