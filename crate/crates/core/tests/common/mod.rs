#![allow(dead_code)]

use coldgnn::dataio::{kshot_mask_testset, split_train_test, InteractionGraph, KShotTestSet, NodeId, TrainTestSplit};
use coldgnn::synthetic::{generate, Planted, PlantedConfig};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-major `W x` with plain loops.
pub fn matvec(w: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    assert_eq!(w.len(), rows * cols);
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        for c in 0..cols {
            out[r] += w[r * cols + c] * x[c];
        }
    }
    out
}

pub fn mean(xs: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; xs[0].len()];
    for x in xs {
        for (o, v) in out.iter_mut().zip(x) {
            *o += v / xs.len() as f64;
        }
    }
    out
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// A planted graph with its 7:3 target split and K-shot masked test set.
pub struct World {
    pub p: Planted,
    pub split: TrainTestSplit,
    pub masked: KShotTestSet,
    pub k: usize,
}

impl World {
    pub fn graph(&self) -> &InteractionGraph {
        &self.masked.graph
    }
}

pub fn world(cfg: PlantedConfig, k: usize, depth: usize) -> World {
    let p = generate(&cfg).unwrap();
    let targets: Vec<NodeId> = p.informative_users();
    let split = split_train_test(&targets, 0.7, cfg.seed).unwrap();
    let masked = kshot_mask_testset(&p.graph, &split.test, k, depth, cfg.seed).unwrap();
    World { p, split, masked, k }
}
