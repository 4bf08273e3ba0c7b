mod common;

use common::{close, matvec, mean, sigmoid};
use coldgnn::dataio::build_episode;
use coldgnn::encoder::{self, encode_target, AggContext, Activation, AggregatorKind, EncoderConfig, GnnParams, PretrainData};
use coldgnn::ground_truth::EmbeddingTable;
use coldgnn::meta_agg::{encode_with_meta, meta_conv_step};
use coldgnn::meta_learner::{self, MetaLearner, MetaLearnerConfig, WK, WQ, WV};
use coldgnn::numerics::tape::{Tape, Var};
use coldgnn::numerics::tensor::Tensor;
use coldgnn::numerics::{rng, TrainConfig};
use coldgnn::synthetic::{generate, PlantedConfig};
use proptest::prelude::*;
use rand::Rng;

/// `X W` for row-major `X` (`n × d`) and `W` (`d × d`).
fn rows_times(x: &[Vec<f64>], w: &Tensor) -> Vec<Vec<f64>> {
    let d = w.rows();
    x.iter()
        .map(|row| (0..d).map(|c| (0..d).map(|k| row[k] * w.data()[k * d + c]).sum()).collect())
        .collect()
}

fn attention_oracle(m: &MetaLearner, x: &[Vec<f64>]) -> Vec<f64> {
    let (d, heads) = (m.cfg.dim, m.cfg.heads);
    let dh = d / heads;
    let q = rows_times(x, m.params.tensor(WQ));
    let k = rows_times(x, m.params.tensor(WK));
    let v = rows_times(x, m.params.tensor(WV));
    let n = x.len();
    let mut out = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
            for j in 0..n {
                let p = (scores[j] - mx).exp() / z;
                for c in cols.clone() {
                    out[i][c] += p * v[j][c];
                }
            }
        }
    }
    mean(&out)
}

fn rand_rows(r: &mut rng::Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect()).collect()
}

#[test]
fn meta_embedding_matches_attention_oracle() {
    let m = MetaLearner::new(MetaLearnerConfig { dim: 8, heads: 4 }, 1).unwrap();
    let mut r = rng::stream(5, &[]);
    for n in [1, 3, 5] {
        let x = rand_rows(&mut r, n, 8);
        let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        assert!(close(&m.meta_embed(&refs).unwrap(), &attention_oracle(&m, &x), 1e-14), "n={n}");
    }
}

proptest! {
    #[test]
    fn meta_embedding_is_a_set_function(seed in 0u64..1000, n in 1usize..6) {
        let m = MetaLearner::new(MetaLearnerConfig { dim: 8, heads: 2 }, seed).unwrap();
        let mut r = rng::stream(seed, &[1]);
        let x = rand_rows(&mut r, n, 8);
        let mut y = x.clone();
        rand::seq::SliceRandom::shuffle(y.as_mut_slice(), &mut r);
        let a: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let b: Vec<&[f64]> = y.iter().map(Vec::as_slice).collect();
        prop_assert!(close(&m.meta_embed(&a).unwrap(), &m.meta_embed(&b).unwrap(), 1e-13));
    }
}

/// Targets whose truth is the mean initial embedding of all their neighbors.
fn mean_truth_world() -> (coldgnn::synthetic::Planted, EmbeddingTable, Vec<coldgnn::dataio::NodeId>) {
    let p = generate(&PlantedConfig { min_degree: 4, max_degree: 6, ..Default::default() }).unwrap();
    let mut truth = p.truth.clone();
    let targets: Vec<_> = p.graph.users().collect();
    for &u in &targets {
        let rows: Vec<Vec<f64>> = p.graph.neighbors(u).iter().map(|&i| p.init.row(i).to_vec()).collect();
        truth.row_mut(u).copy_from_slice(&mean(&rows));
    }
    (p, truth, targets)
}

#[test]
fn learns_neighbor_mean() {
    let (p, truth, targets) = mean_truth_world();
    let data = PretrainData { graph: &p.graph, init: &p.init, truth: &truth, targets: &targets, k: 6 };
    let mut m = MetaLearner::new(MetaLearnerConfig { dim: 16, heads: 4 }, 0).unwrap();
    let cfg = TrainConfig { epochs: 60, lr: 0.01, batch_size: 16, plateau_window: 0, ..Default::default() };
    let losses = meta_learner::train_meta_learner(&mut m, &data, &cfg).unwrap();
    let last = meta_learner::evaluate(&m, &data, 0).unwrap();
    assert!(last < 0.05, "final loss {last}, first epoch {}", losses[0]);
}

#[test]
fn zero_learning_rate_and_reproducibility() {
    let (p, truth, targets) = mean_truth_world();
    let data = PretrainData { graph: &p.graph, init: &p.init, truth: &truth, targets: &targets, k: 3 };
    let fresh = MetaLearner::new(MetaLearnerConfig { dim: 16, heads: 4 }, 3).unwrap();
    let mut frozen = fresh.clone();
    let cfg = TrainConfig { epochs: 3, lr: 0.0, ..Default::default() };
    meta_learner::train_meta_learner(&mut frozen, &data, &cfg).unwrap();
    assert_eq!(frozen, fresh);

    let cfg = TrainConfig { epochs: 3, lr: 0.01, seed: 4, ..Default::default() };
    let (mut a, mut b) = (fresh.clone(), fresh.clone());
    meta_learner::train_meta_learner(&mut a, &data, &cfg).unwrap();
    meta_learner::train_meta_learner(&mut b, &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, fresh);
}

#[test]
fn meta_conv_matches_scalar_loops() {
    let d = 3;
    let mut r = rng::stream(8, &[]);
    let w: Vec<f64> = (0..d * 3 * d).map(|_| r.gen::<f64>() - 0.5).collect();
    let rows = rand_rows(&mut r, 4, d);
    let (meta, own, nbrs) = (&rows[0], &rows[1], &rows[2..]);
    let x: Vec<f64> = meta.iter().chain(own).chain(&mean(nbrs)).copied().collect();
    let want: Vec<f64> = matvec(&w, d, &x).into_iter().map(sigmoid).collect();

    let mut t = Tape::new();
    let wv = t.constant(&Tensor::matrix(d, 3 * d, w).unwrap());
    let (mv, sv) = (t.constant_vec(meta), t.constant_vec(own));
    let nv: Vec<Var> = nbrs.iter().map(|n| t.constant_vec(n)).collect();
    let got = meta_conv_step(&mut t, Activation::Sigmoid, AggregatorKind::Mean, mv, sv, &nv, wv, AggContext::default()).unwrap();
    assert!(close(t.value(got).data(), &want, 1e-15));

    let rev: Vec<Var> = nv.iter().rev().copied().collect();
    let got2 = meta_conv_step(&mut t, Activation::Sigmoid, AggregatorKind::Mean, mv, sv, &rev, wv, AggContext::default()).unwrap();
    assert!(close(t.value(got).data(), t.value(got2).data(), 1e-15));
}

#[test]
fn one_layer_meta_encoder_equals_basic() {
    let p = generate(&PlantedConfig::default()).unwrap();
    let basic = GnnParams::new(EncoderConfig { dim: 16, layers: 1, ..Default::default() }, 2).unwrap();
    let meta_p = GnnParams::new(EncoderConfig { dim: 16, layers: 1, use_meta: true, ..Default::default() }, 2).unwrap();
    let m = MetaLearner::new(MetaLearnerConfig { dim: 16, heads: 4 }, 9).unwrap();
    for u in p.graph.users().take(20) {
        let ep = build_episode(&p.graph, u, 3, 1, 1).unwrap();
        let a = encode_target(&ep, &p.graph, &p.init, &basic).unwrap();
        let b = encode_with_meta(&ep, &p.graph, &p.init, &meta_p, &m).unwrap();
        assert_eq!(a, b);
    }
    assert!(encode_with_meta(&build_episode(&p.graph, p.graph.user(0), 3, 1, 1).unwrap(), &p.graph, &p.init, &basic, &m).is_err());
}

#[test]
fn meta_encoder_deterministic() {
    let p = generate(&PlantedConfig::default()).unwrap();
    let params = GnnParams::new(EncoderConfig { dim: 16, layers: 3, use_meta: true, ..Default::default() }, 2).unwrap();
    let m = MetaLearner::new(MetaLearnerConfig { dim: 16, heads: 4 }, 9).unwrap();
    let ep = build_episode(&p.graph, p.graph.user(4), 3, 3, 1).unwrap();
    assert_eq!(
        encode_with_meta(&ep, &p.graph, &p.init, &params, &m).unwrap(),
        encode_with_meta(&ep, &p.graph, &p.init, &params, &m).unwrap()
    );
}

#[test]
fn meta_aggregation_reconstructs_cold_targets_better() {
    // cold first-order neighbors: the meta embedding of their own
    // neighborhoods carries the signal their initial embeddings lack
    let w = common::world(
        PlantedConfig { cold_item_fraction: 0.5, in_cluster: 0.7, cold_exploration: 1.0, ..Default::default() },
        8,
        2,
    );
    let data = PretrainData { graph: w.graph(), init: &w.p.init, truth: &w.p.truth, targets: &w.split.train, k: 8 };
    let tc = TrainConfig { epochs: 50, lr: 0.003, plateau_window: 0, ..Default::default() };
    let enc = EncoderConfig { dim: 16, layers: 2, ..Default::default() };

    let mut basic = GnnParams::new(enc, 1).unwrap();
    encoder::train_encoder(&mut basic, None, &data, &tc).unwrap();

    let mut m = MetaLearner::new(MetaLearnerConfig { dim: 16, heads: 4 }, 1).unwrap();
    meta_learner::train_meta_learner(&mut m, &data, &TrainConfig { lr: 0.005, ..tc }).unwrap();
    let mut meta_p = GnnParams::new(EncoderConfig { use_meta: true, ..enc }, 1).unwrap();
    encoder::train_encoder(&mut meta_p, Some(&m), &data, &tc).unwrap();

    let lb = encoder::evaluate(&basic, None, &data, 3).unwrap();
    let lm = encoder::evaluate(&meta_p, Some(&m), &data, 3).unwrap();
    assert!(lm < lb, "meta {lm} vs basic {lb}");
}
