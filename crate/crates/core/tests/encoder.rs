mod common;

use common::{close, matvec, mean, sigmoid};
use coldgnn::dataio::{build_episode, Episode, InteractionGraph};
use coldgnn::encoder::*;
use coldgnn::ground_truth::EmbeddingTable;
use coldgnn::numerics::rng;
use coldgnn::numerics::tape::{Tape, Var};
use coldgnn::numerics::tensor::Tensor;
use coldgnn::synthetic::{generate, PlantedConfig};
use proptest::prelude::*;
use rand::Rng;

fn rand_vec(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect()
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn attention_oracle(a: &[f64], self_embed: Option<&[f64]>, nbrs: &[Vec<f64>]) -> Vec<f64> {
    let e: Vec<f64> = nbrs
        .iter()
        .map(|n| {
            let input: Vec<f64> = match self_embed {
                Some(s) => s.iter().chain(n).copied().collect(),
                None => n.clone(),
            };
            leaky(dot(a, &input))
        })
        .collect();
    let m = e.iter().cloned().fold(f64::MIN, f64::max);
    let z: f64 = e.iter().map(|x| (x - m).exp()).sum();
    let mut out = vec![0.0; nbrs[0].len()];
    for (n, ej) in nbrs.iter().zip(&e) {
        for (o, v) in out.iter_mut().zip(n) {
            *o += (ej - m).exp() / z * v;
        }
    }
    out
}

fn lightgcn_oracle(nbrs: &[Vec<f64>], degs: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; nbrs[0].len()];
    for (n, &d) in nbrs.iter().zip(degs) {
        let c = 1.0 / ((nbrs.len() * d.min(10)) as f64).sqrt();
        for (o, v) in out.iter_mut().zip(n) {
            *o += c * v;
        }
    }
    out
}

#[test]
fn conv_step_matches_scalar_loops() {
    let d = 5;
    let mut r = rng::stream(1, &[]);
    for kind in [AggregatorKind::Mean, AggregatorKind::Attention, AggregatorKind::LightGcn] {
        let w = rand_vec(&mut r, d * 2 * d);
        let a = rand_vec(&mut r, 2 * d);
        let s = rand_vec(&mut r, d);
        let nbrs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut r, d)).collect();
        let degs = [4, 17, 1];

        let agg = match kind {
            AggregatorKind::Mean => mean(&nbrs),
            AggregatorKind::Attention => attention_oracle(&a, Some(&s), &nbrs),
            AggregatorKind::LightGcn => lightgcn_oracle(&nbrs, &degs),
        };
        let x: Vec<f64> = s.iter().chain(&agg).copied().collect();
        let want: Vec<f64> = matvec(&w, d, &x).into_iter().map(sigmoid).collect();

        let mut t = Tape::new();
        let wv = t.constant(&Tensor::matrix(d, 2 * d, w).unwrap());
        let av = t.constant_vec(&a);
        let sv = t.constant_vec(&s);
        let nv: Vec<Var> = nbrs.iter().map(|n| t.constant_vec(n)).collect();
        let ctx = AggContext { self_embed: None, score: Some(av), neighbor_degrees: Some(&degs) };
        let got = conv_step(&mut t, Activation::Sigmoid, kind, sv, &nv, wv, ctx).unwrap();
        assert!(close(t.value(got).data(), &want, 1e-14), "{kind:?}");
    }
}

#[test]
fn final_step_matches_scalar_loops() {
    let d = 4;
    let mut r = rng::stream(2, &[]);
    let w = rand_vec(&mut r, d * d);
    let nbrs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut r, d)).collect();
    let want: Vec<f64> = matvec(&w, d, &mean(&nbrs)).into_iter().map(sigmoid).collect();
    let mut t = Tape::new();
    let wv = t.constant(&Tensor::matrix(d, d, w.clone()).unwrap());
    let nv: Vec<Var> = nbrs.iter().map(|n| t.constant_vec(n)).collect();
    let got = final_step(&mut t, Activation::Sigmoid, AggregatorKind::Mean, &nv, wv, AggContext::default()).unwrap();
    assert!(close(t.value(got).data(), &want, 1e-14));

    // attention with no receiving node scores neighbors alone
    let a = rand_vec(&mut r, d);
    let want: Vec<f64> = matvec(&w, d, &attention_oracle(&a, None, &nbrs)).into_iter().map(sigmoid).collect();
    let av = t.constant_vec(&a);
    let ctx = AggContext { score: Some(av), ..Default::default() };
    let got = final_step(&mut t, Activation::Sigmoid, AggregatorKind::Attention, &nv, wv, ctx).unwrap();
    assert!(close(t.value(got).data(), &want, 1e-14));

    // singleton: σ(W · h)
    let got = final_step(&mut t, Activation::Sigmoid, AggregatorKind::Mean, &nv[..1], wv, AggContext::default()).unwrap();
    let want: Vec<f64> = matvec(&w, d, &nbrs[0]).into_iter().map(sigmoid).collect();
    assert!(close(t.value(got).data(), &want, 1e-14));
}

struct Fixture {
    graph: InteractionGraph,
    init: EmbeddingTable,
}

fn fixture() -> Fixture {
    let p = generate(&PlantedConfig { users: 40, items: 40, dim: 6, min_degree: 3, max_degree: 6, ..Default::default() }).unwrap();
    Fixture { graph: p.graph, init: p.init }
}

/// Recursive mean-aggregator encoder written directly from the update rule.
fn oracle_encode(ep: &Episode, init: &EmbeddingTable, p: &GnnParams) -> Vec<f64> {
    let d = p.cfg.dim;
    let layers = p.cfg.layers;
    let children = ep.children();
    fn rep(s: usize, h: usize, i: usize, ep: &Episode, ch: &[Vec<Vec<usize>>], init: &EmbeddingTable, p: &GnnParams, layers: usize) -> Vec<f64> {
        let id = ep.hops[h][i].id;
        if s == 0 {
            return init.row(id).to_vec();
        }
        let own = rep(s - 1, h, i, ep, ch, init, p, layers);
        let kids: Vec<Vec<f64>> = if h + 1 < ep.depth().min(layers) {
            ch[h][i].iter().map(|&j| rep(s - 1, h + 1, j, ep, ch, init, p, layers)).collect()
        } else {
            Vec::new()
        };
        let agg = if kids.is_empty() { own.clone() } else { mean(&kids) };
        let x: Vec<f64> = own.iter().chain(&agg).copied().collect();
        let w = p.params.tensor(&step_name(s));
        matvec(w.data(), w.rows(), &x).into_iter().map(sigmoid).collect()
    }
    let hop1: Vec<Vec<f64>> = (0..ep.hops[0].len())
        .map(|i| rep(layers - 1, 0, i, ep, &children, init, p, layers))
        .collect();
    let wf = p.params.tensor(FINAL_W);
    matvec(wf.data(), d, &mean(&hop1)).into_iter().map(sigmoid).collect()
}

#[test]
fn full_encoder_matches_recursive_oracle() {
    let f = fixture();
    for (layers, seed) in [(1, 0), (2, 1), (3, 2), (3, 3)] {
        let cfg = EncoderConfig { dim: 6, layers, ..Default::default() };
        let p = GnnParams::new(cfg, seed).unwrap();
        let ep = build_episode(&f.graph, f.graph.user(seed as usize), 3, layers, seed).unwrap();
        let got = encode_target(&ep, &f.graph, &f.init, &p).unwrap();
        assert!(close(&got, &oracle_encode(&ep, &f.init, &p), 1e-14), "L={layers}");
    }
}

#[test]
fn one_layer_is_final_step_over_raw_inputs() {
    let f = fixture();
    let p = GnnParams::new(EncoderConfig { dim: 6, layers: 1, ..Default::default() }, 5).unwrap();
    assert_eq!(p.params.len(), 1);
    let ep = build_episode(&f.graph, f.graph.user(3), 3, 1, 0).unwrap();
    let raw: Vec<Vec<f64>> = ep.first_hop().iter().map(|&v| f.init.row(v).to_vec()).collect();
    let want: Vec<f64> = matvec(p.params.tensor(FINAL_W).data(), 6, &mean(&raw)).into_iter().map(sigmoid).collect();
    assert!(close(&encode_target(&ep, &f.graph, &f.init, &p).unwrap(), &want, 1e-15));
}

#[test]
fn two_layer_chain_by_hand() {
    // u0 - i0 - u1: hop 1 = {i0}, hop 2 = {u1}
    let g = InteractionGraph::from_records(vec![("0".into(), "0".into(), 1), ("1".into(), "0".into(), 2)]).unwrap();
    let (u0, u1, i0) = (g.user(0), g.user(1), g.item(0));
    let mut init = EmbeddingTable::zeros(3, 2);
    init.row_mut(u0).copy_from_slice(&[9.0, 9.0]);
    init.row_mut(i0).copy_from_slice(&[1.0, -1.0]);
    init.row_mut(u1).copy_from_slice(&[0.5, 2.0]);
    let mut p = GnnParams::new(EncoderConfig { dim: 2, layers: 2, ..Default::default() }, 0).unwrap();
    *p.params.get_mut(&step_name(1)).unwrap() = Tensor::matrix(2, 4, vec![0.1, 0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8]).unwrap();
    *p.params.get_mut(FINAL_W).unwrap() = Tensor::matrix(2, 2, vec![1.0, -2.0, 0.5, 1.5]).unwrap();
    let ep = build_episode(&g, u0, 3, 2, 0).unwrap();
    assert_eq!(ep.hop_ids(1), vec![i0]);
    assert_eq!(ep.hop_ids(2), vec![u1]);

    let z1 = 0.1 * 1.0 + -0.2 + 0.3 * 0.5 + 0.4 * 2.0;
    let z2 = -0.5 * 1.0 + -0.6 + -0.7 * 0.5 + 0.8 * 2.0;
    let (a, b) = (sigmoid(z1), sigmoid(z2));
    let want = [sigmoid(a - 2.0 * b), sigmoid(0.5 * a + 1.5 * b)];
    let got = encode_target(&ep, &g, &init, &p).unwrap();
    assert!(close(&got, &want, 1e-15), "{got:?}");
}

#[test]
fn deterministic_for_fixed_episode_and_params() {
    let f = fixture();
    let p = GnnParams::new(EncoderConfig { dim: 6, layers: 3, aggregator: AggregatorKind::Attention, ..Default::default() }, 4).unwrap();
    let ep = build_episode(&f.graph, f.graph.user(7), 3, 3, 8).unwrap();
    let a = encode_target(&ep, &f.graph, &f.init, &p).unwrap();
    let b = encode_target(&ep, &f.graph, &f.init, &p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reconstruction_loss_bounds() {
    let mut t = Tape::new();
    let h = t.constant_vec(&[1.0, 2.0]);
    let cases = [([1.0, 2.0], 0.0), ([-2.0, 1.0], 1.0), ([-1.0, -2.0], 2.0)];
    for (v, want) in cases {
        let x = t.constant_vec(&v);
        let l = reconstruction_loss(&mut t, x, h).unwrap();
        assert!((t.value(l).item() - want).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn aggregation_ignores_neighbor_order(seed in 0u64..1000, n in 1usize..7, kind in 0usize..2) {
        let kind = [AggregatorKind::Mean, AggregatorKind::LightGcn][kind];
        let mut r = rng::stream(seed, &[]);
        let nbrs: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut r, 4)).collect();
        let degs: Vec<usize> = (0..n).map(|_| r.gen_range(1..20)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);

        let mut t = Tape::new();
        let w = t.constant(&Tensor::matrix(4, 4, rand_vec(&mut r, 16)).unwrap());
        let run = |t: &mut Tape, order: &[usize]| {
            let vs: Vec<Var> = order.iter().map(|&j| t.constant_vec(&nbrs[j])).collect();
            let ds: Vec<usize> = order.iter().map(|&j| degs[j]).collect();
            let ctx = AggContext { neighbor_degrees: Some(&ds), ..Default::default() };
            let out = final_step(t, Activation::Sigmoid, kind, &vs, w, ctx).unwrap();
            t.value(out).data().to_vec()
        };
        let a = run(&mut t, &(0..n).collect::<Vec<_>>());
        let b = run(&mut t, &perm);
        prop_assert!(close(&a, &b, 1e-14));
    }
}
