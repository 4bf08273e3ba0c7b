mod common;

use std::path::PathBuf;

use coldgnn::dataio::*;
use coldgnn::ground_truth::{random_table, train_transductive, GroundTruthConfig};
use coldgnn::synthetic::{generate, PlantedConfig};
use proptest::prelude::*;

fn planted() -> InteractionGraph {
    generate(&PlantedConfig::default()).unwrap().graph
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn episodes_respect_tree_invariants(seed in 0u64..10_000, k in 1usize..5, depth in 1usize..4, t in 0usize..200) {
        let g = planted();
        let ep = build_episode(&g, g.user(t), k, depth, seed).unwrap();
        ep.validate(&g).unwrap();
        prop_assert_eq!(ep.depth(), depth);
        prop_assert!(ep.hops.iter().flatten().all(|n| n.id != ep.target));
    }
}

#[test]
fn masks_differ_between_seeds() {
    let g = planted();
    let test: Vec<NodeId> = g.users().take(100).collect();
    let a = kshot_mask_testset(&g, &test, 3, 1, 1).unwrap();
    let b = kshot_mask_testset(&g, &test, 3, 1, 2).unwrap();
    assert!(test.iter().filter(|v| a.kept[v] != b.kept[v]).count() >= 1);
}

#[test]
fn masked_graph_keeps_k_edges_per_test_node() {
    let g = planted();
    let test: Vec<NodeId> = g.users().step_by(3).collect();
    let m = kshot_mask_testset(&g, &test, 3, 2, 9).unwrap();
    for v in &test {
        assert_eq!(m.graph.degree(*v), 3, "degree of {v}");
        assert_eq!(m.graph.neighbors(*v), m.kept[v].as_slice());
    }
    for u in g.users().filter(|u| !test.contains(u)) {
        assert_eq!(m.graph.degree(u), g.degree(u));
    }
}

#[test]
fn transductive_initial_embeddings() {
    let w = common::world(PlantedConfig::default(), 3, 1);
    let merged = &w.masked.graph;
    // merged edges: everything not touching a test node, plus the kept ones
    let untouched = w.p.graph.edges().iter().filter(|e| !w.split.test.contains(&e.user)).count();
    let kept: usize = w.masked.kept.values().map(Vec::len).sum();
    assert_eq!(merged.num_edges(), untouched + kept);
    // test rows and train rows never collide
    assert!(w.split.train.iter().all(|v| !w.split.test.contains(v)));

    let cfg = GroundTruthConfig { dim: 8, max_epochs: 5, ..Default::default() };
    let m = train_transductive(merged, &cfg).unwrap();
    let init = random_table(merged.num_nodes(), 8, cfg.init_std, cfg.seed);
    for v in &w.split.test {
        let moved: f64 = m.table.row(*v).iter().zip(init.row(*v)).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(moved > 0.0, "row of {v} never updated");
    }
}

fn ml1m_path() -> PathBuf {
    std::env::var_os("ML1M_RATINGS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/ml-1m/ratings.dat")))
}

#[test]
#[ignore = "needs the MovieLens-1M ratings file (set ML1M_RATINGS)"]
fn movielens_1m_statistics() {
    let g = load_interactions(&ml1m_path(), InputFormat::MovielensRatings).unwrap();
    assert_eq!((g.num_users(), g.num_items(), g.num_edges()), (6040, 3706, 1_000_209));
    let s = split_meta(&g, Side::User, 60, None).unwrap();
    assert!(s.d_t.iter().all(|&v| g.degree(v) > 60));
    assert!(s.d_n.iter().all(|&v| g.degree(v) <= 60));
    assert_eq!(s.d_t.len() + s.d_n.len(), 6040);
}
