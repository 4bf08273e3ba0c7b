use coldgnn::dataio::{split_meta, Side};
use coldgnn::ground_truth::{sample_negative, train_ground_truth, GroundTruthConfig};
use coldgnn::numerics::rng;
use coldgnn::synthetic::{generate, PlantedConfig};

fn cfg() -> GroundTruthConfig {
    GroundTruthConfig { dim: 32, max_epochs: 40, lr: 0.01, plateau_window: 0, ..Default::default() }
}

#[test]
fn observed_pairs_outrank_sampled_negatives() {
    let p = generate(&PlantedConfig::default()).unwrap();
    let split = split_meta(&p.graph, Side::User, 10, None).unwrap();
    assert!(split.d_t.iter().all(|&u| p.graph.degree(u) > 10));
    assert!(split.d_n.iter().all(|&u| p.graph.degree(u) <= 10));
    let m = train_ground_truth(&p.graph, &split, &cfg()).unwrap();
    assert!(m.final_loss() < 0.5 * m.initial_loss, "{} -> {}", m.initial_loss, m.final_loss());

    let mut r = rng::stream(1, &[]);
    let (mut wins, mut n) = (0, 0);
    for e in p.graph.edges() {
        let j = sample_negative(&p.graph, e.user, &mut r).unwrap();
        wins += usize::from(m.score(e.user, e.item) > m.score(e.user, j));
        n += 1;
    }
    let auc = wins as f64 / n as f64;
    assert!(auc > 0.9, "training AUC {auc}");
}

#[test]
fn empty_target_set_is_rejected() {
    let p = generate(&PlantedConfig::default()).unwrap();
    let split = split_meta(&p.graph, Side::User, 10_000, None).unwrap();
    assert!(train_ground_truth(&p.graph, &split, &cfg()).is_err());
}
