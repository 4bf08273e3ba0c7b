use coldgnn::numerics::rng;
use coldgnn::numerics::stats::spearman;
use coldgnn::numerics::tape::Tape;
use coldgnn::numerics::tensor::{cosine, sigmoid, Tensor};
use coldgnn::numerics::{grad_check, Adam, ParamSet};
use proptest::prelude::*;
use rand::Rng;

/// Rank by counting: 1 + #smaller + half the number of other equal values.
fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &a)| {
            let less = x.iter().filter(|&&b| b < a).count() as f64;
            let ties = x.iter().enumerate().filter(|&(j, &b)| j != i && b == a).count() as f64;
            1.0 + less + ties / 2.0
        })
        .collect()
}

fn naive_spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (naive_ranks(a), naive_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma).powi(2);
        db += (rb[i] - mb).powi(2);
    }
    num / (da * db).sqrt()
}

proptest! {
    #[test]
    fn spearman_matches_rank_count_oracle(
        a in prop::collection::vec(-100.0f64..100.0, 50),
        b in prop::collection::vec(-100.0f64..100.0, 50),
    ) {
        let s = spearman(&a, &b).unwrap();
        prop_assert!((s - naive_spearman(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn spearman_with_ties_matches_oracle(
        a in prop::collection::vec(0i32..6, 20),
        b in prop::collection::vec(0i32..6, 20),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        prop_assume!(a.iter().any(|&x| x != a[0]) && b.iter().any(|&x| x != b[0]));
        let s = spearman(&a, &b).unwrap();
        prop_assert!((s - naive_spearman(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_scale_invariant(v in prop::collection::vec(0.1f64..10.0, 1..8), k in 0.1f64..50.0) {
        let w: Vec<f64> = v.iter().map(|x| x * k).collect();
        prop_assert!((cosine(&v, &w).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn thousand_random_pairs() {
    let mut r = rng::stream(11, &[]);
    for _ in 0..1000 {
        let a: Vec<f64> = (0..50).map(|_| r.gen::<f64>()).collect();
        let b: Vec<f64> = (0..50).map(|_| r.gen::<f64>()).collect();
        assert!((spearman(&a, &b).unwrap() - naive_spearman(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn closed_forms() {
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), Some(0.0));
    assert_eq!(sigmoid(0.0), 0.5);
    let mut t = Tape::new();
    let z = t.constant_vec(&[0.0, 0.0, 0.0]);
    let s = t.softmax(z).unwrap();
    assert!(t.value(s).data().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn cosine_loss_gradient() {
    let mut r = rng::stream(3, &[]);
    let x = Tensor::vector((0..6).map(|_| r.gen::<f64>() - 0.5).collect());
    let target = [0.4, -1.0, 0.3, 0.9, 0.1, -0.2];
    let err = grad_check(
        |t, v| {
            let h = t.constant_vec(&target);
            let c = t.cosine(v, h)?;
            t.affine(c, -1.0, 1.0)
        },
        &x,
        1e-6,
    );
    assert!(err < 1e-5, "{err}");
}

#[test]
fn adam_on_a_quadratic() {
    let adam = Adam::new(0.05);
    let mut p = ParamSet::new();
    p.insert("x", Tensor::vector(vec![1.0]));
    let mut st = adam.init(&p);
    for _ in 0..100 {
        let x = p.tensor("x").item();
        let mut g = ParamSet::new();
        g.insert("x", Tensor::vector(vec![2.0 * x]));
        adam.step(&mut p, &g, &mut st).unwrap();
    }
    assert!(p.tensor("x").item().abs() < 0.1);
}
