use std::collections::BTreeSet;

use crate::dataio::NodeId;

/// Descending score, ties broken by ascending id.
pub fn rank_items(scores: &[(NodeId, f64)]) -> Vec<NodeId> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    s.into_iter().map(|(v, _)| v).collect()
}

/// Fraction of the relevant items found in the top `k`.
pub fn recall_at_k(ranked: &[NodeId], relevant: &BTreeSet<NodeId>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|v| relevant.contains(v)).count();
    hits as f64 / relevant.len() as f64
}

/// Binary-gain NDCG with a `log2(rank + 1)` discount.
pub fn ndcg_at_k(ranked: &[NodeId], relevant: &BTreeSet<NodeId>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, v)| relevant.contains(v))
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..k.min(relevant.len())).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    dcg / ideal
}
