use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::graph::{Edge, InteractionGraph, NodeId, Side};
use crate::error::{Error, Result};
use crate::numerics::rng;

/// Partition of one side's nodes into meta-training targets (`d_t`) and the
/// cold-start meta-test pool (`d_n`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaSplit {
    pub side: Side,
    /// Degree cutoff, `None` when the lists were supplied explicitly.
    pub threshold: Option<usize>,
    pub d_t: Vec<NodeId>,
    pub d_n: Vec<NodeId>,
}

impl MetaSplit {
    pub fn is_target(&self, v: NodeId) -> bool {
        self.d_t.binary_search(&v).is_ok()
    }

    pub fn is_cold(&self, v: NodeId) -> bool {
        self.d_n.binary_search(&v).is_ok()
    }
}

/// Split by degree (`deg > threshold` goes to `d_t`) or from explicit lists.
///
/// Explicit lists must be disjoint and name nodes of `side`; their union may
/// be a sample of the side rather than all of it.
pub fn split_meta(
    g: &InteractionGraph,
    side: Side,
    threshold: usize,
    sampled_lists: Option<(Vec<NodeId>, Vec<NodeId>)>,
) -> Result<MetaSplit> {
    if let Some((mut d_t, mut d_n)) = sampled_lists {
        for v in d_t.iter().chain(&d_n) {
            if !g.contains(*v) || g.side(*v) != side {
                return Err(Error::Validation(format!("{v} is not a known {side}")));
            }
        }
        d_t.sort();
        d_t.dedup();
        d_n.sort();
        d_n.dedup();
        let t: BTreeSet<_> = d_t.iter().collect();
        if let Some(v) = d_n.iter().find(|v| t.contains(v)) {
            return Err(Error::Validation(format!("{v} appears in both sampled lists")));
        }
        return Ok(MetaSplit {
            side,
            threshold: None,
            d_t,
            d_n,
        });
    }
    let (d_t, d_n): (Vec<NodeId>, Vec<NodeId>) = g
        .nodes_of(side)
        .into_iter()
        .partition(|&v| g.degree(v) > threshold);
    Ok(MetaSplit {
        side,
        threshold: Some(threshold),
        d_t,
        d_n,
    })
}

/// Random `train_ratio : 1 - train_ratio` split of the meta-training targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTestSplit {
    pub train: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

pub fn split_train_test(targets: &[NodeId], train_ratio: f64, seed: u64) -> Result<TrainTestSplit> {
    if !(0.0..=1.0).contains(&train_ratio) {
        return Err(Error::Validation(format!("train ratio {train_ratio} outside [0, 1]")));
    }
    let mut shuffled = targets.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut rng::stream(seed, &[0x5b11]));
    let n_train = (targets.len() as f64 * train_ratio).round() as usize;
    let mut train = shuffled[..n_train].to_vec();
    let mut test = shuffled[n_train..].to_vec();
    train.sort();
    test.sort();
    Ok(TrainTestSplit { train, test })
}

/// Per-user chronological split for the recommendation protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChronoSplit {
    pub train: Vec<Edge>,
    pub test: BTreeMap<NodeId, Vec<NodeId>>,
    /// Users whose leading fraction rounds down to zero interactions.
    pub excluded: Vec<NodeId>,
}

/// The earliest `floor(fraction · degree)` interactions of each user go to
/// training, the rest to test.
pub fn chronological_split(g: &InteractionGraph, users: &[NodeId], fraction: f64) -> ChronoSplit {
    let mut train = Vec::new();
    let mut test = BTreeMap::new();
    let mut excluded = Vec::new();
    for &u in users {
        let es = g.chronological(u);
        let n_train = (es.len() as f64 * fraction).floor() as usize;
        if n_train == 0 || n_train == es.len() {
            excluded.push(u);
            continue;
        }
        train.extend_from_slice(&es[..n_train]);
        let mut held: Vec<NodeId> = es[n_train..].iter().map(|e| e.item).collect();
        held.sort();
        test.insert(u, held);
    }
    train.sort_by_key(|e| (e.user, e.item));
    ChronoSplit {
        train,
        test,
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::graph::{parse_interactions, InputFormat};

    fn star_graph(degrees: &[usize]) -> InteractionGraph {
        let mut text = String::new();
        for (u, &d) in degrees.iter().enumerate() {
            for i in 0..d {
                text.push_str(&format!("u{u} i{i} {}\n", u * 100 + i));
            }
        }
        parse_interactions(&text, InputFormat::TsvTriples).unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        let g = star_graph(&[3, 5, 7]);
        let s = split_meta(&g, Side::User, 5, None).unwrap();
        let deg: Vec<usize> = s.d_t.iter().map(|&v| g.degree(v)).collect();
        assert_eq!(deg, vec![7]);
        let deg: Vec<usize> = s.d_n.iter().map(|&v| g.degree(v)).collect();
        assert_eq!(deg, vec![3, 5]);
    }

    #[test]
    fn zero_threshold_takes_everyone() {
        let g = star_graph(&[1, 2, 4]);
        let s = split_meta(&g, Side::User, 0, None).unwrap();
        assert_eq!(s.d_t.len(), 3);
        assert!(s.d_n.is_empty());
    }

    #[test]
    fn sampled_lists_are_validated() {
        let g = star_graph(&[1, 2, 4]);
        let (a, b) = (g.user(0), g.user(1));
        assert!(split_meta(&g, Side::User, 0, Some((vec![a], vec![a, b]))).is_err());
        assert!(split_meta(&g, Side::User, 0, Some((vec![g.item(0)], vec![b]))).is_err());
        assert!(split_meta(&g, Side::User, 0, Some((vec![NodeId(999)], vec![b]))).is_err());
        let s = split_meta(&g, Side::User, 0, Some((vec![a], vec![b]))).unwrap();
        assert_eq!(s.threshold, None);
        assert_eq!((s.d_t, s.d_n), (vec![a], vec![b]));
    }

    #[test]
    fn train_test_ratio() {
        let ids: Vec<NodeId> = (0..100).map(NodeId).collect();
        let s = split_train_test(&ids, 0.7, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (70, 30));
        assert_eq!(s, split_train_test(&ids, 0.7, 3).unwrap());
    }

    #[test]
    fn chronological_ten_percent() {
        let g = star_graph(&[20, 9]);
        let s = chronological_split(&g, &[g.user(0), g.user(1)], 0.1);
        assert_eq!(s.excluded, vec![g.user(1)]);
        assert_eq!(s.train.len(), 2);
        // earliest timestamps are i0 and i1
        assert!(s.train.iter().all(|e| e.timestamp < 2));
        assert_eq!(s.test[&g.user(0)].len(), 18);
    }
}
