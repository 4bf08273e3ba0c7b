use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::graph::{InteractionGraph, NodeId};
use crate::error::{Error, Result};
use crate::numerics::rng;

/// One sampled neighbor. `parent` indexes the previous hop (0 for hop 1,
/// whose parent is the target).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeNode {
    pub id: NodeId,
    pub parent: usize,
}

/// A target node with its K-shot multi-hop sampled neighborhood.
///
/// `hops[0]` holds the first-order neighbors, `hops[l-1]` the order-`l`
/// ones. Each hop is a sampled tree level: a node appears once per parent
/// that sampled it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub target: NodeId,
    pub hops: Vec<Vec<EpisodeNode>>,
    pub k: usize,
    pub seed: u64,
}

impl Episode {
    /// Number of orders the episode was built for.
    pub fn depth(&self) -> usize {
        self.hops.len()
    }

    pub fn first_hop(&self) -> Vec<NodeId> {
        self.hops[0].iter().map(|n| n.id).collect()
    }

    pub fn hop_ids(&self, order: usize) -> Vec<NodeId> {
        self.hops
            .get(order - 1)
            .map(|h| h.iter().map(|n| n.id).collect())
            .unwrap_or_default()
    }

    /// `children[h][i]`: indices in hop `h + 1` of the children of node `i`
    /// in hop `h`.
    pub fn children(&self) -> Vec<Vec<Vec<usize>>> {
        let mut out: Vec<Vec<Vec<usize>>> = self.hops.iter().map(|h| vec![Vec::new(); h.len()]).collect();
        for h in 1..self.hops.len() {
            for (j, n) in self.hops[h].iter().enumerate() {
                out[h - 1][n.parent].push(j);
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.hops.iter().map(Vec::len).sum()
    }

    /// Check the size bound, parent adjacency and alternating-side
    /// invariants against `g`.
    pub fn validate(&self, g: &InteractionGraph) -> Result<()> {
        let target_side = g.side(self.target);
        for (h, hop) in self.hops.iter().enumerate() {
            let order = h + 1;
            let bound = self.k.checked_pow(order as u32).unwrap_or(usize::MAX);
            if hop.len() > bound {
                return Err(Error::Validation(format!(
                    "hop {order} has {} nodes, bound is {bound}",
                    hop.len()
                )));
            }
            let expected_side = if order % 2 == 1 { target_side.other() } else { target_side };
            for n in hop {
                if g.side(n.id) != expected_side {
                    return Err(Error::Validation(format!("{} at hop {order} has the wrong side", n.id)));
                }
                let parent = if h == 0 {
                    self.target
                } else {
                    match self.hops[h - 1].get(n.parent) {
                        Some(p) => p.id,
                        None => {
                            return Err(Error::Validation(format!(
                                "{} at hop {order} has dangling parent {}",
                                n.id, n.parent
                            )))
                        }
                    }
                };
                if !g.has_edge(parent, n.id) {
                    return Err(Error::Validation(format!(
                        "{} at hop {order} is not adjacent to its parent {parent}",
                        n.id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn sample_k(cands: &[NodeId], k: usize, rng: &mut rng::Rng) -> Vec<NodeId> {
    let mut picked: Vec<NodeId> = if cands.len() <= k {
        cands.to_vec()
    } else {
        cands.choose_multiple(rng, k).copied().collect()
    };
    picked.sort();
    picked
}

/// Sample a K-shot, `depth`-order episode around `target`.
///
/// Hop 1 is a uniform subset of `N(target)` of size `min(K, deg)`. Each
/// node at hop `l` then draws up to K neighbors for hop `l + 1`, excluding
/// its own parent and the target so the walk never folds back.
pub fn build_episode(g: &InteractionGraph, target: NodeId, k: usize, depth: usize, seed: u64) -> Result<Episode> {
    if !g.contains(target) {
        return Err(Error::UnknownNode(target.to_string()));
    }
    if k == 0 || depth == 0 {
        return Err(Error::Validation(format!("episode needs k >= 1 and depth >= 1, got k={k} depth={depth}")));
    }
    if g.degree(target) == 0 {
        return Err(Error::IsolatedNode(target.to_string()));
    }
    let mut r = rng::stream(seed, &[target.0 as u64]);
    let mut hops: Vec<Vec<EpisodeNode>> = Vec::with_capacity(depth);
    hops.push(
        sample_k(g.neighbors(target), k, &mut r)
            .into_iter()
            .map(|id| EpisodeNode { id, parent: 0 })
            .collect(),
    );
    for h in 1..depth {
        let mut next = Vec::new();
        for (pi, p) in hops[h - 1].iter().enumerate() {
            let grand = if h == 1 { target } else { hops[h - 2][p.parent].id };
            let cands: Vec<NodeId> = g
                .neighbors(p.id)
                .iter()
                .copied()
                .filter(|&c| c != grand && c != target)
                .collect();
            next.extend(sample_k(&cands, k, &mut r).into_iter().map(|id| EpisodeNode { id, parent: pi }));
        }
        hops.push(next);
    }
    Ok(Episode {
        target,
        hops,
        k,
        seed,
    })
}

/// Test nodes reduced to K observed neighbors.
#[derive(Clone, Debug)]
pub struct KShotTestSet {
    /// The input graph with every non-kept edge of a test node removed.
    pub graph: InteractionGraph,
    pub kept: BTreeMap<NodeId, Vec<NodeId>>,
    pub episodes: Vec<Episode>,
}

/// Keep `min(K, deg)` random neighbors per test node, then build one episode
/// per test node on the masked graph.
pub fn kshot_mask_testset(
    g: &InteractionGraph,
    test_nodes: &[NodeId],
    k: usize,
    depth: usize,
    seed: u64,
) -> Result<KShotTestSet> {
    let mut kept = BTreeMap::new();
    for &v in test_nodes {
        if !g.contains(v) {
            return Err(Error::UnknownNode(v.to_string()));
        }
        if g.degree(v) == 0 {
            return Err(Error::IsolatedNode(v.to_string()));
        }
        let mut r = rng::stream(seed, &[0x6d61_736b, v.0 as u64]);
        kept.insert(v, sample_k(g.neighbors(v), k, &mut r));
    }
    let graph = g.filter_edges(|e| {
        let ok_user = kept.get(&e.user).is_none_or(|ks| ks.binary_search(&e.item).is_ok());
        let ok_item = kept.get(&e.item).is_none_or(|ks| ks.binary_search(&e.user).is_ok());
        ok_user && ok_item
    });
    let episodes = test_nodes
        .iter()
        .map(|&v| build_episode(&graph, v, k, depth, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(KShotTestSet { graph, kept, episodes })
}
