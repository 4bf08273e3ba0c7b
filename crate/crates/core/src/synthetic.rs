//! Planted bipartite graphs with known embeddings, for controlled
//! experiments where the right answer is known in advance.
//!
//! Every node belongs to one of `clusters` groups with a random centroid.
//! A node's latent vector is its centroid plus noise, its initial embedding
//! is the latent plus more noise, and its ground truth is the mean latent of
//! its neighbors plus a little noise. Two kinds of corruption can be
//! injected:
//!
//! * cold nodes, whose initial embedding is mostly noise;
//! * noise users, who interact uniformly at random and whose latent and
//!   initial embeddings are unrelated to any cluster.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{InteractionGraph, NodeId, Side};
use crate::error::{Error, Result};
use crate::ground_truth::EmbeddingTable;
use crate::numerics::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Inclusive range of user degrees.
    pub min_degree: usize,
    pub max_degree: usize,
    /// Probability that an edge stays inside the user's cluster.
    pub in_cluster: f64,
    pub latent_noise: f64,
    pub init_noise: f64,
    /// Extra initial-embedding noise on the item side only.
    pub item_init_noise: f64,
    pub truth_noise: f64,
    /// Fraction of items that are cold, and how their initial embedding is
    /// formed: `cold_signal · latent + cold_noise · ε`.
    pub cold_item_fraction: f64,
    pub cold_signal: f64,
    pub cold_noise: f64,
    /// Probability that a drawn edge to a cold item is kept, so cold items
    /// also end up with fewer interactions.
    pub cold_exposure: f64,
    /// Share of out-of-cluster edges that land on a random cold item,
    /// giving cold items mixed-cluster neighborhoods.
    pub cold_exploration: f64,
    /// Fraction of users that are noise users, and the scale of their
    /// vectors relative to a clustered latent.
    pub noise_user_fraction: f64,
    pub noise_user_scale: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            users: 200,
            items: 200,
            dim: 16,
            clusters: 4,
            min_degree: 8,
            max_degree: 16,
            in_cluster: 0.9,
            latent_noise: 0.3,
            init_noise: 0.3,
            item_init_noise: 0.0,
            truth_noise: 0.1,
            cold_item_fraction: 0.0,
            cold_signal: 0.2,
            cold_noise: 1.0,
            cold_exposure: 1.0,
            cold_exploration: 0.0,
            noise_user_fraction: 0.0,
            noise_user_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Planted {
    pub graph: InteractionGraph,
    pub init: EmbeddingTable,
    pub truth: EmbeddingTable,
    pub latent: EmbeddingTable,
    /// Cluster of every node; `None` for noise users.
    pub cluster: Vec<Option<usize>>,
    pub cold_items: Vec<NodeId>,
    pub noise_users: Vec<NodeId>,
}

impl Planted {
    /// Users that are not noise users.
    pub fn informative_users(&self) -> Vec<NodeId> {
        self.graph
            .users()
            .filter(|u| self.noise_users.binary_search(u).is_err())
            .collect()
    }

    pub fn is_noise(&self, v: NodeId) -> bool {
        self.noise_users.binary_search(&v).is_ok()
    }
}

fn gauss(r: &mut Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let e: f64 = StandardNormal.sample(r);
            scale * e
        })
        .collect()
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    out.iter_mut().zip(x).for_each(|(o, v)| *o += a * v);
}

pub fn generate(cfg: &PlantedConfig) -> Result<Planted> {
    if cfg.users == 0 || cfg.items == 0 || cfg.clusters == 0 || cfg.dim == 0 {
        return Err(Error::Validation("planted graph needs users, items, clusters and dim".into()));
    }
    if cfg.min_degree == 0 || cfg.min_degree > cfg.max_degree || cfg.max_degree > cfg.items {
        return Err(Error::Validation(format!(
            "degree range {}..={} invalid for {} items",
            cfg.min_degree, cfg.max_degree, cfg.items
        )));
    }
    let d = cfg.dim;
    let mut r = rng::stream(cfg.seed, &[0x91a7]);
    let centroids: Vec<Vec<f64>> = (0..cfg.clusters).map(|_| gauss(&mut r, d, 1.0)).collect();

    let n_noise = (cfg.users as f64 * cfg.noise_user_fraction).round() as usize;
    let mut user_order: Vec<usize> = (0..cfg.users).collect();
    user_order.shuffle(&mut r);
    let mut is_noise_user = vec![false; cfg.users];
    for &u in &user_order[..n_noise] {
        is_noise_user[u] = true;
    }
    let user_cluster: Vec<usize> = (0..cfg.users).map(|u| u % cfg.clusters).collect();
    let item_cluster: Vec<usize> = (0..cfg.items).map(|i| i % cfg.clusters).collect();
    let by_cluster: Vec<Vec<usize>> = (0..cfg.clusters)
        .map(|c| (0..cfg.items).filter(|&i| item_cluster[i] == c).collect())
        .collect();

    let n_cold = (cfg.items as f64 * cfg.cold_item_fraction).round() as usize;
    let mut item_order: Vec<usize> = (0..cfg.items).collect();
    item_order.shuffle(&mut r);
    let mut is_cold = vec![false; cfg.items];
    for &i in &item_order[..n_cold] {
        is_cold[i] = true;
    }
    let cold_list: Vec<usize> = (0..cfg.items).filter(|&i| is_cold[i]).collect();

    let mut records = Vec::new();
    for u in 0..cfg.users {
        let deg = r.gen_range(cfg.min_degree..=cfg.max_degree);
        let mut chosen: Vec<usize> = Vec::with_capacity(deg);
        while chosen.len() < deg {
            let i = if !is_noise_user[u] && r.gen::<f64>() < cfg.in_cluster {
                *by_cluster[user_cluster[u]].choose(&mut r).expect("clusters are nonempty")
            } else if !cold_list.is_empty() && r.gen::<f64>() < cfg.cold_exploration {
                *cold_list.choose(&mut r).expect("nonempty")
            } else {
                r.gen_range(0..cfg.items)
            };
            if is_cold[i] && r.gen::<f64>() >= cfg.cold_exposure {
                continue;
            }
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
        for i in chosen {
            let ts = r.gen_range(0..1_000_000i64);
            records.push((format!("{u}"), format!("{i}"), ts));
        }
    }
    let graph = InteractionGraph::from_records(records)?;
    if graph.num_items() != cfg.items {
        return Err(Error::Validation(format!(
            "only {} of {} items received an interaction; raise degrees",
            graph.num_items(),
            cfg.items
        )));
    }

    // node ids: users 0..U map to "0".."U-1" in numeric order, likewise items
    let n = graph.num_nodes();
    let mut latent = EmbeddingTable::zeros(n, d);
    let mut init = EmbeddingTable::zeros(n, d);
    let mut cluster = vec![None; n];
    let mut noise_users = Vec::new();
    let mut cold_items = Vec::new();
    for v in graph.all_nodes() {
        let k: usize = graph.original_id(v).parse().expect("numeric planted ids");
        let (c, noisy, cold, extra) = match graph.side(v) {
            Side::User => (user_cluster[k], is_noise_user[k], false, 0.0),
            Side::Item => (item_cluster[k], false, is_cold[k], cfg.item_init_noise),
        };
        let z = if noisy {
            noise_users.push(v);
            // at scale 1, the expected norm of a clustered latent
            gauss(&mut r, d, cfg.noise_user_scale * (1.0 + cfg.latent_noise * cfg.latent_noise).sqrt())
        } else {
            cluster[v.index()] = Some(c);
            let mut z = centroids[c].clone();
            axpy(&mut z, 1.0, &gauss(&mut r, d, cfg.latent_noise));
            z
        };
        let h0 = if cold {
            cold_items.push(v);
            let mut h = gauss(&mut r, d, cfg.cold_noise);
            axpy(&mut h, cfg.cold_signal, &z);
            h
        } else {
            let mut h = z.clone();
            axpy(&mut h, 1.0, &gauss(&mut r, d, cfg.init_noise));
            axpy(&mut h, 1.0, &gauss(&mut r, d, extra));
            h
        };
        latent.row_mut(v).copy_from_slice(&z);
        init.row_mut(v).copy_from_slice(&h0);
    }
    let mut truth = EmbeddingTable::zeros(n, d);
    for v in graph.all_nodes() {
        let nb = graph.neighbors(v);
        let row = truth.row_mut(v);
        for &j in nb {
            axpy(row, 1.0 / nb.len() as f64, latent.row(j));
        }
        axpy(row, 1.0, &gauss(&mut r, d, cfg.truth_noise));
    }
    noise_users.sort();
    cold_items.sort();
    Ok(Planted {
        graph,
        init,
        truth,
        latent,
        cluster,
        cold_items,
        noise_users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let cfg = PlantedConfig {
            noise_user_fraction: 0.5,
            cold_item_fraction: 0.25,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a.graph.num_users(), 200);
        assert_eq!(a.graph.num_items(), 200);
        assert_eq!(a.noise_users.len(), 100);
        assert_eq!(a.cold_items.len(), 50);
        let b = generate(&cfg).unwrap();
        assert_eq!(a.init, b.init);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.graph.edges(), b.graph.edges());
    }

    #[test]
    fn truth_tracks_neighbor_latents() {
        let p = generate(&PlantedConfig::default()).unwrap();
        let u = p.graph.user(0);
        let rows: Vec<&[f64]> = p.graph.neighbors(u).iter().map(|&j| p.latent.row(j)).collect();
        let m = crate::numerics::tensor::mean_of(&rows);
        let c = crate::numerics::tensor::cosine(&m, p.truth.row(u)).unwrap();
        assert!(c > 0.9, "cosine {c}");
    }
}
