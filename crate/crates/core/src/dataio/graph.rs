use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    User,
    Item,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::User => Side::Item,
            Side::Item => Side::User,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::User => write!(f, "user"),
            Side::Item => write!(f, "item"),
        }
    }
}

/// Dense global node index: users occupy `0..num_users`, items follow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub user: NodeId,
    pub item: NodeId,
    pub timestamp: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    TsvTriples,
    MovielensRatings,
}

/// Bipartite user-item interaction graph with a fixed dense index space.
///
/// Graphs produced by [`load_interactions`] have no isolated nodes. Graphs
/// derived with [`InteractionGraph::filter_edges`] keep the parent's index
/// space, so nodes may lose every edge there.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<NodeId>>,
}

fn canonical_order(ids: &mut [String]) {
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<u64>().unwrap());
    } else {
        ids.sort();
    }
}

impl InteractionGraph {
    /// Build from raw `(user, item, timestamp)` records. Duplicate pairs are
    /// merged, keeping the earliest timestamp. Ids are remapped densely in
    /// numeric order when every id is an integer, lexicographic otherwise.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, i64)>,
    {
        let mut pairs: HashMap<(String, String), i64> = HashMap::new();
        for (u, i, ts) in records {
            pairs
                .entry((u, i))
                .and_modify(|t| *t = (*t).min(ts))
                .or_insert(ts);
        }
        if pairs.is_empty() {
            return Err(Error::EmptyDataset("no interaction records".into()));
        }
        let mut user_ids: Vec<String> = pairs.keys().map(|(u, _)| u.clone()).collect();
        user_ids.sort();
        user_ids.dedup();
        canonical_order(&mut user_ids);
        let mut item_ids: Vec<String> = pairs.keys().map(|(_, i)| i.clone()).collect();
        item_ids.sort();
        item_ids.dedup();
        canonical_order(&mut item_ids);

        let uidx: HashMap<&str, u32> = user_ids
            .iter()
            .enumerate()
            .map(|(k, s)| (s.as_str(), k as u32))
            .collect();
        let nu = user_ids.len() as u32;
        let iidx: HashMap<&str, u32> = item_ids
            .iter()
            .enumerate()
            .map(|(k, s)| (s.as_str(), nu + k as u32))
            .collect();
        let edges = pairs
            .iter()
            .map(|((u, i), ts)| Edge {
                user: NodeId(uidx[u.as_str()]),
                item: NodeId(iidx[i.as_str()]),
                timestamp: *ts,
            })
            .collect();
        Ok(Self::from_parts(user_ids, item_ids, edges))
    }

    fn from_parts(user_ids: Vec<String>, item_ids: Vec<String>, mut edges: Vec<Edge>) -> Self {
        edges.sort_by_key(|e| (e.user, e.item));
        edges.dedup_by_key(|e| (e.user, e.item));
        let n = user_ids.len() + item_ids.len();
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.user.index()].push(e.item);
            adjacency[e.item.index()].push(e.user);
        }
        for a in &mut adjacency {
            a.sort();
        }
        Self {
            user_ids,
            item_ids,
            edges,
            adjacency,
        }
    }

    /// Same index space, subset of edges.
    pub fn filter_edges(&self, mut keep: impl FnMut(&Edge) -> bool) -> Self {
        let edges = self.edges.iter().filter(|e| keep(e)).copied().collect();
        Self::from_parts(self.user_ids.clone(), self.item_ids.clone(), edges)
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn side(&self, v: NodeId) -> Side {
        if v.index() < self.user_ids.len() {
            Side::User
        } else {
            Side::Item
        }
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.adjacency.len()
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v.index()]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.index()].len()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.index()].binary_search(&b).is_ok()
    }

    pub fn user(&self, k: usize) -> NodeId {
        NodeId(k as u32)
    }

    pub fn item(&self, k: usize) -> NodeId {
        NodeId((self.user_ids.len() + k) as u32)
    }

    pub fn users(&self) -> impl Iterator<Item = NodeId> {
        (0..self.user_ids.len() as u32).map(NodeId)
    }

    pub fn items(&self) -> impl Iterator<Item = NodeId> {
        let nu = self.user_ids.len() as u32;
        (nu..nu + self.item_ids.len() as u32).map(NodeId)
    }

    pub fn nodes_of(&self, side: Side) -> Vec<NodeId> {
        match side {
            Side::User => self.users().collect(),
            Side::Item => self.items().collect(),
        }
    }

    pub fn all_nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.adjacency.len() as u32).map(NodeId)
    }

    /// Original id of a node, as it appeared in the input.
    pub fn original_id(&self, v: NodeId) -> &str {
        let k = v.index();
        if k < self.user_ids.len() {
            &self.user_ids[k]
        } else {
            &self.item_ids[k - self.user_ids.len()]
        }
    }

    pub fn lookup(&self, side: Side, original: &str) -> Option<NodeId> {
        match side {
            Side::User => self.user_ids.iter().position(|s| s == original).map(|k| self.user(k)),
            Side::Item => self.item_ids.iter().position(|s| s == original).map(|k| self.item(k)),
        }
    }

    /// Interactions of a node in chronological order; ties by (user, item).
    pub fn chronological(&self, v: NodeId) -> Vec<Edge> {
        let mut es: Vec<Edge> = self
            .neighbors(v)
            .iter()
            .map(|&o| {
                let (user, item) = if self.side(v) == Side::User { (v, o) } else { (o, v) };
                let pos = self
                    .edges
                    .binary_search_by_key(&(user, item), |e| (e.user, e.item))
                    .expect("adjacency mirrors edges");
                self.edges[pos]
            })
            .collect();
        es.sort_by_key(|e| (e.timestamp, e.user, e.item));
        es
    }

    /// Check every structural invariant.
    pub fn validate(&self, require_connected: bool) -> Result<()> {
        let nu = self.user_ids.len() as u32;
        for e in &self.edges {
            if e.user.0 >= nu || e.item.0 < nu || e.item.index() >= self.adjacency.len() {
                return Err(Error::Validation(format!("edge {e:?} is not user-item")));
            }
        }
        for (k, adj) in self.adjacency.iter().enumerate() {
            if adj.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!("neighbors of #{k} not sorted/unique")));
            }
            let side = self.side(NodeId(k as u32));
            if adj.iter().any(|&o| self.side(o) == side) {
                return Err(Error::Validation(format!("node #{k} has a same-side neighbor")));
            }
            if require_connected && adj.is_empty() {
                return Err(Error::Validation(format!("node #{k} is isolated")));
            }
        }
        Ok(())
    }

    /// Write as tab-separated `user item timestamp` triples with original ids.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "# user\titem\ttimestamp")?;
        for e in &self.edges {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.original_id(e.user),
                self.original_id(e.item),
                e.timestamp
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Edge set keyed by original ids.
    pub fn edge_set(&self) -> BTreeMap<(String, String), i64> {
        self.edges
            .iter()
            .map(|e| {
                (
                    (self.original_id(e.user).to_string(), self.original_id(e.item).to_string()),
                    e.timestamp,
                )
            })
            .collect()
    }
}

fn parse_line(line: &str, format: InputFormat, lineno: usize) -> Result<Option<(String, String, i64)>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let err = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = match format {
        InputFormat::TsvTriples => {
            if trimmed.contains('\t') {
                trimmed.split('\t').map(str::trim).collect()
            } else {
                trimmed.split_whitespace().collect()
            }
        }
        InputFormat::MovielensRatings => trimmed.split("::").collect(),
    };
    let (u, i, ts) = match (format, fields.as_slice()) {
        (InputFormat::TsvTriples, [u, i, ts]) => (*u, *i, *ts),
        (InputFormat::MovielensRatings, [u, i, rating, ts]) => {
            rating
                .parse::<f64>()
                .map_err(|_| err(format!("rating `{rating}` is not a number")))?;
            (*u, *i, *ts)
        }
        (InputFormat::TsvTriples, _) => {
            return Err(err(format!("expected 3 fields, found {}", fields.len())))
        }
        (InputFormat::MovielensRatings, _) => {
            return Err(err(format!("expected uid::mid::rating::ts, found {} fields", fields.len())))
        }
    };
    if u.is_empty() || i.is_empty() {
        return Err(err("empty id".into()));
    }
    let ts = ts
        .parse::<i64>()
        .map_err(|_| err(format!("timestamp `{ts}` is not an integer")))?;
    Ok(Some((u.to_string(), i.to_string(), ts)))
}

pub fn parse_interactions(text: &str, format: InputFormat) -> Result<InteractionGraph> {
    let mut records = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if let Some(r) = parse_line(line, format, k + 1)? {
            records.push(r);
        }
    }
    InteractionGraph::from_records(records)
}

/// Load an interaction file. Every rating event becomes one positive edge.
pub fn load_interactions(path: &Path, format: InputFormat) -> Result<InteractionGraph> {
    let bytes = fs::read(path)?;
    // MovieLens-1M ships as Latin-1; ids and numbers are ASCII either way.
    let text = String::from_utf8_lossy(&bytes);
    let g = parse_interactions(&text, format)?;
    g.validate(true)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "u1 i1 10\nu1 i2 11\nu2 i1 12\n";

    #[test]
    fn parses_triples() {
        let g = parse_interactions(TOY, InputFormat::TsvTriples).unwrap();
        assert_eq!((g.num_users(), g.num_items(), g.num_edges()), (2, 2, 3));
        let u1 = g.lookup(Side::User, "u1").unwrap();
        let names: Vec<&str> = g.neighbors(u1).iter().map(|&v| g.original_id(v)).collect();
        assert_eq!(names, vec!["i1", "i2"]);
        g.validate(true).unwrap();
    }

    #[test]
    fn duplicate_lines_are_merged() {
        let text = format!("{TOY}u1 i1 10\n");
        let g = parse_interactions(&text, InputFormat::TsvTriples).unwrap();
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn comments_and_tabs() {
        let g = parse_interactions("# header\n1\t5\t3\n2\t5\t4\n", InputFormat::TsvTriples).unwrap();
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_interactions("u1 i1 10\nu2 i2\n", InputFormat::TsvTriples).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_interactions("u1 i1 x\n", InputFormat::TsvTriples).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_interactions("# nothing\n\n", InputFormat::TsvTriples),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn movielens_format() {
        let g = parse_interactions("1::1193::5::978300760\n1::661::3::978302109\n2::1193::4::978298413\n", InputFormat::MovielensRatings).unwrap();
        assert_eq!((g.num_users(), g.num_items(), g.num_edges()), (2, 2, 3));
        // numeric ids are ordered numerically
        assert_eq!(g.original_id(g.item(0)), "661");
    }

    #[test]
    fn chronological_ties_break_by_item() {
        let g = parse_interactions("u a 5\nu b 3\nu c 3\n", InputFormat::TsvTriples).unwrap();
        let u = g.lookup(Side::User, "u").unwrap();
        let order: Vec<&str> = g.chronological(u).iter().map(|e| g.original_id(e.item)).collect();
        assert_eq!(order, vec!["b", "c", "a"]);
    }

    #[test]
    fn write_then_reload_round_trips() {
        let g = parse_interactions("u1 i1 10\nu1 i2 11\nu2 i1 12\nu3 i9 1\n", InputFormat::TsvTriples).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        g.write_tsv(&p).unwrap();
        let h = load_interactions(&p, InputFormat::TsvTriples).unwrap();
        assert_eq!(g.edge_set(), h.edge_set());
        assert_eq!(g, h);
    }
}
