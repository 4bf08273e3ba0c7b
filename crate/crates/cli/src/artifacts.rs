//! Files in the output directory and the fingerprint checks that chain
//! commands together.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use coldgnn::dataio::{load_interactions, InputFormat, InteractionGraph, NodeId, Side};
use coldgnn::evalrec::RecommenderHead;
use coldgnn::ground_truth::EmbeddingTable;
use coldgnn::numerics::params::ParamSet;
use coldgnn::orchestrator::{self, checkpoint, ModelState};
use coldgnn::Error;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const GRAPH: &str = "graph.tsv";
pub const SPLIT: &str = "split.json";
pub const TRUTH: &str = "truth.ckpt";
pub const INIT: &str = "init.ckpt";
pub const MODEL: &str = "model.ckpt";
pub const FINETUNED: &str = "finetuned.ckpt";
pub const HEAD: &str = "head.ckpt";
pub const SCRATCH: &str = "scratch.ckpt";

/// Target partition, stored with original ids so it survives reloading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub fingerprint: String,
    pub side: Side,
    pub d_t: Vec<String>,
    pub d_n: Vec<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// Neighbors each test target keeps after K-shot masking.
    pub kept: BTreeMap<String, Vec<String>>,
    /// Cold users' leading interactions (training) and the rest (held out).
    pub cold_train: BTreeMap<String, Vec<String>>,
    pub cold_test: BTreeMap<String, Vec<String>>,
    /// Cold users with no leading interaction to train on.
    pub cold_excluded: Vec<String>,
}

/// [`SplitFile`] resolved against a loaded graph.
pub struct Split {
    pub train: Vec<NodeId>,
    pub test: Vec<NodeId>,
    pub kept: BTreeMap<NodeId, Vec<NodeId>>,
    pub cold_train: BTreeMap<NodeId, Vec<NodeId>>,
    pub cold_test: BTreeMap<NodeId, Vec<NodeId>>,
}

pub struct Workspace {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub fingerprint: String,
}

fn staging(msg: String) -> CliError {
    CliError::Core(Error::Staging(msg))
}

impl Workspace {
    pub fn open(cfg: RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output_dir.clone();
        fs::create_dir_all(&dir)?;
        let fingerprint = cfg.fingerprint();
        Ok(Self { cfg, dir, fingerprint })
    }

    /// Echo the effective config, after a command has succeeded.
    pub fn echo_config(&self) -> Result<(), CliError> {
        self.write(
            "config.toml",
            format!("# fingerprint {}\n{}", self.fingerprint, self.cfg.to_toml()).as_bytes(),
        )
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write through a temporary file so readers never see half a file.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let tmp = self.path(&format!("{name}.partial"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.path(name))?;
        Ok(())
    }

    fn require(&self, name: &str, producer: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(staging(format!("{} is missing; run `{producer}` first", p.display())))
        }
    }

    fn check_fingerprint(&self, name: &str, found: Option<&str>) -> Result<(), CliError> {
        match found {
            Some(f) if f == self.fingerprint => Ok(()),
            Some(f) => Err(CliError::Config(vec![format!(
                "{name} was produced under config fingerprint {f}, the current config has {}",
                self.fingerprint
            )])),
            None => Err(CliError::Core(Error::Format(format!("{name} carries no config fingerprint")))),
        }
    }

    pub fn load_raw(&self) -> Result<InteractionGraph, CliError> {
        let p = &self.cfg.data.path;
        if p.as_os_str().is_empty() {
            return Err(CliError::Config(vec!["data.path is required to ingest".into()]));
        }
        Ok(load_interactions(p, self.cfg.data.format)?)
    }

    pub fn graph(&self) -> Result<InteractionGraph, CliError> {
        let p = self.require(GRAPH, "ingest")?;
        Ok(load_interactions(&p, InputFormat::TsvTriples)?)
    }

    pub fn save_split(&self, s: &SplitFile) -> Result<(), CliError> {
        self.write(SPLIT, serde_json::to_string_pretty(s).map_err(Error::from)?.as_bytes())
    }

    pub fn split(&self, g: &InteractionGraph) -> Result<Split, CliError> {
        let p = self.require(SPLIT, "ingest")?;
        let s: SplitFile = serde_json::from_slice(&fs::read(p)?).map_err(Error::from)?;
        self.check_fingerprint(SPLIT, Some(&s.fingerprint))?;
        let side = s.side;
        let one = |side: Side, id: &str| {
            g.lookup(side, id)
                .ok_or_else(|| CliError::Core(Error::UnknownNode(format!("{side} {id} in {SPLIT}"))))
        };
        let many = |side: Side, ids: &[String]| ids.iter().map(|id| one(side, id)).collect::<Result<Vec<_>, _>>();
        let map = |m: &BTreeMap<String, Vec<String>>, ks: Side| -> Result<BTreeMap<NodeId, Vec<NodeId>>, CliError> {
            m.iter()
                .map(|(k, vs)| {
                    let mut v = many(ks.other(), vs)?;
                    v.sort();
                    Ok((one(ks, k)?, v))
                })
                .collect()
        };
        Ok(Split {
            train: many(side, &s.train)?,
            test: many(side, &s.test)?,
            kept: map(&s.kept, side)?,
            cold_train: map(&s.cold_train, Side::User)?,
            cold_test: map(&s.cold_test, Side::User)?,
        })
    }

    fn save_table(&self, name: &str, t: &EmbeddingTable) -> Result<(), CliError> {
        let mut m = IndexMap::new();
        m.insert("table".to_string(), t.to_tensor());
        let meta = serde_json::json!({ "fingerprint": self.fingerprint, "kind": name });
        checkpoint::write_file(&self.path(name), &m, &meta)?;
        Ok(())
    }

    fn table(&self, name: &str) -> Result<EmbeddingTable, CliError> {
        let p = self.require(name, "ground-truth")?;
        let (m, meta) = checkpoint::read_file(&p)?;
        self.check_fingerprint(name, meta["fingerprint"].as_str())?;
        let t = m
            .get("table")
            .ok_or_else(|| CliError::Core(Error::Format(format!("{name} has no `table` record"))))?;
        Ok(EmbeddingTable::from_tensor(t)?)
    }

    pub fn save_tables(&self, truth: &EmbeddingTable, init: &EmbeddingTable) -> Result<(), CliError> {
        self.save_table(TRUTH, truth)?;
        self.save_table(INIT, init)
    }

    pub fn truth(&self) -> Result<EmbeddingTable, CliError> {
        self.table(TRUTH)
    }

    pub fn init(&self) -> Result<EmbeddingTable, CliError> {
        self.table(INIT)
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({ "fingerprint": self.fingerprint })
    }

    pub fn save_model(&self, name: &str, st: &ModelState) -> Result<(), CliError> {
        Ok(orchestrator::checkpoint(st, &self.meta(), &self.path(name))?)
    }

    pub fn has(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    pub fn model(&self, name: &str, producer: &str) -> Result<ModelState, CliError> {
        let p = self.require(name, producer)?;
        let (st, extra) = orchestrator::restore(&p)?;
        self.check_fingerprint(name, extra["fingerprint"].as_str())?;
        Ok(st)
    }

    pub fn save_head(&self, h: &RecommenderHead) -> Result<(), CliError> {
        let m: IndexMap<String, _> = h.params.iter().map(|(k, t)| (k.to_string(), t.clone())).collect();
        checkpoint::write_file(&self.path(HEAD), &m, &self.meta())?;
        Ok(())
    }

    pub fn head(&self) -> Result<RecommenderHead, CliError> {
        let p = self.require(HEAD, "finetune")?;
        let (m, meta) = checkpoint::read_file(&p)?;
        self.check_fingerprint(HEAD, meta["fingerprint"].as_str())?;
        let mut params = ParamSet::new();
        for (k, t) in m {
            params.insert(k, t);
        }
        Ok(RecommenderHead { params })
    }
}

/// The graph every model sees: test targets cut down to their kept
/// neighbors and cold users cut down to their leading interactions.
pub fn work_graph(g: &InteractionGraph, s: &Split) -> InteractionGraph {
    let allowed = |m: &BTreeMap<NodeId, Vec<NodeId>>, owner: NodeId, other: NodeId| {
        m.get(&owner).is_none_or(|vs| vs.binary_search(&other).is_ok())
    };
    g.filter_edges(|e| {
        allowed(&s.kept, e.user, e.item)
            && allowed(&s.kept, e.item, e.user)
            && allowed(&s.cold_train, e.user, e.item)
    })
}

pub fn names(g: &InteractionGraph, ids: &[NodeId]) -> Vec<String> {
    ids.iter().map(|&v| g.original_id(v).to_string()).collect()
}

pub fn name_map(g: &InteractionGraph, m: &BTreeMap<NodeId, Vec<NodeId>>) -> BTreeMap<String, Vec<String>> {
    m.iter().map(|(k, vs)| (g.original_id(*k).to_string(), names(g, vs))).collect()
}
