//! Run configuration: one TOML file, dotted overrides from the command line,
//! validation that reports every problem at once, and a fingerprint of the
//! canonical form.

use std::path::{Path, PathBuf};

use coldgnn::dataio::{InputFormat, Side};
use coldgnn::encoder::{Activation, AggregatorKind, EncoderConfig};
use coldgnn::evalrec::FinetuneConfig;
use coldgnn::ground_truth::GroundTruthConfig;
use coldgnn::orchestrator::{TrainingSchedule, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Parallel episode work. Results are identical either way; off by
    /// default.
    pub parallel: bool,
    pub data: DataSection,
    pub ground_truth: GroundTruthSection,
    pub model: ModelSection,
    pub schedule: ScheduleSection,
    pub finetune: FinetuneSection,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: PathBuf,
    pub format: InputFormat,
    /// Which side the cold-start targets come from.
    pub side: Side,
    /// Degree cutoffs `n_u` and `n_i`: nodes with more interactions are
    /// meta-training targets.
    pub user_threshold: usize,
    pub item_threshold: usize,
    /// Keep only this many highest-degree users and their items; 0 keeps all.
    pub max_users: usize,
    pub train_ratio: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundTruthSection {
    pub epochs: usize,
    pub lr: f64,
    pub reg: f64,
    pub batch_size: usize,
    pub init_std: f64,
    pub plateau_window: usize,
    pub plateau_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: Variant,
    pub dim: usize,
    pub layers: usize,
    pub aggregator: AggregatorKind,
    pub activation: Activation,
    pub heads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// Epoch budgets of stages g, f, s and joint.
    pub epochs: [usize; 4],
    pub lrs: [f64; 4],
    pub lambda_blend: f64,
    pub batch_size: usize,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub trajectories: usize,
    pub reward_baseline: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub tune_sampler: bool,
    /// Leading share of each cold user's interactions used for training.
    pub train_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k_metric: usize,
    pub sweep_layers: Vec<usize>,
    pub sweep_variants: Vec<Variant>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("run"),
            seed: 0,
            parallel: false,
            data: DataSection::default(),
            ground_truth: GroundTruthSection::default(),
            model: ModelSection::default(),
            schedule: ScheduleSection::default(),
            finetune: FinetuneSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            format: InputFormat::TsvTriples,
            side: Side::User,
            user_threshold: 60,
            item_threshold: 60,
            max_users: 0,
            train_ratio: 0.7,
            k: 3,
        }
    }
}

impl Default for GroundTruthSection {
    fn default() -> Self {
        let g = GroundTruthConfig::default();
        Self {
            epochs: g.max_epochs,
            lr: g.lr,
            reg: g.reg,
            batch_size: g.batch_size,
            init_std: g.init_std,
            plateau_window: g.plateau_window,
            plateau_tol: g.plateau_tol,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            variant: Variant::Full,
            dim: e.dim,
            layers: e.layers,
            aggregator: e.aggregator,
            activation: e.activation,
            heads: 4,
        }
    }
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = TrainingSchedule::default();
        Self {
            epochs: s.epochs,
            lrs: s.lrs,
            lambda_blend: s.lambda_blend,
            batch_size: s.batch_size,
            plateau_window: s.plateau_window,
            plateau_tol: s.plateau_tol,
            trajectories: s.trajectories,
            reward_baseline: s.reward_baseline,
        }
    }
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let f = FinetuneConfig::default();
        Self {
            epochs: f.epochs,
            lr: f.lr,
            batch_size: f.batch_size,
            tune_sampler: f.tune_sampler,
            train_fraction: 0.1,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k_metric: 20,
            sweep_layers: vec![1, 2, 3, 4],
            sweep_variants: Variant::ALL.to_vec(),
        }
    }
}

/// Every dotted key path a table carries, depth first.
fn key_paths(v: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    if let toml::Value::Table(t) = v {
        for (k, child) in t {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            out.push(path.clone());
            key_paths(child, &path, out);
        }
    }
}

fn lookup<'a>(v: &'a toml::Value, path: &str) -> Option<&'a toml::Value> {
    path.split('.').try_fold(v, |cur, k| cur.as_table()?.get(k))
}

/// Parse `key.path=value`; the value is read as TOML and falls back to a
/// bare string.
fn parse_override(s: &str) -> Result<(String, toml::Value), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("override `{s}` is not of the form key=value"))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), String> {
    let mut cur = root;
    let mut parts = path.split('.').peekable();
    while let Some(k) = parts.next() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| format!("override `{path}`: `{k}` is inside a non-table value"))?;
        if parts.peek().is_none() {
            table.insert(k.to_string(), value);
            return Ok(());
        }
        cur = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(format!("override `{path}` has an empty key"))
}

impl RunConfig {
    /// Read `file` (if any), apply `overrides`, and validate.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut tree = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", p.display())]))?;
                toml::from_str::<toml::Table>(&text)
                    .map(toml::Value::Table)
                    .map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?
            }
            None => toml::Value::Table(toml::Table::new()),
        };
        let mut errs = Vec::new();
        for o in overrides {
            match parse_override(o).and_then(|(k, v)| set_path(&mut tree, &k, v)) {
                Ok(()) => {}
                Err(e) => errs.push(e),
            }
        }
        // unknown keys, all of them, before serde stops at the first
        let known = toml::Value::try_from(RunConfig::default()).expect("defaults serialise");
        let mut paths = Vec::new();
        key_paths(&tree, "", &mut paths);
        for p in &paths {
            let parent_known = p.rsplit_once('.').is_none_or(|(parent, _)| lookup(&known, parent).is_some_and(|v| v.is_table()));
            if parent_known && lookup(&known, p).is_none() {
                errs.push(format!("unknown key `{p}`"));
            }
        }
        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
        let cfg: RunConfig = tree.try_into().map_err(|e: toml::de::Error| CliError::Config(vec![e.message().to_string()]))?;
        let errs = cfg.validate();
        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        let d = &self.data;
        if !(d.train_ratio > 0.0 && d.train_ratio < 1.0) {
            e.push(format!("data.train_ratio must lie in (0, 1), got {}", d.train_ratio));
        }
        if d.k == 0 {
            e.push("data.k must be >= 1".into());
        }
        let g = &self.ground_truth;
        if !(g.lr > 0.0 && g.lr.is_finite()) {
            e.push(format!("ground_truth.lr must be positive, got {}", g.lr));
        }
        if !(g.reg >= 0.0 && g.reg.is_finite()) {
            e.push(format!("ground_truth.reg must be >= 0, got {}", g.reg));
        }
        if g.batch_size == 0 {
            e.push("ground_truth.batch_size must be >= 1".into());
        }
        if !(g.init_std > 0.0 && g.init_std.is_finite()) {
            e.push(format!("ground_truth.init_std must be positive, got {}", g.init_std));
        }
        let m = &self.model;
        if m.dim == 0 {
            e.push("model.dim must be >= 1".into());
        }
        if m.layers == 0 {
            e.push("model.layers must be >= 1".into());
        }
        if m.heads == 0 || (m.dim > 0 && !m.dim.is_multiple_of(m.heads)) {
            e.push(format!("model.heads must divide model.dim ({} vs {})", m.heads, m.dim));
        }
        for msg in self.schedule(self.seed).validate() {
            e.push(format!("schedule: {msg}"));
        }
        let f = &self.finetune;
        if !(f.lr >= 0.0 && f.lr.is_finite()) {
            e.push(format!("finetune.lr must be >= 0, got {}", f.lr));
        }
        if f.batch_size == 0 {
            e.push("finetune.batch_size must be >= 1".into());
        }
        if !(f.train_fraction > 0.0 && f.train_fraction < 1.0) {
            e.push(format!("finetune.train_fraction must lie in (0, 1), got {}", f.train_fraction));
        }
        let v = &self.eval;
        if v.k_metric == 0 {
            e.push("eval.k_metric must be >= 1".into());
        }
        if v.sweep_layers.is_empty() || v.sweep_layers.contains(&0) {
            e.push("eval.sweep_layers must be a nonempty list of depths >= 1".into());
        }
        if v.sweep_variants.is_empty() {
            e.push("eval.sweep_variants must not be empty".into());
        }
        e
    }

    pub fn threshold(&self) -> usize {
        match self.data.side {
            Side::User => self.data.user_threshold,
            Side::Item => self.data.item_threshold,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.model.dim,
            layers: self.model.layers,
            aggregator: self.model.aggregator,
            activation: self.model.activation,
            use_meta: self.model.variant.has_meta(),
        }
    }

    pub fn schedule(&self, seed: u64) -> TrainingSchedule {
        let s = &self.schedule;
        TrainingSchedule {
            epochs: s.epochs,
            lrs: s.lrs,
            lambda_blend: s.lambda_blend,
            batch_size: s.batch_size,
            plateau_window: s.plateau_window,
            plateau_tol: s.plateau_tol,
            trajectories: s.trajectories,
            reward_baseline: s.reward_baseline,
            seed,
            parallel: self.parallel,
        }
    }

    pub fn ground_truth(&self, seed: u64) -> GroundTruthConfig {
        let g = &self.ground_truth;
        GroundTruthConfig {
            dim: self.model.dim,
            max_epochs: g.epochs,
            lr: g.lr,
            reg: g.reg,
            batch_size: g.batch_size,
            init_std: g.init_std,
            plateau_window: g.plateau_window,
            plateau_tol: g.plateau_tol,
            seed,
        }
    }

    pub fn finetune(&self) -> FinetuneConfig {
        let f = &self.finetune;
        FinetuneConfig {
            epochs: f.epochs,
            lr: f.lr,
            batch_size: f.batch_size,
            k: self.data.k,
            tune_sampler: f.tune_sampler,
            seed: self.seed,
            parallel: self.parallel,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical config. The output directory and the
    /// parallel switch do not change results and are left out.
    pub fn fingerprint(&self) -> String {
        let canon = RunConfig {
            output_dir: PathBuf::new(),
            parallel: false,
            ..self.clone()
        };
        let json = serde_json::to_string(&canon).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
