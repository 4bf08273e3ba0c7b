//! `coldgnn`: ingest interactions, learn ground truth, pre-train in stages,
//! fine-tune and evaluate.

mod artifacts;
mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coldgnn::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(#[from] coldgnn::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
            CliError::GradCheck(_) => 5,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Staging => 3,
                ErrorKind::Data => 4,
                ErrorKind::Numeric => 5,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "coldgnn", version, about = "Pre-training graph encoders for cold-start users and items")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set model.layers=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use worker threads for episode work. Results do not change.
    #[arg(long, global = true)]
    parallel: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load interactions, split targets and mask the test nodes.
    Ingest,
    /// Learn ground-truth and initial embeddings.
    GroundTruth,
    /// Run one pre-training stage, or all remaining ones.
    Pretrain {
        /// g, f, s or joint.
        #[arg(long)]
        stage: Option<String>,
        /// Stop after this many epochs; the stage can be resumed later.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// BPR fine-tuning on the cold users' training interactions.
    Finetune {
        /// Train an encoder from scratch instead of fine-tuning.
        #[arg(long)]
        scratch: bool,
    },
    /// Spearman reconstruction score on the masked test targets.
    EvalIntrinsic,
    /// Recall and NDCG on the cold users' held-out interactions.
    EvalExtrinsic {
        /// Evaluate the from-scratch encoder.
        #[arg(long)]
        scratch: bool,
    },
    /// Intrinsic evaluation of each variant at each depth.
    SweepLayers,
    /// Finite-difference check of every differentiable block.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Gradcheck { points } = cli.command {
        return commands::gradcheck(points, cli.seed.unwrap_or(0));
    }
    let mut overrides = cli.overrides.clone();
    if let Some(o) = &cli.out {
        overrides.push(format!("output_dir={}", toml::Value::String(o.display().to_string())));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if cli.parallel {
        overrides.push("parallel=true".into());
    }
    let cfg = config::RunConfig::load(cli.config.as_deref(), &overrides)?;
    let ws = artifacts::Workspace::open(cfg)?;
    init_logging(Some(&ws));
    log::info!("config fingerprint {}", ws.fingerprint);
    let done = match cli.command {
        Command::Ingest => commands::ingest(&ws),
        Command::GroundTruth => commands::ground_truth(&ws),
        Command::Pretrain { stage, epochs } => commands::pretrain(&ws, stage.as_deref(), epochs),
        Command::Finetune { scratch } => commands::finetune(&ws, scratch),
        Command::EvalIntrinsic => commands::eval_intrinsic(&ws),
        Command::EvalExtrinsic { scratch } => commands::eval_extrinsic(&ws, scratch),
        Command::SweepLayers => commands::sweep_layers(&ws),
        Command::Gradcheck { .. } => unreachable!("handled above"),
    };
    done?;
    ws.echo_config()
}

/// Log records go to stderr and, once an output directory exists, are
/// appended to `run.log` there.
struct Tee(Option<std::fs::File>);

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        std::io::stderr().write_all(buf)?;
        if let Some(f) = &mut self.0 {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        if let Some(f) = &mut self.0 {
            f.flush()?;
        }
        std::io::stderr().flush()
    }
}

fn init_logging(ws: Option<&artifacts::Workspace>) {
    let file = ws.and_then(|w| {
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(w.path("run.log"))
            .ok()
    });
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(Tee(file))))
        .try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if matches!(cli.command, Command::Gradcheck { .. }) {
        init_logging(None);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
