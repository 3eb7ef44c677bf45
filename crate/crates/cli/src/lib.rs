//! Command-line experiments for PiNet.
//!
//! Every command is a deterministic function of its flags and seed. The
//! functions behind the subcommands are public so tests can call them
//! without spawning a process.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use pinet::model::{ModelConfig, ModelKind};
use pinet::optim::OptimizerKind;
use pinet::propagation::PropagationMode;
use pinet::train::TrainConfig;

pub mod commands;
pub mod error;
pub mod output;

pub use commands::*;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "pinet",
    version,
    about = "Permutation-invariant graph classification experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the isomorphism dataset in benchmark directory format.
    GenerateIso(GenerateIsoArgs),
    /// Accuracy against training examples per class on an isomorphism dataset.
    IsoCurve(IsoCurveArgs),
    /// Compare fixed propagation corners with learned p and q.
    MpCompare(MpCompareArgs),
    /// k-fold cross-validation of every model on benchmark datasets.
    Benchmark(BenchmarkArgs),
    /// Check PiNet gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

/// Hidden sizes as `H1`, `H1,H2` or `H1,H2A,H2X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hidden {
    pub h1: usize,
    pub h2_attention: usize,
    pub h2_features: usize,
}

impl FromStr for Hidden {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        if parts.contains(&0) {
            return Err("hidden sizes must be positive".into());
        }
        match parts[..] {
            [h] => Ok(Hidden {
                h1: h,
                h2_attention: h,
                h2_features: h,
            }),
            [h1, h2] => Ok(Hidden {
                h1,
                h2_attention: h2,
                h2_features: h2,
            }),
            [h1, a, x] => Ok(Hidden {
                h1,
                h2_attention: a,
                h2_features: x,
            }),
            _ => Err(format!("expected 1 to 3 comma-separated sizes, got {s:?}")),
        }
    }
}

/// Flags shared by the training commands.
#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for trials and folds (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value = "32,64,64")]
    pub hidden: Hidden,
    /// raw_A, A_plus_I, sym_norm_A, sym_norm_A_plus_I or learned.
    #[arg(long, default_value = "sym_norm_A_plus_I")]
    pub prop_mode: PropagationMode,
}

impl Default for TrainingArgs {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        TrainingArgs {
            seed: t.seed,
            jobs: None,
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            optimizer: t.optimizer,
            hidden: Hidden {
                h1: m.hidden1,
                h2_attention: m.hidden2_attention,
                h2_features: m.hidden2_features,
            },
            prop_mode: m.prop_mode,
        }
    }
}

impl TrainingArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer: self.optimizer,
        }
    }

    /// `--prop-mode learned` turns PiNet (GCN) into its learned variant.
    pub fn model_config(&self, kind: ModelKind) -> ModelConfig {
        let kind = match (kind, self.prop_mode) {
            (ModelKind::PinetGcn, PropagationMode::Learned) => ModelKind::PinetGcnLearned,
            _ => kind,
        };
        let prop_mode = match self.prop_mode {
            PropagationMode::Learned => ModelConfig::default().prop_mode,
            m => m,
        };
        ModelConfig {
            kind,
            hidden1: self.hidden.h1,
            hidden2_attention: self.hidden.h2_attention,
            hidden2_features: self.hidden.h2_features,
            prop_mode,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateIsoArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Vertices per graph.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Edge probability of the seed graph.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub copies: usize,
    #[arg(long)]
    pub rewire_steps: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_attempts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct IsoCurveArgs {
    /// Dataset directory in benchmark format.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset name prefix; inferred when the directory holds one dataset.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,50")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "pinet-gcn")]
    pub model: Vec<ModelKind>,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also draw mean accuracy curves to this SVG file.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MpCompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// One or more dataset directories, comma separated or repeated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub data: Vec<PathBuf>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "pinet-gcn,pinet-gcn-learned,gcn-mean,gcn-dense"
    )]
    pub model: Vec<ModelKind>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Vertices in the random graph, at most 8.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenerateIso(a) => cmd_generate_iso(&a),
        Command::IsoCurve(a) => cmd_iso_curve(&a),
        Command::MpCompare(a) => cmd_mp_compare(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

/// Runs `f` on a dedicated pool of `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Finds the dataset name in `dir`: the prefix of its only `*_A.txt` file.
pub fn infer_dataset_name(dir: &Path) -> CliResult<String> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = file.strip_suffix("_A.txt") {
            names.push(stem.to_string());
        }
    }
    names.sort();
    match names.len() {
        1 => Ok(names.pop().unwrap()),
        0 => Err(CliError::Usage(format!(
            "no *_A.txt file in {}",
            dir.display()
        ))),
        _ => Err(CliError::Usage(format!(
            "{} holds several datasets ({}); pass --name",
            dir.display(),
            names.join(", ")
        ))),
    }
}

pub fn load_dataset(dir: &Path, name: Option<&str>) -> CliResult<pinet::data::Dataset> {
    let name = match name {
        Some(n) => n.to_string(),
        None => infer_dataset_name(dir)?,
    };
    Ok(pinet::data::parse_tu_dataset(dir, &name)?)
}


#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
