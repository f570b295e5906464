//! Command-line front end: argument parsing, TOML config merging and the
//! subcommand implementations behind the `ood` binary.

mod commands;
mod config;
mod plot;
mod sweep;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Result;

pub use config::{parse_epsilon, DEFAULT_STOCHASTIC_TRIALS, parse_reducer, FileConfig, RunConfig, SweepGrid};
pub use commands::{read_test_scores, resolve_labels, write_synthetic, EvalReport, FitReport};
pub use plot::{render_svg, InsideCount, Marker, PlotPoint, PlotSeries};
pub use sweep::{format_sweep, grid_rows, run_sweep, SweepFormat, SweepOutcome, SweepRow, SWEEP_COLUMNS};

#[derive(Debug, Parser)]
#[command(name = "ood", version, about = "Mahalanobis OOD detection on segmentation embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent experiments (sweep rows).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// Manifest CSV (`sample_id,file_path,split[,tag]`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Label CSV (`sample_id,dsc,label`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// identity | pool2d:K,S | pool3d:K,S | pca:N | tsne[:N]
    #[arg(long)]
    pub reducer: Option<String>,
    /// none | abs:E | rel:R
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub tpr_target: Option<f64>,
    /// Repetitions with consecutive seeds (stochastic reducers only).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Score against the pseudo-inverse of the unregularized covariance.
    #[arg(long)]
    pub pseudo_inverse: bool,
    /// DSC at or above which a test sample counts as ID.
    #[arg(long)]
    pub dsc_threshold: Option<f64>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub tsne_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreSplit {
    Train,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic embedding dataset with known OOD structure.
    Synth(SynthArgs),
    /// Fit a reducer and Gaussian on the training split; write a model directory.
    Fit(ExperimentArgs),
    /// Score samples by Mahalanobis distance under a fitted model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: ScoreSplit,
    },
    /// Compute AUROC, AUPR and FPR at the target TPR from a score file.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        tpr_target: Option<f64>,
        #[arg(long)]
        dsc_threshold: Option<f64>,
    },
    /// Reduce, fit, score and evaluate in one go (with trials for t-SNE).
    Run(ExperimentArgs),
    /// Evaluate the reducer grid and write CSV and Markdown tables.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Include the unreduced baseline row.
        #[arg(long)]
        baseline: bool,
        /// Print "-" for computation time, making output byte-identical across runs.
        #[arg(long)]
        no_timing: bool,
    },
    /// Draw 2-D features with 1- and 2-SD covariance ellipses as SVG.
    Plot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        dsc_threshold: Option<f64>,
        /// Leave the generation time out of the SVG.
        #[arg(long)]
        no_timestamp: bool,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Ambient tensor shape as C,D,H,W.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_id: Option<usize>,
    #[arg(long)]
    pub n_ood: Option<usize>,
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let common = &cli.common;
    match cli.command {
        Command::Synth(args) => commands::synth(&file, common, &args),
        Command::Fit(args) => commands::fit(&RunConfig::resolve(&file, common, &args)?),
        Command::Score { model, manifest, split } => {
            commands::score(&model, manifest.or(file.manifest.clone()).as_deref(), split, common.out.as_deref())
        }
        Command::Eval {
            scores,
            labels,
            tpr_target,
            dsc_threshold,
        } => {
            let args = ExperimentArgs {
                labels,
                tpr_target,
                dsc_threshold,
                ..ExperimentArgs::default()
            };
            let cfg = RunConfig::resolve_partial(&file, common, &args)?;
            commands::eval(&scores, &cfg)
        }
        Command::Run(args) => commands::run_single(&RunConfig::resolve(&file, common, &args)?),
        Command::Sweep {
            experiment,
            baseline,
            no_timing,
        } => {
            let cfg = RunConfig::resolve_partial(&file, common, &experiment)?;
            let mut grid = file.sweep.clone().unwrap_or_default();
            grid.baseline |= baseline;
            let format = SweepFormat { timing: !no_timing };
            sweep::sweep_command(&cfg, &grid, format)
        }
        Command::Plot {
            model,
            manifest,
            labels,
            dsc_threshold,
            no_timestamp,
        } => {
            let args = ExperimentArgs {
                manifest,
                labels,
                dsc_threshold,
                ..ExperimentArgs::default()
            };
            let cfg = RunConfig::resolve_partial(&file, common, &args)?;
            plot::plot_command(&model, &cfg, common.out.as_deref(), !no_timestamp)
        }
    }
}
