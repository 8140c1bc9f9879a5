use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use vbow::graph::GraphVariant;
use vbow::reduce::ReductionVariant;
use vbow::refine::RefineMode;

use crate::commands::*;
use crate::config::{Overrides, PipelineConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "vbow", version, about = "Tag-guided refinement and spectral reduction of visual bag-of-words models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic visual/textual/label dataset.
    Synth,
    /// Build the tag graph and refine the visual model.
    Refine,
    /// Cluster refined visual words into high-level features.
    Reduce,
    /// Evaluate the available models with MAP.
    Eval,
    /// synth, refine, reduce and eval in sequence.
    Pipeline,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OverrideArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long = "out", global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub visual: Option<PathBuf>,
    #[arg(long, global = true)]
    pub textual: Option<PathBuf>,
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    #[arg(long, global = true)]
    pub refined: Option<PathBuf>,
    #[arg(long, global = true)]
    pub reduced: Option<PathBuf>,
    /// Graph construction: knn, sr or ssr.
    #[arg(long, global = true, value_parser = clap::value_parser!(GraphVariant))]
    pub graph: Option<GraphVariant>,
    /// Neighborhood size.
    #[arg(short = 'k', long = "k", global = true)]
    pub k: Option<usize>,
    /// Diffusion weight in (0, 1).
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long = "max-iters", global = true)]
    pub max_iters: Option<usize>,
    /// Refinement mode: iterative or closed_form.
    #[arg(long, global = true, value_parser = clap::value_parser!(RefineMode))]
    pub mode: Option<RefineMode>,
    /// Reduction variant: ssc1 or ssc2.
    #[arg(long, global = true, value_parser = clap::value_parser!(ReductionVariant))]
    pub variant: Option<ReductionVariant>,
    /// Number of high-level features.
    #[arg(long = "K", global = true)]
    pub big_k: Option<usize>,
    #[arg(long = "n-images", global = true)]
    pub n_images: Option<usize>,
    #[arg(long = "tag-noise", global = true)]
    pub tag_noise: Option<f64>,
    #[arg(long = "visual-noise", global = true)]
    pub visual_noise: Option<f64>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            output_dir: a.output_dir.clone(),
            visual: a.visual.clone(),
            textual: a.textual.clone(),
            labels: a.labels.clone(),
            refined: a.refined.clone(),
            reduced: a.reduced.clone(),
            graph: a.graph,
            k: a.k,
            alpha: a.alpha,
            tol: a.tol,
            max_iters: a.max_iters,
            mode: a.mode,
            variant: a.variant,
            big_k: a.big_k,
            n_images: a.n_images,
            tag_noise: a.tag_noise,
            visual_noise: a.visual_noise,
        }
    }
}

impl Cli {
    pub fn resolve_config(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        cfg.apply(&Overrides::from(&self.overrides))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run_command(command: Command, cfg: &PipelineConfig) -> CliResult<()> {
    match command {
        Command::Synth => cmd_synth(cfg),
        Command::Refine => cmd_refine(cfg),
        Command::Reduce => cmd_reduce(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Pipeline => cmd_pipeline(cfg),
    }
}

/// Parses arguments (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| crate::error::CliError::Config(e.to_string()))?;
    let cfg = cli.resolve_config()?;
    run_command(cli.command, &cfg)
}
