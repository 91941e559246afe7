use std::path::{Path, PathBuf};
use std::process::ExitCode;

use angio_core::pipeline::{run_eval, run_postprocess, run_prep, AncestryKind, PipelineConfig, Stage};
use angio_core::tree_logic::AnatomyGraph;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

/// Vessel enhancement, candidate post-processing and scoring for coronary
/// angiogram segmentation.
#[derive(Parser)]
#[command(name = "angio", version, about)]
struct Cli {
    /// Pipeline config file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the enhancement recipe over a directory of images
    Prep {
        input: PathBuf,
        output: PathBuf,
        /// Run only this stage
        #[arg(long)]
        stage: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Merge, filter and validate detector predictions
    Post {
        /// Prediction files, one per detector
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        overrides: PostOverrides,
    },
    /// Score predictions against ground truth
    Eval {
        predictions: PathBuf,
        ground_truth: PathBuf,
        /// Write the JSON report here
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Validate an anatomy graph file
    GraphCheck { graph: PathBuf },
}

#[derive(Args)]
struct PostOverrides {
    /// Require every ancestor of a kept segment to be kept
    #[arg(long)]
    strict_ancestry: bool,
    #[arg(long)]
    min_area: Option<usize>,
    /// Ensemble IoU threshold
    #[arg(long)]
    iou: Option<f64>,
}

/// How a run that did not error ended.
enum Outcome {
    Done,
    Partial,
}

fn is_config_error(err: &anyhow::Error) -> bool {
    use angio_core::Error as E;
    err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<E>(),
            Some(
                E::Config(_)
                    | E::Schema(_)
                    | E::Graph(_)
                    | E::Record { .. }
                    | E::UnknownClass(_)
                    | E::Json(_)
                    | E::ImageIdMismatch(_)
                    | E::InvalidParameter(_)
            )
        )
    })
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Prep { input, output, stage, jobs } => {
            let only = stage.as_deref().map(str::parse::<Stage>).transpose()?;
            let summary = run_prep(&config, &input, &output, only, jobs)?;
            log::info!("{} images, {} outputs written", summary.images, summary.written.len());
            if summary.is_partial() {
                eprintln!("{} of {} images skipped", summary.skipped.len(), summary.images);
                for (path, why) in &summary.skipped {
                    eprintln!("  {}: {why}", path.display());
                }
                return Ok(Outcome::Partial);
            }
        }
        Command::Post { predictions, output, overrides } => {
            if overrides.strict_ancestry {
                config.ancestry = AncestryKind::Strict;
            }
            if let Some(a) = overrides.min_area {
                config.min_area = a;
            }
            if let Some(t) = overrides.iou {
                config.iou_threshold = t;
            }
            config.validate()?;
            let log = run_postprocess(&config, &predictions, &output)?;
            let removed: usize = log.images.iter().map(|i| i.removed.len()).sum();
            let kept: usize = log.images.iter().map(|i| i.kept).sum();
            log::info!("{} images: {kept} candidates kept, {removed} removed", log.images.len());
        }
        Command::Eval { predictions, ground_truth, output } => {
            let report = run_eval(&predictions, &ground_truth, output.as_deref())?;
            print!("{}", report.summary_table());
        }
        Command::GraphCheck { graph } => {
            let g = AnatomyGraph::load(&graph)?;
            let roots: Vec<&str> = g.roots().iter().map(|r| r.name()).collect();
            println!("{}: ok ({} segments, roots {})", graph.display(), g.vertex_count(), roots.join(", "));
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
