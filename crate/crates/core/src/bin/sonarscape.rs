//! Command-line front-end for the sonar road-surface pipeline.
//!
//! All stages read one TOML config (see `RunConfig`); flags override file
//! values. The `SONARSCAPE_THREADS` environment variable caps the worker
//! thread count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sonarscape::cli::{self, ModelKind, Task};
use sonarscape::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "sonarscape",
    about = "3D in-air sonar road-surface pipeline: synthesis, energyscapes, classification",
    after_help = "Thread cap: set SONARSCAPE_THREADS to limit worker threads."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML). Without it, built-in defaults are used and
    /// --seed is required.
    #[arg(long, global = false)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `paths.dataset_dir`.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Overrides `paths.model_dir`.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Overrides `paths.output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, sonarscape::Error> {
        let mut cfg = match (&self.config, self.seed) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(seed)) => RunConfig::with_seed(seed),
            (None, None) => {
                return Err(sonarscape::Error::parameter(
                    "provide --config or --seed".to_string(),
                ))
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.dataset_dir {
            cfg.paths.dataset_dir = dir.clone();
        }
        if let Some(dir) = &self.model_dir {
            cfg.paths.model_dir = dir.clone();
        }
        if let Some(dir) = &self.output_dir {
            cfg.paths.output_dir = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic PDM dataset plus its JSONL manifest.
    #[command(after_help = "Config keys read: seed, paths.dataset_dir, chirp.*, signal.*, \
                            geometry.*, simulate.noise_db, simulate.classes, simulate.signature.*")]
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Decode, matched-filter, beamform and clean every recording into an
    /// energyscape file.
    #[command(after_help = "Config keys read: paths.dataset_dir, paths.output_dir, chirp.*, \
                            geometry.*, cfar.guard, cfar.train, cfar.min_floor")]
    Process {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Draw the held-out test split and the 10 stratified folds.
    #[command(after_help = "Config keys read: seed, paths.dataset_dir, paths.output_dir, \
                            experiment.min_class_count")]
    Split {
        #[command(flatten)]
        config: ConfigArgs,
        /// Label space to stratify on: material or damage.
        #[arg(long, default_value = "material")]
        task: String,
    },
    /// Fit the vector pipeline and export features for every sample.
    #[command(after_help = "Config keys read: paths.*, features.pool_kernel, \
                            features.n_components, experiment.min_class_count")]
    Featurize {
        #[command(flatten)]
        config: ConfigArgs,
        /// Fit on this fold's training split (needs `split` first); fits on
        /// all samples when omitted.
        #[arg(long)]
        fold: Option<usize>,
        /// Fold plan to use when --fold is given.
        #[arg(long, default_value = "material")]
        task: String,
    },
    /// Train one model on one fold's training split.
    #[command(after_help = "Config keys read: seed, paths.*, models.logreg_c, \
                            models.forest_trees, experiment.model_seeds, \
                            experiment.min_class_count")]
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model kind: logreg, tree or forest.
        #[arg(long)]
        model: String,
        #[arg(long)]
        fold: usize,
        #[arg(long, default_value = "material")]
        task: String,
    },
    /// Calibrate Youden thresholds on validation and evaluate a stored model.
    #[command(after_help = "Config keys read: paths.*, experiment.min_class_count")]
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        model: String,
        #[arg(long)]
        fold: usize,
        #[arg(long, default_value = "material")]
        task: String,
    },
    /// Run the full protocol: split, per-fold pipeline + models, Youden
    /// calibration, metrics tables over folds x seeds.
    #[command(after_help = "Config keys read: seed, paths.*, features.*, models.*, \
                            experiment.model_seeds, experiment.min_class_count")]
    Experiment {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "material")]
        task: String,
    },
    /// Render an energyscape file to a PPM heatmap plus a CSV dump.
    #[command(after_help = "Config keys read: none (pure file-to-file)")]
    Render {
        /// Energyscape file (.esc binary or .csv).
        scape: PathBuf,
        /// Output image path (PPM).
        out: PathBuf,
    },
}

fn run() -> Result<(), sonarscape::Error> {
    match Cli::parse().command {
        Command::Simulate { config } => {
            cli::cmd_simulate(&config.resolve()?)?;
        }
        Command::Process { config } => {
            let summary = cli::cmd_process(&config.resolve()?)?;
            println!(
                "process: {} energyscapes written, {} failures",
                summary.produced,
                summary.failed.len()
            );
            if !summary.failed.is_empty() {
                for (path, err) in &summary.failed {
                    eprintln!("failed: {}: {}", path, err);
                }
                return Err(sonarscape::Error::parameter(format!(
                    "{} recordings failed to process",
                    summary.failed.len()
                )));
            }
        }
        Command::Split { config, task } => {
            cli::cmd_split(&config.resolve()?, task.parse::<Task>()?)?;
        }
        Command::Featurize { config, fold, task } => {
            cli::cmd_featurize(&config.resolve()?, task.parse::<Task>()?, fold)?;
        }
        Command::Train {
            config,
            model,
            fold,
            task,
        } => {
            cli::cmd_train(
                &config.resolve()?,
                task.parse::<Task>()?,
                model.parse::<ModelKind>()?,
                fold,
            )?;
        }
        Command::Evaluate {
            config,
            model,
            fold,
            task,
        } => {
            cli::cmd_evaluate(
                &config.resolve()?,
                task.parse::<Task>()?,
                model.parse::<ModelKind>()?,
                fold,
            )?;
        }
        Command::Experiment { config, task } => {
            cli::cmd_experiment(&config.resolve()?, task.parse::<Task>()?)?;
        }
        Command::Render { scape, out } => {
            cli::cmd_render(&scape, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(threads) = std::env::var("SONARSCAPE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
