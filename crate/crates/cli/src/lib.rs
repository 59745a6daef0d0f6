//! Command-line surface for the popularity pipeline: argument parsing,
//! run configuration, manifests and the model bundle.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

pub use bundle::ModelBundle;
pub use config::{Paths, RunConfig};
pub use error::{CliError, CliResult};
pub use manifest::Manifest;

use commands::{LabelSource, Outcome};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Parser)]
#[command(name = "mvp", version, about = "Multimodal video popularity prediction")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for data generation, fold assignment and boosting.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, env = "MVP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

/// Input locations; each overrides the matching `paths` entry.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Directory holding posts.csv, users.csv and video_embeddings.emb.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub posts: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<PathBuf>,
    #[arg(long)]
    pub video: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<PathBuf>,
}

impl DataArgs {
    fn apply(&self, paths: &mut Paths) {
        if let Some(dir) = &self.data_dir {
            let files = mvp_core::synth::SynthPaths::in_dir(dir);
            paths.posts = Some(files.posts);
            paths.users = Some(files.users);
            paths.video_embeddings = Some(files.video);
        }
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut paths.posts, &self.posts);
        set(&mut paths.users, &self.users);
        set(&mut paths.video_embeddings, &self.video);
        set(&mut paths.text_embeddings, &self.text);
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth,
    /// K-fold training; writes the model bundle and fold report.
    Train(DataArgs),
    /// Predict with a saved model bundle.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a predictions CSV against labels.
    Evaluate {
        /// `post_id,yhat` CSV.
        #[arg(long)]
        predictions: PathBuf,
        /// `post_id,label` CSV.
        #[arg(long, conflicts_with = "posts", required_unless_present = "posts")]
        labels: Option<PathBuf>,
        /// Posts table; labels are computed from views and age.
        #[arg(long)]
        posts: Option<PathBuf>,
    },
    /// Retrain with each listed group removed and compare on a holdout.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated rows; defaults to the config's `ablation_groups`.
        #[arg(long, value_delimiter = ',')]
        groups: Option<Vec<String>>,
    },
    /// Gain-share importance of a saved model bundle.
    Importance {
        #[arg(long)]
        model: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train(_) => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate { .. } => "ablate",
            Command::Importance { .. } => "importance",
        }
    }
}

/// Config file (or defaults) with every flag applied.
pub fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply_seed(cli.seed);
    if let Some(out) = &cli.out {
        config.paths.out_dir.clone_from(out);
    }
    match &cli.command {
        Command::Train(data) | Command::Predict { data, .. } | Command::Ablate { data, .. } => {
            data.apply(&mut config.paths)
        }
        _ => {}
    }
    if let Command::Ablate { groups: Some(g), .. } = &cli.command {
        config.ablation_groups.clone_from(g);
    }
    config.validate()?;
    Ok(config)
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // A second call in the same process (tests) keeps the first pool.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    Ok(())
}

/// Runs one command and writes `run_config.json` and `manifest.json` next
/// to its outputs. Returns the stdout summary.
pub fn run(cli: &Cli) -> CliResult<Value> {
    configure_threads(cli.threads)?;
    let config = effective_config(cli)?;
    let out = config.paths.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let outcome: Outcome = match &cli.command {
        Command::Synth => commands::cmd_synth(&config, &out)?,
        Command::Train(_) => commands::cmd_train(&config, &out)?,
        Command::Predict { model, .. } => commands::cmd_predict(&config, model, &out)?,
        Command::Evaluate {
            predictions,
            labels,
            posts,
        } => {
            let source = match (labels, posts) {
                (Some(l), _) => LabelSource::Labels(l.clone()),
                (None, Some(p)) => LabelSource::Posts(p.clone()),
                (None, None) => return Err(CliError::Config("evaluate needs --labels or --posts".into())),
            };
            commands::cmd_evaluate(&config, predictions, &source, &out)?
        }
        Command::Ablate { .. } => commands::cmd_ablate(&config, &out)?,
        Command::Importance { model } => commands::cmd_importance(model, &out)?,
    };
    finish(cli.command.name(), &config, &out, outcome)
}

fn finish(command: &str, config: &RunConfig, out: &Path, outcome: Outcome) -> CliResult<Value> {
    let cfg_path = out.join(RUN_CONFIG_FILE);
    let mut text = config.to_json_pretty();
    text.push('\n');
    std::fs::write(&cfg_path, text).map_err(|e| CliError::io(&cfg_path, e))?;
    let inputs: Vec<&Path> = outcome.inputs.iter().map(PathBuf::as_path).collect();
    let outputs: Vec<&str> = outcome.outputs.iter().map(String::as_str).collect();
    let manifest = Manifest::build(command, config, RUN_CONFIG_FILE, &inputs, out, &outputs)?;
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(outcome.summary)
}
