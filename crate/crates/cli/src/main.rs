//! `siamzero` command-line entry point.
//!
//! Exit status: 0 on success, 1 on a domain error, 2 on a usage or
//! configuration error. Failures end with one `error: kind=<kind> msg=<msg>`
//! line on stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, ConfigError, SEED_ENV};

#[derive(Parser, Debug)]
#[command(
    name = "siamzero",
    version,
    about = "Siamese template matching for handwritten characters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand; each flag overrides the same key
/// in the `--config` file.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    lr0: Option<String>,
    #[arg(long, global = true)]
    batch_size: Option<String>,
    #[arg(long, global = true)]
    max_epochs: Option<String>,
    #[arg(long, global = true)]
    momentum: Option<String>,
    #[arg(long, global = true)]
    weight_decay: Option<String>,
    #[arg(long, global = true)]
    lr_decay: Option<String>,
    #[arg(long, global = true)]
    plateau_patience: Option<String>,
    #[arg(long, global = true)]
    max_decays: Option<String>,
    #[arg(long, global = true)]
    restore_best: Option<String>,
    /// Negatives per (template class, other class) cell.
    #[arg(short = 'n', long = "n", global = true)]
    n: Option<String>,
    /// Layer list such as `32x3,pool,32x3,...`.
    #[arg(long, global = true)]
    arch: Option<String>,
    #[arg(long, global = true)]
    feature_activation: Option<String>,
    #[arg(long, global = true)]
    c_seen: Option<String>,
    #[arg(long, global = true)]
    test_fraction: Option<String>,
    /// Crop threshold applied after inversion.
    #[arg(long, global = true)]
    threshold: Option<String>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Training history CSV destination.
    #[arg(long, global = true)]
    history: Option<PathBuf>,
    /// Evaluation report TSV destination.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        [
            ("seed", self.seed.clone()),
            ("lr0", self.lr0.clone()),
            ("batch_size", self.batch_size.clone()),
            ("max_epochs", self.max_epochs.clone()),
            ("momentum", self.momentum.clone()),
            ("weight_decay", self.weight_decay.clone()),
            ("lr_decay", self.lr_decay.clone()),
            ("plateau_patience", self.plateau_patience.clone()),
            ("max_decays", self.max_decays.clone()),
            ("restore_best", self.restore_best.clone()),
            ("n", self.n.clone()),
            ("arch", self.arch.clone()),
            ("feature_activation", self.feature_activation.clone()),
            ("c_seen", self.c_seen.clone()),
            ("test_fraction", self.test_fraction.clone()),
            ("threshold", self.threshold.clone()),
            ("data", path(&self.data)),
            ("checkpoint", path(&self.checkpoint)),
            ("history", path(&self.history)),
            ("report", path(&self.report)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize every image of a manifest into SZIM files.
    Prep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Emit the template/sample pair list of a manifest as TSV.
    Pairs {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train on a dataset directory and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a checkpoint on the held-out samples of a dataset directory.
    Eval {
        /// Also list the k most frequent confusions.
        #[arg(long)]
        errors: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print the class id and probability of one image.
    Classify {
        /// Template manifest (TSV) or exported feature matrix (.szfm).
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Comma-separated class ids to choose from.
        #[arg(long, value_delimiter = ',')]
        restrict: Option<Vec<u32>>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Embed the templates once and write the SZFM feature matrix.
    ExportFeatures {
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the finite-difference suites of every backward pass.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write a synthetic glyph dataset with templates and manifests.
    GenToy {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Strokes per glyph.
        #[arg(long, default_value_t = 4)]
        complexity: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prep { .. } => "prep",
            Command::Pairs { .. } => "pairs",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Classify { .. } => "classify",
            Command::ExportFeatures { .. } => "export-features",
            Command::Gradcheck { .. } => "gradcheck",
            Command::GenToy { .. } => "gen-toy",
        }
    }

    fn config_args(&self) -> &ConfigArgs {
        match self {
            Command::Prep { cfg, .. }
            | Command::Pairs { cfg, .. }
            | Command::Train { cfg }
            | Command::Eval { cfg, .. }
            | Command::Classify { cfg, .. }
            | Command::ExportFeatures { cfg, .. }
            | Command::Gradcheck { cfg }
            | Command::GenToy { cfg, .. } => cfg,
        }
    }
}

enum Failure {
    Usage(String),
    Config(ConfigError),
    Domain(siamzero::Error),
    Gradcheck,
}

impl Failure {
    fn report(&self) -> ExitCode {
        let (code, kind, msg) = match self {
            Failure::Usage(m) => (2, "usage", m.clone()),
            Failure::Config(e) => (2, "config", e.to_string()),
            Failure::Domain(e) => (1, e.kind(), e.to_string()),
            Failure::Gradcheck => (
                1,
                "gradcheck",
                "a gradient suite exceeded the tolerance".into(),
            ),
        };
        eprintln!("error: kind={kind} msg={}", msg.replace('\n', " "));
        ExitCode::from(code)
    }
}

impl From<siamzero::Error> for Failure {
    fn from(e: siamzero::Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn run(command: Command) -> Result<(), Failure> {
    let args = command.config_args();
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = Config::resolve(
        args.config.as_deref(),
        &args.overrides(),
        env_seed.as_deref(),
    )?;
    eprint!("{}", cfg.header(command.name()));

    match &command {
        Command::Prep {
            input,
            manifest,
            out,
            ..
        } => commands::prep(&cfg, input, manifest, out)?,
        Command::Pairs { manifest, out, .. } => commands::pairs(&cfg, manifest, out.as_deref())?,
        Command::Train { .. } => {
            let data = Config::require(&cfg.data, "--data")?;
            let ckpt = Config::require(&cfg.checkpoint, "--checkpoint")?;
            commands::train_cmd(&cfg, data, ckpt)?
        }
        Command::Eval { errors, .. } => {
            let data = Config::require(&cfg.data, "--data")?;
            let ckpt = Config::require(&cfg.checkpoint, "--checkpoint")?;
            commands::eval(&cfg, data, ckpt, *errors)?
        }
        Command::Classify {
            templates,
            image,
            restrict,
            ..
        } => {
            let ckpt = Config::require(&cfg.checkpoint, "--checkpoint")?;
            commands::classify_cmd(&cfg, ckpt, templates, image, restrict.as_deref())?
        }
        Command::ExportFeatures { templates, out, .. } => {
            let ckpt = Config::require(&cfg.checkpoint, "--checkpoint")?;
            commands::export_features(&cfg, ckpt, templates, out)?
        }
        Command::Gradcheck { .. } => {
            if !commands::gradcheck() {
                return Err(Failure::Gradcheck);
            }
        }
        Command::GenToy {
            classes,
            samples,
            complexity,
            out,
            ..
        } => commands::gen_toy(&cfg, *classes, *samples, *complexity, out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            let first = first.strip_prefix("error: ").unwrap_or(first).to_string();
            return Failure::Usage(first).report();
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
