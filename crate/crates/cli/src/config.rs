//! Flat `key=value` run configuration.
//!
//! Resolution order, later wins: built-in defaults, the `--config` file,
//! command-line flags. The seed falls back to `SIAMZERO_SEED` when neither
//! the file nor a flag sets it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use siamzero::evalsuite::TrainConfig;
use siamzero::siamese::{ArchitectureSpec, FeatureActivation};

pub const SEED_ENV: &str = "SIAMZERO_SEED";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{origin}: unknown key {key:?}")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: {key}={value:?}: {msg}")]
    BadValue {
        origin: String,
        key: String,
        value: String,
        msg: String,
    },
    #[error("{origin}: expected key=value, got {line:?}")]
    Syntax { origin: String, line: String },
    #[error("missing required {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Read { path: PathBuf, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedSource {
    Default,
    Env,
    File,
    Flag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    pub arch: ArchitectureSpec,
    /// Seen classes; `None` trains and evaluates closed-set.
    pub c_seen: Option<usize>,
    pub test_fraction: f64,
    pub threshold: u8,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub seed_source: SeedSource,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            train: TrainConfig::default(),
            arch: ArchitectureSpec::default(),
            c_seen: None,
            test_fraction: 0.25,
            threshold: 0,
            data: None,
            checkpoint: None,
            history: None,
            report: None,
            seed_source: SeedSource::Default,
        }
    }
}

fn parse<T: FromStr>(origin: &str, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        origin: origin.to_string(),
        key: key.to_string(),
        value: value.to_string(),
        msg: e.to_string(),
    })
}

impl Config {
    /// Applies one setting. `origin` names where it came from, for errors.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        match key {
            "batch_size" => t.batch_size = parse(origin, key, value)?,
            "lr0" => t.lr0 = parse(origin, key, value)?,
            "lr_decay" => t.lr_decay = parse(origin, key, value)?,
            "plateau_patience" => t.plateau_patience = parse(origin, key, value)?,
            "max_decays" => t.max_decays = parse(origin, key, value)?,
            "momentum" => t.momentum = parse(origin, key, value)?,
            "weight_decay" => t.weight_decay = parse(origin, key, value)?,
            "max_epochs" => t.max_epochs = parse(origin, key, value)?,
            "n" => t.n = parse(origin, key, value)?,
            "restore_best" => t.restore_best = parse(origin, key, value)?,
            "seed" => t.seed = parse(origin, key, value)?,
            "arch" => {
                let activation = self.arch.feature_activation;
                self.arch = parse(origin, key, value)?;
                self.arch.feature_activation = activation;
            }
            "feature_activation" => {
                self.arch.feature_activation = parse::<FeatureActivation>(origin, key, value)?
            }
            "c_seen" => self.c_seen = Some(parse(origin, key, value)?),
            "test_fraction" => self.test_fraction = parse(origin, key, value)?,
            "threshold" => self.threshold = parse(origin, key, value)?,
            "data" => self.data = Some(value.into()),
            "checkpoint" => self.checkpoint = Some(value.into()),
            "history" => self.history = Some(value.into()),
            "report" => self.report = Some(value.into()),
            _ => {
                return Err(ConfigError::UnknownKey {
                    origin: origin.to_string(),
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`; blank lines and `#` comments
    /// are skipped. Returns the keys that were set.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<Vec<String>, ConfigError> {
        let mut keys = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let here = format!("{origin}:{}", i + 1);
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: here.clone(),
                line: line.to_string(),
            })?;
            self.set(k.trim(), v.trim(), &here)?;
            keys.push(k.trim().to_string());
        }
        Ok(keys)
    }

    /// Defaults, then `file`, then `flags`, then the seed fallback; validated.
    pub fn resolve(
        file: Option<&Path>,
        flags: &[(&'static str, String)],
        env_seed: Option<&str>,
    ) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        let mut seed_source = SeedSource::Default;
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
            let keys = cfg.apply_text(&text, &path.display().to_string())?;
            if keys.iter().any(|k| k == "seed") {
                seed_source = SeedSource::File;
            }
        }
        for (key, value) in flags {
            cfg.set(key, value, &format!("--{}", key.replace('_', "-")))?;
            if *key == "seed" {
                seed_source = SeedSource::Flag;
            }
        }
        if seed_source == SeedSource::Default {
            if let Some(v) = env_seed {
                cfg.train.seed = parse(SEED_ENV, "seed", v)?;
                seed_source = SeedSource::Env;
            }
        }
        cfg.seed_source = seed_source;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(ConfigError::Invalid(format!(
                "test_fraction {} must lie in [0, 1)",
                self.test_fraction
            )));
        }
        if self.c_seen == Some(0) {
            return Err(ConfigError::Invalid("c_seen must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, sorted by key.
    pub fn resolved(&self) -> BTreeMap<&'static str, String> {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        };
        let mut m = BTreeMap::new();
        m.insert("arch", self.arch.grammar());
        m.insert("batch_size", t.batch_size.to_string());
        m.insert(
            "c_seen",
            self.c_seen.map_or("all".into(), |c| c.to_string()),
        );
        m.insert("checkpoint", path(&self.checkpoint));
        m.insert("data", path(&self.data));
        m.insert(
            "feature_activation",
            self.arch.feature_activation.to_string(),
        );
        m.insert("history", path(&self.history));
        m.insert("lr0", t.lr0.to_string());
        m.insert("lr_decay", t.lr_decay.to_string());
        m.insert("max_decays", t.max_decays.to_string());
        m.insert("max_epochs", t.max_epochs.to_string());
        m.insert("momentum", t.momentum.to_string());
        m.insert("n", t.n.to_string());
        m.insert("plateau_patience", t.plateau_patience.to_string());
        m.insert("report", path(&self.report));
        m.insert("restore_best", t.restore_best.to_string());
        m.insert("seed", t.seed.to_string());
        m.insert("test_fraction", self.test_fraction.to_string());
        m.insert("threshold", self.threshold.to_string());
        m.insert("weight_decay", t.weight_decay.to_string());
        m
    }

    /// Reproducibility header printed before any work.
    pub fn header(&self, command: &str) -> String {
        let mut out = format!("# siamzero {command}\n");
        for (k, v) in self.resolved() {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "# seed_source={:?}", self.seed_source);
        out
    }

    pub fn require<'a>(
        value: &'a Option<PathBuf>,
        what: &'static str,
    ) -> Result<&'a Path, ConfigError> {
        value.as_deref().ok_or(ConfigError::Missing(what))
    }
}
