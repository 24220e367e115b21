//! Run configuration: one struct covering the environment, training,
//! propensity-fitting, and evaluation settings, plus the master seed and
//! output directory.
//!
//! Configs load from line-oriented `key = value` text files. Every key has
//! a default, so an empty file (or no file at all) is a complete
//! configuration; unknown keys are rejected. Blank lines and lines starting
//! with `#` are ignored. Command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context as _, Result};
use tiltopt_core::evaluation::LambdaEvalMode;
use tiltopt_core::learning::TrainConfig;
use tiltopt_core::propensity::{
    PropensitySelector, DEFAULT_FIT_EPOCHS, DEFAULT_FIT_LR, DEFAULT_FLOOR,
};
use tiltopt_core::synthenv::{EnvConfig, LoggingKind};

/// Settings of the propensity-model fitting stage.
#[derive(Debug, Clone)]
pub struct PropensitySettings {
    /// Full-batch gradient-descent passes.
    pub epochs: usize,
    /// Gradient-descent step size.
    pub lr: f64,
    /// Prediction-time probability floor.
    pub floor: f64,
}

impl Default for PropensitySettings {
    fn default() -> Self {
        PropensitySettings {
            epochs: DEFAULT_FIT_EPOCHS,
            lr: DEFAULT_FIT_LR,
            floor: DEFAULT_FLOOR,
        }
    }
}

/// Settings of the split-and-score evaluation protocol.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    /// Number of independent seeded splits.
    pub splits: usize,
    /// Fraction of each split assigned to training.
    pub train_fraction: f64,
    /// Also score an action-balanced down-sampled copy of each test part.
    pub downsample: bool,
    /// How the logging policy itself is scored.
    pub lambda_eval: LambdaEvalMode,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            splits: 5,
            train_fraction: 0.7,
            downsample: false,
            lambda_eval: LambdaEvalMode::Greedy,
        }
    }
}

/// Union of all tool settings. Defaults reproduce the standard experiment.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub propensity: PropensitySettings,
    pub eval: EvalSettings,
    /// Master seed; every random stream in every command derives from it.
    pub seed: u64,
    /// Base directory for default output paths.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            propensity: PropensitySettings::default(),
            eval: EvalSettings::default(),
            seed: 0,
            out_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    /// Parses a config file; keys not present keep their defaults.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!(
                    "{} line {}: expected `key = value`, got `{line}`",
                    path.display(),
                    idx + 1
                )
            })?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{} line {}", path.display(), idx + 1))?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` assignment. Rejects unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_from(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),

            "env.num_sectors" => self.env.num_sectors = parse_from(key, value)?,
            "env.context_shape_a" => self.env.context_shape_a = parse_from(key, value)?,
            "env.context_shape_b" => self.env.context_shape_b = parse_from(key, value)?,
            "env.effect_magnitude" => self.env.effect_magnitude = parse_from(key, value)?,
            "env.noise_std" => self.env.noise_std = parse_from(key, value)?,
            "env.logging_kind" => {
                self.env.logging_kind = LoggingKind::parse(value).ok_or_else(|| {
                    anyhow!(
                        "config key `{key}`: unknown logging kind `{value}` \
                         (expected rule_based or softmax_linear)"
                    )
                })?;
            }
            "env.logging_smoothing" => self.env.logging_smoothing = parse_from(key, value)?,
            "env.rule_threshold_high" => self.env.rule_threshold_high = parse_from(key, value)?,
            "env.tilt_step_epsilon" => self.env.tilt_step_epsilon = parse_from(key, value)?,
            "env.softmax_downtilt" => self.env.softmax_coefficients[0] = parse_triple(key, value)?,
            "env.softmax_nochange" => self.env.softmax_coefficients[1] = parse_triple(key, value)?,
            "env.softmax_uptilt" => self.env.softmax_coefficients[2] = parse_triple(key, value)?,

            "train.epochs" => self.train.epochs = parse_from(key, value)?,
            "train.batch_size" => {
                self.train.batch_size = if value == "auto" {
                    None
                } else {
                    let b: usize = parse_from(key, value)?;
                    if b == 0 {
                        bail!("config key `{key}`: batch size must be >= 1 or `auto`");
                    }
                    Some(b)
                };
            }
            "train.lr_policy" => self.train.lr_policy = parse_from(key, value)?,
            "train.lr_loss" => self.train.lr_loss = parse_from(key, value)?,
            "train.propensity_source" => {
                self.train.propensity_source =
                    PropensitySelector::parse(value).ok_or_else(|| {
                        anyhow!(
                            "config key `{key}`: unknown propensity source `{value}` \
                             (expected logged or estimated)"
                        )
                    })?;
            }

            "propensity.epochs" => self.propensity.epochs = parse_from(key, value)?,
            "propensity.lr" => self.propensity.lr = parse_from(key, value)?,
            "propensity.floor" => self.propensity.floor = parse_from(key, value)?,

            "eval.splits" => self.eval.splits = parse_from(key, value)?,
            "eval.train_fraction" => self.eval.train_fraction = parse_from(key, value)?,
            "eval.downsample" => self.eval.downsample = parse_bool(key, value)?,
            "eval.lambda_eval" => {
                self.eval.lambda_eval = LambdaEvalMode::parse(value).ok_or_else(|| {
                    anyhow!(
                        "config key `{key}`: unknown evaluation mode `{value}` \
                         (expected logged or greedy)"
                    )
                })?;
            }

            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    /// Resolves an output path: absolute and explicitly relative paths pass
    /// through; default file names land in `out_dir`.
    pub fn out_path(&self, explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.out_dir.join(default_name))
    }
}

fn parse_from<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("config key `{key}`: invalid value `{value}` ({e})"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("config key `{key}`: expected true or false, got `{value}`"),
    }
}

/// Parses a comma-separated coefficient triple `a,b,c`.
fn parse_triple(key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("config key `{key}`: expected three comma-separated numbers, got `{value}`");
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|e| anyhow!("config key `{key}`: invalid number `{part}` ({e})"))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_canonical_lines() {
        let mut cfg = RunConfig::default();
        for line in EnvConfig::default().canonical_lines() {
            let (key, value) = line.split_once('=').expect("canonical line shape");
            cfg.set(key.trim(), value.trim())
                .expect("canonical keys parse");
        }
        assert_eq!(cfg.env, EnvConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("env.bogus", "1").unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
    }

    #[test]
    fn value_errors_name_the_key() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("train.epochs", "many").unwrap_err();
        assert!(err.to_string().contains("train.epochs"));
        let err = cfg.set("env.softmax_uptilt", "1,2").unwrap_err();
        assert!(err.to_string().contains("three comma-separated"));
        let err = cfg.set("train.batch_size", "0").unwrap_err();
        assert!(err.to_string().contains("batch size"));
    }

    #[test]
    fn batch_size_auto_and_explicit() {
        let mut cfg = RunConfig::default();
        cfg.set("train.batch_size", "250").unwrap();
        assert_eq!(cfg.train.batch_size, Some(250));
        cfg.set("train.batch_size", "auto").unwrap();
        assert_eq!(cfg.train.batch_size, None);
    }
}
