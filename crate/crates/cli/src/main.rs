//! `tiltopt` — command-line front end of the tilt-control bandit toolkit.
//!
//! Subcommands: `generate` (synthetic logs), `fit-propensity` (logging-policy
//! model), `train` (policy or loss network), `evaluate` (K-split protocol),
//! `heatmap` (policy probability grids), `diagnose` (estimator bias/variance
//! studies). Every command is deterministic given its inputs and `--seed`:
//! reruns produce byte-identical artifacts. Failures print a single
//! `error: ...` line on stderr and exit nonzero.

mod checkpoint;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use tiltopt_core::evaluation::LambdaEvalMode;
use tiltopt_core::propensity::PropensitySelector;

use config::RunConfig;

/// Off-policy contextual-bandit toolkit for remote antenna-tilt control:
/// synthetic log generation, propensity estimation, policy training, and
/// split-based evaluation.
#[derive(Parser)]
#[command(name = "tiltopt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines; flags override file values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; every random stream derives from it [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving outputs whose paths are not given explicitly
    /// [default: .].
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic interaction log; write it as CSV plus a `.meta`
    /// provenance sidecar (config digest, seed, size).
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of logged interactions to sample.
        #[arg(long)]
        n: usize,
        /// Output CSV path [default: <out-dir>/dataset.csv].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Fit the propensity model on a logged dataset and write its
    /// checkpoint; report the fit on stdout.
    FitPropensity {
        #[command(flatten)]
        common: Common,
        /// Logged dataset CSV.
        dataset: PathBuf,
        /// Output checkpoint path [default: <out-dir>/propensity_model.csv].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Full-batch gradient-descent passes [default: 500].
        #[arg(long)]
        epochs: Option<usize>,
        /// Gradient-descent step size [default: 0.5].
        #[arg(long)]
        lr: Option<f64>,
        /// Prediction-time probability floor [default: 0.01].
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Train a policy network (`ips`) or a loss network (`dm`); write the
    /// checkpoint and the per-epoch history CSV.
    Train {
        #[command(flatten)]
        common: Common,
        /// Logged dataset CSV (split 70/30 internally unless --test is given).
        dataset: PathBuf,
        /// Training objective: `ips` or `dm`.
        #[arg(long)]
        estimator: String,
        /// Importance-weighting propensities: `logged`, `estimated`, or a
        /// propensity-model checkpoint path.
        #[arg(long, default_value = "estimated")]
        propensity: String,
        /// Held-out test CSV; with it the whole dataset trains.
        #[arg(long, value_name = "FILE")]
        test: Option<PathBuf>,
        /// Checkpoint path [default: <out-dir>/policy_net.csv or loss_net.csv].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// History CSV path [default: `<out stem>_history.csv`].
        #[arg(long, value_name = "FILE")]
        history: Option<PathBuf>,
        /// Passes through the training set [default: 100].
        #[arg(long)]
        epochs: Option<usize>,
        /// Mini-batch size [default: one hundredth of the training set].
        #[arg(long)]
        batch_size: Option<usize>,
        /// Adam step size for the policy network [default: 0.0005].
        #[arg(long)]
        lr_policy: Option<f64>,
        /// Adam step size for the loss network [default: 0.001].
        #[arg(long)]
        lr_loss: Option<f64>,
        /// Try every combination of the standard step-size and batch grids;
        /// keep the run with the lowest final held-out test loss.
        #[arg(long)]
        grid_search: bool,
    },
    /// Run the K-split evaluation protocol (retrains per split), or — with
    /// --policies — score the given checkpoints as-is on the same splits.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Logged dataset CSV.
        dataset: PathBuf,
        /// Checkpoints to score without retraining.
        #[arg(long, num_args = 1.., value_name = "FILE")]
        policies: Vec<PathBuf>,
        /// Number of independent splits [default: 5].
        #[arg(long)]
        splits: Option<usize>,
        /// Fraction of each split used for training [default: 0.7].
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Also score an action-balanced down-sampled copy of each test part.
        #[arg(long)]
        downsample: bool,
        /// Scoring of the logging policy: `greedy` (most likely action as a
        /// deterministic policy) or `logged` (logged actions directly)
        /// [default: greedy].
        #[arg(long, value_name = "MODE")]
        lambda_eval: Option<String>,
        /// Importance weights for test losses: `logged` or `estimated`
        /// [default: estimated].
        #[arg(long, value_name = "SOURCE")]
        propensity: Option<String>,
        /// Results CSV path [default: <out-dir>/results.csv].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Tabulate a checkpoint's action probabilities on a uniform grid over
    /// the unit square of alarm levels.
    Heatmap {
        #[command(flatten)]
        common: Common,
        /// Policy-network, loss-network, or propensity-model checkpoint.
        checkpoint: PathBuf,
        /// Grid points per axis (>= 2).
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Output CSV path [default: <out-dir>/heatmap.csv].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Replicate bias/variance study of a risk estimator on the synthetic
    /// environment; write the diagnostics table.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Estimator: `ips` or `dm`.
        #[arg(long)]
        estimator: String,
        /// Comma-separated log sizes [default: 500,1000,2000,4000,8000].
        #[arg(long, value_name = "LIST")]
        n_list: Option<String>,
        /// Replicates per log size, at least 30 [default: 100].
        #[arg(long)]
        replicates: Option<usize>,
        /// Monte-Carlo draws behind the oracle reference risk
        /// [default: 1000000].
        #[arg(long)]
        oracle_draws: Option<usize>,
        /// Score this fixed loss network instead of refitting one per
        /// replicate (`dm` only).
        #[arg(long, value_name = "FILE")]
        loss_model: Option<PathBuf>,
        /// Target-policy checkpoint [default: the uniform policy].
        #[arg(long, value_name = "FILE")]
        policy: Option<PathBuf>,
        /// Output CSV path [default: <out-dir>/diagnostics.csv].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", single_line(&err));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { common, n, out } => {
            let cfg = resolve(&common)?;
            commands::generate(&cfg, n, out)
        }
        Command::FitPropensity {
            common,
            dataset,
            out,
            epochs,
            lr,
            floor,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(e) = epochs {
                cfg.propensity.epochs = e;
            }
            if let Some(l) = lr {
                cfg.propensity.lr = l;
            }
            if let Some(f) = floor {
                cfg.propensity.floor = f;
            }
            commands::fit_propensity(&cfg, &dataset, out)
        }
        Command::Train {
            common,
            dataset,
            estimator,
            propensity,
            test,
            out,
            history,
            epochs,
            batch_size,
            lr_policy,
            lr_loss,
            grid_search,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = Some(b);
            }
            if let Some(l) = lr_policy {
                cfg.train.lr_policy = l;
            }
            if let Some(l) = lr_loss {
                cfg.train.lr_loss = l;
            }
            commands::train(
                &cfg,
                &dataset,
                &estimator,
                &propensity,
                test.as_deref(),
                out,
                history,
                grid_search,
            )
        }
        Command::Evaluate {
            common,
            dataset,
            policies,
            splits,
            train_fraction,
            downsample,
            lambda_eval,
            propensity,
            out,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(k) = splits {
                cfg.eval.splits = k;
            }
            if let Some(f) = train_fraction {
                cfg.eval.train_fraction = f;
            }
            if downsample {
                cfg.eval.downsample = true;
            }
            if let Some(mode) = lambda_eval {
                cfg.eval.lambda_eval = match LambdaEvalMode::parse(&mode) {
                    Some(m) => m,
                    None => bail!("unknown evaluation mode `{mode}` (expected logged or greedy)"),
                };
            }
            if let Some(source) = propensity {
                cfg.train.propensity_source = match PropensitySelector::parse(&source) {
                    Some(s) => s,
                    None => {
                        bail!("unknown propensity source `{source}` (expected logged or estimated)")
                    }
                };
            }
            commands::evaluate(&cfg, &dataset, &policies, out)
        }
        Command::Heatmap {
            common,
            checkpoint,
            grid,
            out,
        } => {
            let cfg = resolve(&common)?;
            commands::heatmap(&cfg, &checkpoint, grid, out)
        }
        Command::Diagnose {
            common,
            estimator,
            n_list,
            replicates,
            oracle_draws,
            loss_model,
            policy,
            out,
        } => {
            let cfg = resolve(&common)?;
            commands::diagnose(
                &cfg,
                &estimator,
                loss_model.as_deref(),
                policy.as_deref(),
                n_list.as_deref(),
                replicates,
                oracle_draws,
                out,
            )
        }
    }
}

/// Loads the config file (or defaults) and applies the shared flag
/// overrides.
fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

/// Flattens an error chain onto one line for machine-parsable stderr.
fn single_line(err: &anyhow::Error) -> String {
    let chain: Vec<String> = err.chain().map(ToString::to_string).collect();
    chain
        .join(": ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
