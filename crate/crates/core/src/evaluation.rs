//! The end-to-end evaluation protocol: repeated random splits, per-split
//! retraining, and a mean ± std results table.
//!
//! One protocol run takes a logged dataset and, for each of `K` seeded
//! splits: partitions it into train/test parts, fits the logging-policy
//! model on the train part (when anything downstream needs it), trains the
//! importance-weighted policy network and the loss network on the train
//! part, and scores three deterministic policies on the test part with the
//! importance-weighted test loss — the logging baseline, the greedy policy
//! of the trained policy network, and the greedy policy of the trained loss
//! network. Scores are reported on the test part as-is and, optionally, on
//! an action-balanced down-sampled copy. The table aggregates mean and
//! sample standard deviation over splits.
//!
//! The logging baseline has two reductions: `greedy` (default) scores the
//! deterministic most-likely action of the *fitted* logging-policy model
//! like any other policy, while `logged` treats every logged action as the
//! baseline's own decision, which makes its test loss the importance-
//! weighted mean over all test samples.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataset::{downsample_balanced, format_real, split_dataset, Dataset};
use crate::error::Error;
use crate::estimators::test_loss;
use crate::learning::{
    train_dm, train_ips, GreedyFromLoss, GreedyFromPolicy, TrainConfig, TrainHistory,
};
use crate::models::{LossNet, PolicyNet};
use crate::propensity::{
    fit_propensity_floored, MultinomialLogitModel, PropensitySelector, PropensitySource,
    DEFAULT_FIT_EPOCHS, DEFAULT_FIT_LR, DEFAULT_FLOOR,
};
use crate::seeding::{self, tags};
use crate::types::{DeterministicPolicy, MostLikelyPolicy};
use crate::Result;

/// How the logging baseline enters the results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaEvalMode {
    /// Score the logged actions themselves: every test sample counts as a
    /// match, so the metric is the importance-weighted mean loss.
    Logged,
    /// Score the deterministic most-likely action of the fitted
    /// logging-policy model, like any other policy.
    Greedy,
}

impl LambdaEvalMode {
    /// Stable lowercase name, the inverse of [`LambdaEvalMode::parse`].
    pub fn name(self) -> &'static str {
        match self {
            LambdaEvalMode::Logged => "logged",
            LambdaEvalMode::Greedy => "greedy",
        }
    }

    /// Parses the lowercase name.
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "logged" => Some(LambdaEvalMode::Logged),
            "greedy" => Some(LambdaEvalMode::Greedy),
            _ => None,
        }
    }
}

/// Configuration of a protocol run. The per-split seeds for splitting,
/// propensity fitting, training and down-sampling all derive from `seed`;
/// the `seed` inside `train` is overridden per split.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub train: TrainConfig,
    pub k_splits: usize,
    pub train_fraction: f64,
    /// Also score every policy on an action-balanced down-sampled copy of
    /// each test part.
    pub downsample: bool,
    pub lambda_eval: LambdaEvalMode,
    pub propensity_epochs: usize,
    pub propensity_lr: f64,
    pub propensity_floor: f64,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            train: TrainConfig::default(),
            k_splits: 5,
            train_fraction: 0.7,
            downsample: false,
            lambda_eval: LambdaEvalMode::Greedy,
            propensity_epochs: DEFAULT_FIT_EPOCHS,
            propensity_lr: DEFAULT_FIT_LR,
            propensity_floor: DEFAULT_FLOOR,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    fn validate(&self) -> Result<()> {
        if self.k_splits == 0 {
            return Err(Error::config("protocol needs at least one split"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Dataset variant a score was computed on.
pub const VARIANT_COMPLETE: &str = "complete";
/// See [`VARIANT_COMPLETE`].
pub const VARIANT_DOWNSAMPLED: &str = "downsampled";

/// Aggregated scores of one policy on one dataset variant. `mean` and
/// `std_dev` are present only when every split produced a value (`std_dev`
/// additionally needs at least two splits); failed splits keep their error
/// message in `per_split`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub policy: String,
    pub variant: &'static str,
    pub per_split: Vec<std::result::Result<f64, String>>,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
}

impl ResultRow {
    fn aggregate(
        policy: String,
        variant: &'static str,
        per_split: Vec<std::result::Result<f64, String>>,
    ) -> Self {
        let values: Vec<f64> = per_split
            .iter()
            .filter_map(|r| r.as_ref().ok().copied())
            .collect();
        let (mean, std_dev) = if values.len() == per_split.len() && !values.is_empty() {
            let k = values.len() as f64;
            let mean = values.iter().sum::<f64>() / k;
            let std_dev = (values.len() >= 2).then(|| {
                let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
                (ss / (k - 1.0)).sqrt()
            });
            (Some(mean), std_dev)
        } else {
            (None, None)
        };
        ResultRow {
            policy,
            variant,
            per_split,
            mean,
            std_dev,
        }
    }
}

/// Renders result rows as CSV with header
/// `policy,dataset_variant,mean_test_loss,std_test_loss`; absent aggregates
/// leave their cell empty.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("policy,dataset_variant,mean_test_loss,std_test_loss\n");
    for r in rows {
        let mean = r.mean.map(format_real).unwrap_or_default();
        let std = r.std_dev.map(format_real).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.policy, r.variant, mean, std);
    }
    out
}

/// Everything one split produced: the trained networks, the fitted
/// logging-policy model (when the run needed one), and the training
/// histories.
#[derive(Debug, Clone)]
pub struct SplitArtifacts {
    pub policy_net: PolicyNet,
    pub loss_net: LossNet,
    pub propensity_model: Option<MultinomialLogitModel>,
    pub ips_history: TrainHistory,
    pub dm_history: TrainHistory,
}

/// Result of [`run_protocol`]: the aggregated table and each split's
/// artifacts (in split order) for downstream checks.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub rows: Vec<ResultRow>,
    pub splits: Vec<SplitArtifacts>,
}

/// Row labels of the three protocol policies.
pub const POLICY_LAMBDA: &str = "lambda";
/// See [`POLICY_LAMBDA`].
pub const POLICY_IPS: &str = "ips";
/// See [`POLICY_LAMBDA`].
pub const POLICY_DM: &str = "dm";

/// Importance-weighted mean loss of the logged actions themselves:
/// `(1/N) Σ_i δ_i / λ(a_i|x_i)`. This is the [`LambdaEvalMode::Logged`]
/// baseline — the test-loss formula with every sample matched.
pub fn logged_lambda_test_loss(d: &Dataset, lambda_hat: PropensitySource<'_>) -> Result<f64> {
    if d.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (i, s) in d.samples.iter().enumerate() {
        let lambda = lambda_hat.propensity_of(s, i)?;
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::NonPositivePropensity { value: lambda });
        }
        total += s.loss / lambda;
    }
    Ok(total / d.samples.len() as f64)
}

/// Scores of one split, cell-indexed `[variant][policy]` with the fixed
/// policy order λ, IPS, DM.
struct SplitCells {
    artifacts: SplitArtifacts,
    cells: Vec<[std::result::Result<f64, String>; 3]>,
}

fn stringify(r: Result<f64>) -> std::result::Result<f64, String> {
    r.map_err(|e| e.to_string())
}

/// The propensity source test-time scoring should use: the fitted model
/// when the config asked for estimated propensities, else the logged
/// column.
fn scoring_source<'m>(
    model: &'m Option<MultinomialLogitModel>,
    estimated: bool,
) -> PropensitySource<'m> {
    match model {
        Some(m) if estimated => PropensitySource::Model(m),
        _ => PropensitySource::Logged,
    }
}

fn run_split(d: &Dataset, cfg: &ProtocolConfig, k: usize) -> Result<SplitCells> {
    let split_seed = seeding::mix_indexed(cfg.seed, tags::SPLIT, k as u64);
    let (train_part, test_part) = split_dataset(d, cfg.train_fraction, split_seed)?;

    let estimated = cfg.train.propensity_source == PropensitySelector::Estimated;
    let needs_model = estimated || cfg.lambda_eval == LambdaEvalMode::Greedy;
    let propensity_model = if needs_model {
        let fit_seed = seeding::mix_indexed(cfg.seed, tags::PROPENSITY, k as u64);
        let (model, _) = fit_propensity_floored(
            &train_part,
            cfg.propensity_epochs,
            cfg.propensity_lr,
            fit_seed,
            cfg.propensity_floor,
        )?;
        Some(model)
    } else {
        None
    };
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seeding::mix_indexed(cfg.seed, tags::PROTOCOL, k as u64);
    let (policy_net, ips_history) = train_ips(
        &train_part,
        scoring_source(&propensity_model, estimated),
        &train_cfg,
        None,
    )?;
    let (loss_net, dm_history) = train_dm(&train_part, &train_cfg, None)?;

    let ips_policy = GreedyFromPolicy(policy_net.clone());
    let dm_policy = GreedyFromLoss(loss_net.clone());
    let lambda_policy = propensity_model.as_ref().map(|m| MostLikelyPolicy(m));

    let mut variants: Vec<Dataset> = vec![test_part];
    if cfg.downsample {
        let ds_seed = seeding::mix_indexed(cfg.seed, tags::DOWNSAMPLE, k as u64);
        variants.push(downsample_balanced(&variants[0], ds_seed)?);
    }

    let cells = variants
        .iter()
        .map(|variant| {
            let source = scoring_source(&propensity_model, estimated);
            let lambda_cell = match (cfg.lambda_eval, &lambda_policy) {
                (LambdaEvalMode::Logged, _) => stringify(logged_lambda_test_loss(variant, source)),
                (LambdaEvalMode::Greedy, Some(p)) => stringify(test_loss(variant, p, source)),
                (LambdaEvalMode::Greedy, None) => {
                    unreachable!("greedy lambda evaluation always fits the model")
                }
            };
            [
                lambda_cell,
                stringify(test_loss(variant, &ips_policy, source)),
                stringify(test_loss(variant, &dm_policy, source)),
            ]
        })
        .collect();

    Ok(SplitCells {
        artifacts: SplitArtifacts {
            policy_net,
            loss_net,
            propensity_model,
            ips_history,
            dm_history,
        },
        cells,
    })
}

/// Runs the full protocol on a logged dataset: `K` seeded splits, per-split
/// propensity fitting and retraining of both networks, and test-loss
/// scoring of the λ baseline and the two greedy policies on each test part
/// (plus its down-sampled copy when enabled). Splits run in parallel;
/// assembly is split-ordered, so results do not depend on thread
/// scheduling. Per-cell scoring failures are recorded in the table rather
/// than aborting the run; per-split failures (splitting, fitting, training)
/// abort with the underlying error.
pub fn run_protocol(d: &Dataset, cfg: &ProtocolConfig) -> Result<ProtocolOutcome> {
    cfg.validate()?;
    let splits: Vec<SplitCells> = (0..cfg.k_splits)
        .into_par_iter()
        .map(|k| run_split(d, cfg, k))
        .collect::<Result<Vec<_>>>()?;

    let n_variants = if cfg.downsample { 2 } else { 1 };
    let mut rows = Vec::with_capacity(n_variants * 3);
    for v in 0..n_variants {
        let variant = [VARIANT_COMPLETE, VARIANT_DOWNSAMPLED][v];
        for (p, policy) in [POLICY_LAMBDA, POLICY_IPS, POLICY_DM]
            .into_iter()
            .enumerate()
        {
            let per_split: Vec<std::result::Result<f64, String>> =
                splits.iter().map(|s| s.cells[v][p].clone()).collect();
            rows.push(ResultRow::aggregate(policy.to_string(), variant, per_split));
        }
    }
    Ok(ProtocolOutcome {
        rows,
        splits: splits.into_iter().map(|s| s.artifacts).collect(),
    })
}

/// Scores caller-supplied deterministic policies over the same `K` seeded
/// splits as [`run_protocol`] — same split seeds, same per-split propensity
/// fitting when the config asks for estimated propensities — but with no
/// retraining: each named policy is evaluated as-is on every test part.
/// Emits one row per (policy, variant) in the given policy order.
pub fn evaluate_policies(
    d: &Dataset,
    policies: &[(String, Box<dyn DeterministicPolicy + Sync + '_>)],
    cfg: &ProtocolConfig,
) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    if policies.is_empty() {
        return Err(Error::config("no policies supplied to evaluate"));
    }
    let estimated = cfg.train.propensity_source == PropensitySelector::Estimated;

    struct EvalSplit {
        model: Option<MultinomialLogitModel>,
        variants: Vec<Dataset>,
    }

    let splits: Vec<EvalSplit> = (0..cfg.k_splits)
        .into_par_iter()
        .map(|k| {
            let split_seed = seeding::mix_indexed(cfg.seed, tags::SPLIT, k as u64);
            let (train_part, test_part) = split_dataset(d, cfg.train_fraction, split_seed)?;
            let model = if estimated {
                let fit_seed = seeding::mix_indexed(cfg.seed, tags::PROPENSITY, k as u64);
                let (model, _) = fit_propensity_floored(
                    &train_part,
                    cfg.propensity_epochs,
                    cfg.propensity_lr,
                    fit_seed,
                    cfg.propensity_floor,
                )?;
                Some(model)
            } else {
                None
            };
            let mut variants = vec![test_part];
            if cfg.downsample {
                let ds_seed = seeding::mix_indexed(cfg.seed, tags::DOWNSAMPLE, k as u64);
                variants.push(downsample_balanced(&variants[0], ds_seed)?);
            }
            Ok(EvalSplit { model, variants })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_variants = if cfg.downsample { 2 } else { 1 };
    let mut rows = Vec::with_capacity(policies.len() * n_variants);
    for v in 0..n_variants {
        let variant = [VARIANT_COMPLETE, VARIANT_DOWNSAMPLED][v];
        for (name, policy) in policies {
            let per_split: Vec<std::result::Result<f64, String>> = splits
                .iter()
                .map(|s| {
                    let source = match &s.model {
                        Some(m) => PropensitySource::Model(m),
                        None => PropensitySource::Logged,
                    };
                    stringify(test_loss(&s.variants[v], policy.as_ref(), source))
                })
                .collect();
            rows.push(ResultRow::aggregate(name.clone(), variant, per_split));
        }
    }
    Ok(rows)
}
