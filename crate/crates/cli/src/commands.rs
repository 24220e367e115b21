//! Implementations of the six subcommands. Each one is a pure function of
//! (inputs, configuration, master seed): rerunning with identical arguments
//! rewrites byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use tiltopt_core::dataset::{format_real, load_dataset, save_dataset, split_dataset};
use tiltopt_core::estimators::diagnostics::{
    estimator_diagnostics, DiagnosticsConfig, EstimatorKind,
};
use tiltopt_core::evaluation::{evaluate_policies, results_csv, run_protocol, ProtocolConfig};
use tiltopt_core::learning::{train_dm, train_ips, EpochEval, TrainConfig, TrainHistory};
use tiltopt_core::models::{save_loss_net, save_policy_net, LossNet, PolicyNet};
use tiltopt_core::propensity::{
    fit_propensity_floored, predict_propensity, save_propensity_model, MultinomialLogitModel,
    PropensitySource,
};
use tiltopt_core::seeding::{self, tags};
use tiltopt_core::synthenv::generate_dataset;
use tiltopt_core::types::{DeterministicPolicy, StochasticPolicy, UniformPolicy};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;

/// Samples a synthetic interaction log, writes it as CSV, and records
/// provenance (config digest, seed, size) in a `.meta` sidecar.
pub fn generate(cfg: &RunConfig, n: usize, out: Option<PathBuf>) -> Result<()> {
    if n == 0 {
        bail!("n must be >= 1");
    }
    cfg.env.validate()?;
    let out = cfg.out_path(out, "dataset.csv");
    let d = generate_dataset(&cfg.env, n, cfg.seed)?;
    save_dataset(&d, &out)?;

    let meta_path = sidecar_path(&out);
    let meta = format!(
        "config_digest = {}\nseed = {}\nn = {}\n",
        cfg.env.digest(),
        cfg.seed,
        n
    );
    write_text(&meta_path, &meta)?;

    let counts = d.action_counts();
    println!(
        "wrote {} ({n} samples; down/nochange/up = {}/{}/{})",
        out.display(),
        counts[0],
        counts[1],
        counts[2]
    );
    println!("wrote {}", meta_path.display());
    Ok(())
}

/// Fits the propensity model on a logged dataset, writes the checkpoint,
/// and reports the fit on stdout.
pub fn fit_propensity(cfg: &RunConfig, dataset: &Path, out: Option<PathBuf>) -> Result<()> {
    let d = load_dataset(dataset)?;
    let out = cfg.out_path(out, "propensity_model.csv");
    let (model, report) = fit_propensity_floored(
        &d,
        cfg.propensity.epochs,
        cfg.propensity.lr,
        seeding::mix(cfg.seed, tags::PROPENSITY),
        cfg.propensity.floor,
    )?;
    save_propensity_model(&model, &out)?;

    println!(
        "final_cross_entropy = {}",
        format_real(report.final_cross_entropy)
    );
    println!("epochs_run = {}", report.epochs_run);
    println!("converged = {}", report.converged);

    // Mean absolute gap between the model's probability of each logged
    // action and the recorded propensity, over the rows that carry one.
    let mut total = 0.0;
    let mut counted = 0usize;
    for s in &d.samples {
        if let Some(logged) = s.propensity {
            let predicted = predict_propensity(&model, &s.context).prob(s.action);
            total += (predicted - logged).abs();
            counted += 1;
        }
    }
    if counted > 0 {
        println!(
            "mean_abs_propensity_error = {}",
            format_real(total / counted as f64)
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// Which propensities the training run uses for importance weighting.
enum ResolvedPropensity {
    Logged,
    Model(MultinomialLogitModel),
}

impl ResolvedPropensity {
    fn source(&self) -> PropensitySource<'_> {
        match self {
            ResolvedPropensity::Logged => PropensitySource::Logged,
            ResolvedPropensity::Model(m) => PropensitySource::Model(m),
        }
    }
}

/// The artifact a training run produces.
enum TrainedModel {
    Policy(PolicyNet),
    Loss(LossNet),
}

/// Step sizes tried by `--grid-search`.
const GRID_STEP_SIZES: [f64; 5] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2];
/// Mini-batch sizes tried by `--grid-search`, as fractions of the training
/// set: N/10, N/100, N/1000 (rounded, clamped, deduplicated).
const GRID_BATCH_DIVISORS: [usize; 3] = [10, 100, 1000];

/// Trains a policy network (`ips`) or a loss network (`dm`) and writes the
/// checkpoint plus the per-epoch history CSV.
#[allow(clippy::too_many_arguments)]
pub fn train(
    cfg: &RunConfig,
    dataset: &Path,
    estimator: &str,
    propensity: &str,
    test: Option<&Path>,
    out: Option<PathBuf>,
    history: Option<PathBuf>,
    grid_search: bool,
) -> Result<()> {
    let is_ips = match estimator {
        "ips" => true,
        "dm" => false,
        other => bail!("unknown estimator `{other}` (expected ips or dm)"),
    };

    let full = load_dataset(dataset)?;
    let (d_train, d_test) = match test {
        Some(t) => (full, load_dataset(t)?),
        None => split_dataset(
            &full,
            cfg.eval.train_fraction,
            seeding::mix_indexed(cfg.seed, tags::SPLIT, 0),
        )?,
    };

    let resolved = match propensity {
        "logged" => ResolvedPropensity::Logged,
        "estimated" => {
            let (model, _) = fit_propensity_floored(
                &d_train,
                cfg.propensity.epochs,
                cfg.propensity.lr,
                seeding::mix_indexed(cfg.seed, tags::PROPENSITY, 0),
                cfg.propensity.floor,
            )?;
            ResolvedPropensity::Model(model)
        }
        path => match Checkpoint::load(Path::new(path))? {
            Checkpoint::Propensity(m) => ResolvedPropensity::Model(m),
            other => bail!(
                "{path} is a {}, expected a propensity model",
                other.kind_name()
            ),
        },
    };

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;

    let default_name = if is_ips {
        "policy_net.csv"
    } else {
        "loss_net.csv"
    };
    let out = cfg.out_path(out, default_name);
    let history_path = history.unwrap_or_else(|| default_history_path(&out));

    let run_once = |tc: &TrainConfig| -> Result<(TrainedModel, TrainHistory)> {
        let eval = EpochEval {
            d_test: &d_test,
            lambda_hat: resolved.source(),
        };
        if is_ips {
            let (net, hist) = train_ips(&d_train, resolved.source(), tc, Some(eval))?;
            Ok((TrainedModel::Policy(net), hist))
        } else {
            let (net, hist) = train_dm(&d_train, tc, Some(eval))?;
            Ok((TrainedModel::Loss(net), hist))
        }
    };

    let (model, hist) = if grid_search {
        search_grid(&train_cfg, is_ips, d_train.len(), run_once)?
    } else {
        run_once(&train_cfg)?
    };

    match &model {
        TrainedModel::Policy(net) => save_policy_net(net, &out)?,
        TrainedModel::Loss(net) => save_loss_net(net, &out)?,
    }
    write_text(&history_path, &hist.to_csv())?;

    if let Some(v) = hist.objective.last() {
        println!("final_objective = {}", format_real(*v));
    }
    if let Some(v) = hist.test_loss.as_ref().and_then(|t| t.last()) {
        println!("final_test_loss = {}", format_real(*v));
    }
    println!("wrote {}", out.display());
    println!("wrote {}", history_path.display());
    Ok(())
}

/// Runs every (step size, batch size) combination and keeps the run with
/// the lowest final held-out test loss; ties keep the earliest combination.
fn search_grid(
    base: &TrainConfig,
    is_ips: bool,
    n_train: usize,
    run_once: impl Fn(&TrainConfig) -> Result<(TrainedModel, TrainHistory)>,
) -> Result<(TrainedModel, TrainHistory)> {
    let mut batches: Vec<usize> = Vec::new();
    for d in GRID_BATCH_DIVISORS {
        let b = div_round(n_train, d).clamp(1, n_train);
        if !batches.contains(&b) {
            batches.push(b);
        }
    }

    let mut best: Option<(f64, f64, usize, TrainedModel, TrainHistory)> = None;
    for &alpha in &GRID_STEP_SIZES {
        for &batch in &batches {
            let mut tc = base.clone();
            if is_ips {
                tc.lr_policy = alpha;
            } else {
                tc.lr_loss = alpha;
            }
            tc.batch_size = Some(batch);
            let (model, hist) = run_once(&tc)?;
            let metric = hist
                .test_loss
                .as_ref()
                .and_then(|t| t.last().copied())
                .ok_or_else(|| anyhow!("grid search needs per-epoch test losses"))?;
            println!(
                "grid lr = {} batch = {batch} final_test_loss = {}",
                format_real(alpha),
                format_real(metric)
            );
            if best.as_ref().map_or(true, |(m, ..)| metric < *m) {
                best = Some((metric, alpha, batch, model, hist));
            }
        }
    }
    let (metric, alpha, batch, model, hist) =
        best.expect("the grid always has at least one combination");
    println!(
        "selected lr = {} batch = {batch} final_test_loss = {}",
        format_real(alpha),
        format_real(metric)
    );
    Ok((model, hist))
}

/// Runs the K-split evaluation protocol, or scores the given checkpoints
/// as-is over the same splits; writes the results table.
pub fn evaluate(
    cfg: &RunConfig,
    dataset: &Path,
    policies: &[PathBuf],
    out: Option<PathBuf>,
) -> Result<()> {
    let d = load_dataset(dataset)?;
    let out = cfg.out_path(out, "results.csv");

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let pcfg = ProtocolConfig {
        train: train_cfg,
        k_splits: cfg.eval.splits,
        train_fraction: cfg.eval.train_fraction,
        downsample: cfg.eval.downsample,
        lambda_eval: cfg.eval.lambda_eval,
        propensity_epochs: cfg.propensity.epochs,
        propensity_lr: cfg.propensity.lr,
        propensity_floor: cfg.propensity.floor,
        seed: cfg.seed,
    };

    let rows = if policies.is_empty() {
        run_protocol(&d, &pcfg)?.rows
    } else {
        let mut named: Vec<(String, Box<dyn DeterministicPolicy + Sync>)> = Vec::new();
        for path in policies {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("policy")
                .to_string();
            named.push((name, Checkpoint::load(path)?.into_deterministic()));
        }
        evaluate_policies(&d, &named, &pcfg)?
    };

    let csv = results_csv(&rows);
    write_text(&out, &csv)?;
    print!("{csv}");
    println!("wrote {}", out.display());
    Ok(())
}

/// Tabulates a checkpoint's action probabilities on a `grid × grid` uniform
/// lattice over the unit square of alarm levels.
pub fn heatmap(
    cfg: &RunConfig,
    checkpoint: &Path,
    grid: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    if grid < 2 {
        bail!("grid must be >= 2");
    }
    let out = cfg.out_path(out, "heatmap.csv");
    let view = Checkpoint::load(checkpoint)?.into_stochastic();

    let mut csv = String::from("coverage_alarm,capacity_alarm,p_downtilt,p_nochange,p_uptilt\n");
    let denom = (grid - 1) as f64;
    for i in 0..grid {
        let coverage = i as f64 / denom;
        for j in 0..grid {
            let capacity = j as f64 / denom;
            let x = tiltopt_core::types::Context::new(coverage, capacity)?;
            let p = view.action_probabilities(&x).probs();
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                format_real(coverage),
                format_real(capacity),
                format_real(p[0]),
                format_real(p[1]),
                format_real(p[2]),
            ));
        }
    }
    write_text(&out, &csv)?;
    println!("wrote {} ({} rows)", out.display(), grid * grid);
    Ok(())
}

/// Replicate bias/variance study of a risk estimator on the synthetic
/// environment; writes the diagnostics table.
#[allow(clippy::too_many_arguments)]
pub fn diagnose(
    cfg: &RunConfig,
    estimator: &str,
    loss_model: Option<&Path>,
    policy: Option<&Path>,
    n_list: Option<&str>,
    replicates: Option<usize>,
    oracle_draws: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = cfg.out_path(out, "diagnostics.csv");

    let mut dcfg = DiagnosticsConfig {
        seed: cfg.seed,
        ..DiagnosticsConfig::default()
    };
    if let Some(list) = n_list {
        dcfg.n_values = parse_n_list(list)?;
    }
    if let Some(m) = replicates {
        dcfg.m_replicates = m;
    }
    if let Some(draws) = oracle_draws {
        dcfg.oracle_draws = draws;
    }

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let fixed_net = match loss_model {
        Some(p) => match Checkpoint::load(p)? {
            Checkpoint::Loss(l) => Some(l),
            other => bail!(
                "{} is a {}, expected a loss network",
                p.display(),
                other.kind_name()
            ),
        },
        None => None,
    };
    let kind = match estimator {
        "ips" => {
            if fixed_net.is_some() {
                bail!("--loss-model applies only to --estimator dm");
            }
            EstimatorKind::Ips
        }
        "dm" => match &fixed_net {
            Some(net) => EstimatorKind::DmFixed(net),
            None => EstimatorKind::DmRefit(&train_cfg),
        },
        other => bail!("unknown estimator `{other}` (expected ips or dm)"),
    };

    let report = match policy {
        Some(p) => {
            let view = Checkpoint::load(p)?.into_stochastic();
            estimator_diagnostics(&cfg.env, &view, kind, &dcfg)?
        }
        None => estimator_diagnostics(&cfg.env, &UniformPolicy, kind, &dcfg)?,
    };
    report.save(&out)?;
    print!("{}", report.to_csv());
    println!("wrote {}", out.display());
    Ok(())
}

fn parse_n_list(list: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        let n: usize = part
            .parse()
            .map_err(|_| anyhow!("invalid n-list entry `{part}`"))?;
        if n == 0 {
            bail!("invalid n-list entry `0`: dataset sizes must be >= 1");
        }
        out.push(n);
    }
    if out.is_empty() {
        bail!("invalid n-list: no entries");
    }
    Ok(out)
}

/// `round(n / d)` in integer arithmetic.
fn div_round(n: usize, d: usize) -> usize {
    (n + d / 2) / d
}

/// `<path>.meta`, keeping the original extension in place.
fn sidecar_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_os_string();
    os.push(".meta");
    PathBuf::from(os)
}

fn default_history_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    out.with_file_name(format!("{stem}_history.csv"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_list_parses_and_rejects() {
        assert_eq!(
            parse_n_list("500, 1000,2000").unwrap(),
            vec![500, 1000, 2000]
        );
        assert!(parse_n_list("12,abc").is_err());
        assert!(parse_n_list("12,0").is_err());
    }

    #[test]
    fn batch_grid_rounding() {
        assert_eq!(div_round(216605, 100), 2166);
        assert_eq!(div_round(50, 1000), 0);
        assert_eq!(div_round(150, 100), 2);
    }

    #[test]
    fn derived_paths() {
        assert_eq!(
            sidecar_path(Path::new("/tmp/data.csv")),
            PathBuf::from("/tmp/data.csv.meta")
        );
        assert_eq!(
            default_history_path(Path::new("/tmp/policy_net.csv")),
            PathBuf::from("/tmp/policy_net_history.csv")
        );
    }
}
