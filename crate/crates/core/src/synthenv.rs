//! Synthetic sector environment: context sampling, a configurable logging
//! policy, the tilt transition law, a dataset generator and Monte-Carlo
//! oracles for expected loss and policy risk.
//!
//! Contexts `(coverage_alarm, capacity_alarm)` are drawn i.i.d. from a Beta
//! distribution per component. Applying a tilt moves both alarms in opposite
//! directions — up-tilt lowers the coverage alarm and raises the capacity
//! alarm by `effect_magnitude`, down-tilt the reverse — plus Gaussian noise,
//! clipped to `[0, 1]`. The loss of a step is the change in the worst alarm:
//! `max(next) - max(current)`, negative when the intervention helped.

use crate::dataset::{format_real, Dataset};
use crate::error::Error;
use crate::seeding::{self, tags};
use crate::types::{
    Action, ActionDistribution, Context, DeterministicPolicy, LoggedSample, StochasticPolicy,
};
use crate::Result;
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

/// Which logging policy generated the historical actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoggingKind {
    /// Threshold rule: favors `DownTilt` when the coverage alarm exceeds
    /// `rule_threshold_high`, else `UpTilt` when the capacity alarm does,
    /// else `NoChange`. The favored action gets probability
    /// `1 - 2 * logging_smoothing`; the other two get `logging_smoothing`.
    RuleBased,
    /// Softmax over per-action affine scores of `(1, coverage, capacity)`,
    /// floored at `logging_smoothing` and renormalized.
    SoftmaxLinear,
}

impl LoggingKind {
    pub fn name(self) -> &'static str {
        match self {
            LoggingKind::RuleBased => "rule_based",
            LoggingKind::SoftmaxLinear => "softmax_linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rule_based" => Some(LoggingKind::RuleBased),
            "softmax_linear" => Some(LoggingKind::SoftmaxLinear),
            _ => None,
        }
    }
}

/// Configuration of the synthetic environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Number of sectors in the simulated network. Metadata only: samples
    /// are i.i.d. across sectors, so the generator does not loop over them.
    pub num_sectors: u32,
    /// Beta shape `a` shared by both alarm components.
    pub context_shape_a: f64,
    /// Beta shape `b` shared by both alarm components.
    pub context_shape_b: f64,
    /// KPI shift caused by one tilt step, in alarm units.
    pub effect_magnitude: f64,
    /// Standard deviation of the Gaussian KPI noise added per transition.
    pub noise_std: f64,
    /// Logging-policy family.
    pub logging_kind: LoggingKind,
    /// Exploration floor of the logging policy, in `(0, 1/3)`.
    pub logging_smoothing: f64,
    /// Alarm level above which the rule-based policy intervenes.
    pub rule_threshold_high: f64,
    /// Physical tilt step in degrees. Metadata only.
    pub tilt_step_epsilon: f64,
    /// Affine score coefficients `[intercept, w_coverage, w_capacity]` per
    /// action (canonical order) for the `SoftmaxLinear` logging policy.
    pub softmax_coefficients: [[f64; 3]; 3],
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            num_sectors: 21,
            context_shape_a: 2.0,
            context_shape_b: 5.0,
            effect_magnitude: 0.1,
            noise_std: 0.05,
            logging_kind: LoggingKind::RuleBased,
            logging_smoothing: 0.05,
            rule_threshold_high: 0.55,
            tilt_step_epsilon: 1.0,
            softmax_coefficients: [
                [-1.8, 3.0, 0.0], // DownTilt: activates with the coverage alarm
                [0.6, 0.0, 0.0],  // NoChange: constant conservative score
                [-1.8, 0.0, 3.0], // UpTilt: activates with the capacity alarm
            ],
        }
    }
}

impl EnvConfig {
    /// Checks every field range; call before using a hand-built config.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(msg.to_string()))
            }
        };
        check(self.num_sectors > 0, "num_sectors must be positive")?;
        check(
            self.context_shape_a > 0.0 && self.context_shape_a.is_finite(),
            "context_shape_a must be a positive real",
        )?;
        check(
            self.context_shape_b > 0.0 && self.context_shape_b.is_finite(),
            "context_shape_b must be a positive real",
        )?;
        check(
            self.effect_magnitude > 0.0 && self.effect_magnitude < 1.0,
            "effect_magnitude must be in (0, 1)",
        )?;
        check(
            self.noise_std >= 0.0 && self.noise_std.is_finite(),
            "noise_std must be a non-negative real",
        )?;
        check(
            self.logging_smoothing > 0.0 && self.logging_smoothing < 1.0 / 3.0,
            "logging_smoothing must be in (0, 1/3)",
        )?;
        check(
            self.rule_threshold_high > 0.0 && self.rule_threshold_high < 1.0,
            "rule_threshold_high must be in (0, 1)",
        )?;
        check(
            self.tilt_step_epsilon > 0.0 && self.tilt_step_epsilon.is_finite(),
            "tilt_step_epsilon must be a positive real",
        )?;
        check(
            self.softmax_coefficients
                .iter()
                .flatten()
                .all(|c| c.is_finite()),
            "softmax coefficients must be finite",
        )?;
        Ok(())
    }

    /// Canonical `key = value` rendering, used for digests and sidecars.
    pub fn canonical_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("env.num_sectors = {}", self.num_sectors),
            format!(
                "env.context_shape_a = {}",
                format_real(self.context_shape_a)
            ),
            format!(
                "env.context_shape_b = {}",
                format_real(self.context_shape_b)
            ),
            format!(
                "env.effect_magnitude = {}",
                format_real(self.effect_magnitude)
            ),
            format!("env.noise_std = {}", format_real(self.noise_std)),
            format!("env.logging_kind = {}", self.logging_kind.name()),
            format!(
                "env.logging_smoothing = {}",
                format_real(self.logging_smoothing)
            ),
            format!(
                "env.rule_threshold_high = {}",
                format_real(self.rule_threshold_high)
            ),
            format!(
                "env.tilt_step_epsilon = {}",
                format_real(self.tilt_step_epsilon)
            ),
        ];
        for (action, row) in Action::ALL.iter().zip(self.softmax_coefficients) {
            lines.push(format!(
                "env.softmax_{} = {},{},{}",
                action.name().to_lowercase(),
                format_real(row[0]),
                format_real(row[1]),
                format_real(row[2]),
            ));
        }
        lines
    }

    /// Stable 16-hex-digit digest of the configuration.
    pub fn digest(&self) -> String {
        format!(
            "{:016x}",
            seeding::fnv1a64(self.canonical_lines().join("\n").as_bytes())
        )
    }

    /// The logging policy as a [`StochasticPolicy`].
    pub fn logging_policy(&self) -> LoggingPolicy<'_> {
        LoggingPolicy { config: self }
    }
}

/// View of an environment's logging policy as a [`StochasticPolicy`].
#[derive(Debug, Clone, Copy)]
pub struct LoggingPolicy<'a> {
    config: &'a EnvConfig,
}

impl StochasticPolicy for LoggingPolicy<'_> {
    fn action_probabilities(&self, x: &Context) -> ActionDistribution {
        logging_propensities(self.config, x)
    }
}

/// Draws one context: both alarm components i.i.d. `Beta(a, b)`.
pub fn sample_context<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Context {
    let beta =
        Beta::new(cfg.context_shape_a, cfg.context_shape_b).expect("validated shapes are positive");
    let coverage = beta.sample(rng);
    let capacity = beta.sample(rng);
    Context::new(coverage, capacity).expect("Beta samples lie in [0, 1]")
}

/// Action probabilities of the configured logging policy at context `x`.
/// Every probability is at least `logging_smoothing`.
pub fn logging_propensities(cfg: &EnvConfig, x: &Context) -> ActionDistribution {
    match cfg.logging_kind {
        LoggingKind::RuleBased => {
            let favored = if x.coverage_alarm() > cfg.rule_threshold_high {
                Action::DownTilt
            } else if x.capacity_alarm() > cfg.rule_threshold_high {
                Action::UpTilt
            } else {
                Action::NoChange
            };
            let mut probs = [cfg.logging_smoothing; 3];
            probs[favored.index()] = 1.0 - 2.0 * cfg.logging_smoothing;
            ActionDistribution::new(probs).expect("smoothing in (0, 1/3) gives a simplex")
        }
        LoggingKind::SoftmaxLinear => {
            let features = [1.0, x.coverage_alarm(), x.capacity_alarm()];
            let scores: Vec<f64> = cfg
                .softmax_coefficients
                .iter()
                .map(|row| row.iter().zip(features).map(|(w, f)| w * f).sum())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let soft = ActionDistribution::new([exps[0] / sum, exps[1] / sum, exps[2] / sum])
                .expect("softmax output is a simplex");
            soft.floor_and_renormalize(cfg.logging_smoothing)
                .expect("smoothing in (0, 1/3) is a valid floor")
        }
    }
}

/// Applies action `a` at context `x`: shifts both alarms by the signed
/// effect, adds Gaussian KPI noise (coverage drawn first), clips to `[0, 1]`
/// and returns the next context together with the step loss
/// `max(next) - max(current)`.
pub fn simulate_transition<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    x: &Context,
    a: Action,
    rng: &mut R,
) -> (Context, f64) {
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated noise_std is non-negative");
    let eta_q: f64 = noise.sample(rng);
    let eta_c: f64 = noise.sample(rng);
    let shift = a.sign() * cfg.effect_magnitude;
    let coverage = (x.coverage_alarm() - shift + eta_q).clamp(0.0, 1.0);
    let capacity = (x.capacity_alarm() + shift + eta_c).clamp(0.0, 1.0);
    let next = Context::new(coverage, capacity).expect("clipped values lie in [0, 1]");
    let loss = coverage.max(capacity) - x.coverage_alarm().max(x.capacity_alarm());
    (next, loss)
}

/// Generates a bandit-feedback log of `n` interactions under the configured
/// logging policy. Per sample the draw order is fixed: context (two Beta
/// draws), action (one uniform), transition noise (two normals) — so a seed
/// pins the byte-exact dataset. The logging probability of the chosen action
/// is recorded as the sample's propensity.
pub fn generate_dataset(cfg: &EnvConfig, n: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::config("dataset size must be at least 1"));
    }
    let mut rng = seeding::rng(seed, tags::GENERATE);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let x = sample_context(cfg, &mut rng);
        let propensities = logging_propensities(cfg, &x);
        let a = propensities.sample(&mut rng);
        let (_, loss) = simulate_transition(cfg, &x, a, &mut rng);
        samples.push(
            LoggedSample::new(x, a, loss, Some(propensities.prob(a)))
                .expect("generated samples satisfy the bounds by construction"),
        );
    }
    Ok(Dataset::new(
        samples,
        format!("synthenv n={n} seed={seed} config={}", cfg.digest()),
    ))
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    /// Mean and standard error (sample std / sqrt(n)) of the draws.
    fn from_draws(draws: &[f64]) -> McEstimate {
        let n = draws.len();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let std_error = if n < 2 {
            0.0
        } else {
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        McEstimate {
            value: mean,
            std_error,
            n,
        }
    }
}

/// Monte-Carlo oracle over an environment: estimates conditional expected
/// losses and policy risks by simulation.
#[derive(Debug, Clone)]
pub struct EnvOracle {
    pub config: EnvConfig,
    /// Number of Monte-Carlo draws per estimate.
    pub n_mc: usize,
    pub seed: u64,
}

impl EnvOracle {
    pub fn new(config: EnvConfig, n_mc: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_mc == 0 {
            return Err(Error::config("oracle n_mc must be at least 1"));
        }
        Ok(EnvOracle { config, n_mc, seed })
    }

    /// Expected loss of taking action `a` at context `x`, by `n_mc`
    /// simulated transitions. Calls share a generator seeded the same way,
    /// so estimates for different `(x, a)` use common random numbers.
    pub fn expected_loss(&self, x: &Context, a: Action) -> McEstimate {
        let mut rng = seeding::rng(self.seed, tags::ORACLE);
        let draws: Vec<f64> = (0..self.n_mc)
            .map(|_| simulate_transition(&self.config, x, a, &mut rng).1)
            .collect();
        McEstimate::from_draws(&draws)
    }

    /// Risk of a stochastic policy: the expected loss over fresh contexts,
    /// actions drawn from the policy and transition noise, by `n_mc` plain
    /// Monte-Carlo draws (one context, one action, one transition each).
    pub fn risk(&self, policy: &dyn StochasticPolicy) -> McEstimate {
        let mut rng = seeding::rng(self.seed, tags::ORACLE);
        let draws: Vec<f64> = (0..self.n_mc)
            .map(|_| {
                let x = sample_context(&self.config, &mut rng);
                let a = policy.action_probabilities(&x).sample(&mut rng);
                simulate_transition(&self.config, &x, a, &mut rng).1
            })
            .collect();
        McEstimate::from_draws(&draws)
    }
}

/// Free-function form of [`EnvOracle::expected_loss`].
pub fn oracle_expected_loss(o: &EnvOracle, x: &Context, a: Action) -> McEstimate {
    o.expected_loss(x, a)
}

/// Free-function form of [`EnvOracle::risk`].
pub fn oracle_risk(o: &EnvOracle, policy: &dyn StochasticPolicy) -> McEstimate {
    o.risk(policy)
}

/// The environment-optimal deterministic policy: per context it picks the
/// action with the smallest oracle expected loss (ties to the earliest
/// action in canonical order). Each decision costs `3 * n_mc` simulations,
/// so keep `n_mc` moderate when sweeping many contexts.
#[derive(Debug, Clone)]
pub struct OracleGreedyPolicy {
    pub oracle: EnvOracle,
}

impl DeterministicPolicy for OracleGreedyPolicy {
    fn decide(&self, x: &Context) -> Action {
        let values: Vec<f64> = Action::ALL
            .iter()
            .map(|&a| self.oracle.expected_loss(x, a).value)
            .collect();
        crate::types::argmin_action([values[0], values[1], values[2]])
    }
}
