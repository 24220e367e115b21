//! Off-policy training loops for the two network heads, plus greedy
//! deterministic policy extraction.
//!
//! [`train_ips`] minimizes the importance-weighted empirical risk
//! `(1/N) Σ_i [π_w(a_i|x_i)/λ(a_i|x_i)]·δ_i` over the policy network's
//! parameters — directly pushing probability mass away from logged actions
//! that incurred positive loss and toward those that paid off, rescaled by
//! how often the logging policy took them. [`train_dm`] fits the loss
//! network by minimizing the mean squared error to the logged losses, with
//! gradient flowing only through each sample's logged-action output.
//!
//! Both loops run mini-batch Adam with a seeded per-epoch reshuffle and are
//! bit-for-bit deterministic given the dataset and config. Training
//! histories record the exact full-training-set objective after each
//! epoch's updates (not a running mini-batch average), so the last entry
//! always equals the objective of the returned parameters.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::dataset::{format_real, Dataset};
use crate::error::Error;
use crate::estimators::{empirical_mse, test_loss};
use crate::models::{adam_step, AdamState, LossNet, PolicyNet, DEFAULT_HIDDEN};
use crate::propensity::{PropensitySelector, PropensitySource};
use crate::seeding::{self, tags};
use crate::types::{argmax_action, argmin_action, Action, Context, DeterministicPolicy};
use crate::Result;

/// Hyperparameters for both training loops.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Passes through the training set.
    pub epochs: usize,
    /// Mini-batch size; `None` means one hundredth of the training set
    /// (rounded, clamped to `[1, N]`).
    pub batch_size: Option<usize>,
    /// Adam step size for the policy network.
    pub lr_policy: f64,
    /// Adam step size for the loss network.
    pub lr_loss: f64,
    /// Drives network initialization and the per-epoch reshuffle.
    pub seed: u64,
    /// Which propensities the surrounding protocol should hand to
    /// [`train_ips`]: the logged ones or a fitted model's. The training
    /// loop itself receives the already-resolved [`PropensitySource`].
    pub propensity_source: PropensitySelector,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: None,
            lr_policy: 5e-4,
            lr_loss: 1e-3,
            seed: 0,
            propensity_source: PropensitySelector::Estimated,
        }
    }
}

impl TrainConfig {
    /// The mini-batch size used on a training set of `n` samples.
    pub fn resolved_batch_size(&self, n: usize) -> usize {
        match self.batch_size {
            Some(b) => b,
            None => ((n + 50) / 100).clamp(1, n.max(1)),
        }
    }

    /// Validates the config against a training set of `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        let b = self.resolved_batch_size(n);
        if b == 0 || b > n {
            return Err(Error::config(format!("batch size {b} must be in [1, {n}]")));
        }
        for (name, lr) in [("lr_policy", self.lr_policy), ("lr_loss", self.lr_loss)] {
            if !lr.is_finite() || lr <= 0.0 {
                return Err(Error::config(format!(
                    "{name} must be positive and finite, got {lr}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-epoch record of a training run. `objective` holds the full
/// training-set objective evaluated after each epoch's updates; its last
/// entry equals the objective of the returned parameters exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub objective: Vec<f64>,
    /// Held-out test loss of the greedy policy after each epoch, when an
    /// evaluation set was supplied.
    pub test_loss: Option<Vec<f64>>,
}

impl TrainHistory {
    /// Renders the history as CSV with header `epoch,objective,test_loss`;
    /// the third column is empty when no evaluation set was supplied.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,objective,test_loss\n");
        for (i, obj) in self.objective.iter().enumerate() {
            let test = match &self.test_loss {
                Some(t) => format_real(t[i]),
                None => String::new(),
            };
            let _ = writeln!(out, "{},{},{}", i + 1, format_real(*obj), test);
        }
        out
    }
}

/// Held-out evaluation performed once per epoch during training: the
/// greedy policy extracted from the current parameters is scored with
/// [`test_loss`] on `d_test`.
#[derive(Clone, Copy)]
pub struct EpochEval<'a> {
    pub d_test: &'a Dataset,
    pub lambda_hat: PropensitySource<'a>,
}

/// Greedy deterministic policy over a policy network: the action with the
/// largest probability, ties broken toward the earliest action in
/// canonical order. Equivalent to the arg-max of the logits, so it is
/// invariant to any strictly monotone transform of them.
#[derive(Debug, Clone)]
pub struct GreedyFromPolicy(pub PolicyNet);

impl DeterministicPolicy for GreedyFromPolicy {
    fn decide(&self, x: &Context) -> Action {
        argmax_action(self.0.logits(x))
    }
}

/// Greedy deterministic policy over a loss network: the action with the
/// smallest predicted loss, same tie rule as [`GreedyFromPolicy`].
#[derive(Debug, Clone)]
pub struct GreedyFromLoss(pub LossNet);

impl DeterministicPolicy for GreedyFromLoss {
    fn decide(&self, x: &Context) -> Action {
        argmin_action(self.0.predictions(x))
    }
}

/// Wraps a policy network in its greedy deterministic policy.
pub fn greedy_from_policy(p: &PolicyNet) -> GreedyFromPolicy {
    GreedyFromPolicy(p.clone())
}

/// Wraps a loss network in its greedy deterministic policy.
pub fn greedy_from_loss(l: &LossNet) -> GreedyFromLoss {
    GreedyFromLoss(l.clone())
}

/// The importance-weighted training objective of a policy network on a
/// dataset: `(1/N) Σ_i [π_w(a_i|x_i)/λ_i]·δ_i`. This is the quantity
/// recorded per epoch by [`train_ips`].
pub fn ips_training_objective(
    p: &PolicyNet,
    d: &Dataset,
    lambda_hat: PropensitySource<'_>,
) -> Result<f64> {
    if d.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (i, s) in d.samples.iter().enumerate() {
        let lambda = lambda_hat.propensity_of(s, i)?;
        let prob = p.probabilities(&s.context).prob(s.action);
        total += prob / lambda * s.loss;
    }
    Ok(total / d.samples.len() as f64)
}

/// Resolves the logging propensity of every sample up front, failing fast
/// on missing or non-positive values.
fn resolve_lambdas(d: &Dataset, lambda_hat: PropensitySource<'_>) -> Result<Vec<f64>> {
    d.samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let lambda = lambda_hat.propensity_of(s, i)?;
            if !lambda.is_finite() || lambda <= 0.0 {
                return Err(Error::NonPositivePropensity { value: lambda });
            }
            Ok(lambda)
        })
        .collect()
}

fn check_objective_finite(value: f64, context: &str) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: context.into(),
        });
    }
    Ok(value)
}

/// Trains the policy network by mini-batch Adam on the importance-weighted
/// risk. Propensities are resolved once before the loop from `lambda_hat`.
/// Deterministic given `(d_train, cfg)`; `eval`, when supplied, scores the
/// greedy policy on held-out data once per epoch.
pub fn train_ips(
    d_train: &Dataset,
    lambda_hat: PropensitySource<'_>,
    cfg: &TrainConfig,
    eval: Option<EpochEval<'_>>,
) -> Result<(PolicyNet, TrainHistory)> {
    let n = d_train.samples.len();
    cfg.validate(n)?;
    let lambdas = resolve_lambdas(d_train, lambda_hat)?;
    // δ_i/λ_i is the constant scale of sample i's gradient contribution.
    let scales: Vec<f64> = d_train
        .samples
        .iter()
        .zip(&lambdas)
        .map(|(s, l)| s.loss / l)
        .collect();
    let inputs: Vec<[f64; 2]> = d_train
        .samples
        .iter()
        .map(|s| s.context.features())
        .collect();

    let mut net = PolicyNet::new(&DEFAULT_HIDDEN, seeding::mix(cfg.seed, tags::TRAIN_IPS))?;
    let mut adam = AdamState::new(net.mlp().param_count());
    let mut grad = vec![0.0; net.mlp().param_count()];
    let mut shuffle_rng = seeding::rng(cfg.seed, tags::TRAIN_IPS);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.resolved_batch_size(n);
    let mut history = TrainHistory {
        objective: Vec::with_capacity(cfg.epochs),
        test_loss: eval.as_ref().map(|_| Vec::with_capacity(cfg.epochs)),
    };

    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let inv_b = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let cache = net.mlp().forward_cached(&inputs[i]);
                let probs = crate::models::softmax3([
                    cache.output()[0],
                    cache.output()[1],
                    cache.output()[2],
                ]);
                let logged = d_train.samples[i].action.index();
                // d/d-logit_k of (δ/λ)·p_logged, averaged over the batch.
                let base = scales[i] * probs[logged] * inv_b;
                let upstream = [
                    base * (f64::from(logged == 0) - probs[0]),
                    base * (f64::from(logged == 1) - probs[1]),
                    base * (f64::from(logged == 2) - probs[2]),
                ];
                net.mlp().backward(&cache, &upstream, &mut grad);
            }
            adam_step(net.mlp_mut().params_mut(), &grad, &mut adam, cfg.lr_policy);
        }
        let objective = ips_training_objective(&net, d_train, lambda_hat)?;
        history
            .objective
            .push(check_objective_finite(objective, "ips training objective")?);
        if let Some(e) = &eval {
            let greedy = GreedyFromPolicy(net.clone());
            history
                .test_loss
                .as_mut()
                .expect("test_loss history allocated when eval is present")
                .push(test_loss(e.d_test, &greedy, e.lambda_hat)?);
        }
    }
    Ok((net, history))
}

/// Trains the loss network by mini-batch Adam on the mean squared error to
/// the logged losses; gradient flows only through each sample's logged
/// action. The recorded objective is [`empirical_mse`] on the full
/// training set. Deterministic given `(d_train, cfg)`.
pub fn train_dm(
    d_train: &Dataset,
    cfg: &TrainConfig,
    eval: Option<EpochEval<'_>>,
) -> Result<(LossNet, TrainHistory)> {
    let n = d_train.samples.len();
    cfg.validate(n)?;
    let inputs: Vec<[f64; 2]> = d_train
        .samples
        .iter()
        .map(|s| s.context.features())
        .collect();

    let mut net = LossNet::new(&DEFAULT_HIDDEN, seeding::mix(cfg.seed, tags::TRAIN_DM))?;
    let mut adam = AdamState::new(net.mlp().param_count());
    let mut grad = vec![0.0; net.mlp().param_count()];
    let mut shuffle_rng = seeding::rng(cfg.seed, tags::TRAIN_DM);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.resolved_batch_size(n);
    let mut history = TrainHistory {
        objective: Vec::with_capacity(cfg.epochs),
        test_loss: eval.as_ref().map(|_| Vec::with_capacity(cfg.epochs)),
    };

    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let inv_b = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let cache = net.mlp().forward_cached(&inputs[i]);
                let logged = d_train.samples[i].action.index();
                let residual = d_train.samples[i].loss - cache.output()[logged];
                let mut upstream = [0.0; 3];
                upstream[logged] = -2.0 * residual * inv_b;
                net.mlp().backward(&cache, &upstream, &mut grad);
            }
            adam_step(net.mlp_mut().params_mut(), &grad, &mut adam, cfg.lr_loss);
        }
        let objective = empirical_mse(&net, d_train)?;
        history
            .objective
            .push(check_objective_finite(objective, "mse training objective")?);
        if let Some(e) = &eval {
            let greedy = GreedyFromLoss(net.clone());
            history
                .test_loss
                .as_mut()
                .expect("test_loss history allocated when eval is present")
                .push(test_loss(e.d_test, &greedy, e.lambda_hat)?);
        }
    }
    Ok((net, history))
}
