//! Off-policy risk estimators and the metrics built on them.
//!
//! Given a log collected under one policy, these estimators answer "how
//! would a different policy have done?" without deploying it:
//!
//! * [`ips_risk`] — inverse-propensity scoring: reweight each logged loss
//!   by how much more (or less) likely the target policy is to repeat the
//!   logged action. Unbiased when the propensities are exact, but the
//!   weights inflate its variance.
//! * [`dm_risk`] — the direct method: average a fitted loss model's
//!   predictions under the target policy's action probabilities. Typically
//!   lower variance, biased by whatever the loss model gets wrong.
//! * [`empirical_mse`] — the regression objective the loss model minimizes
//!   on logged pairs.
//! * [`test_loss`] — importance-weighted average loss of a deterministic
//!   policy over the logged samples it agrees with; the headline comparison
//!   metric. Lower is better.
//!
//! The [`diagnostics`] submodule measures estimator bias and variance over
//! replicated synthetic datasets against the environment oracle.

pub mod diagnostics;

use crate::dataset::Dataset;
use crate::error::Error;
use crate::models::LossNet;
use crate::propensity::PropensitySource;
use crate::types::{Action, Context, DeterministicPolicy, StochasticPolicy};
use crate::Result;

/// A risk estimate together with its Monte-Carlo uncertainty: the mean of
/// per-sample (or per-context) terms, the sample standard deviation of
/// those terms divided by `sqrt(n)`, and the number of terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl RiskEstimate {
    /// Mean and standard error of a slice of per-term values. A single
    /// term has no measurable spread, so its standard error is zero.
    pub fn from_terms(terms: &[f64]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = terms.len();
        let mean = terms.iter().sum::<f64>() / n as f64;
        let std_error = if n < 2 {
            0.0
        } else {
            let ss: f64 = terms.iter().map(|t| (t - mean) * (t - mean)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        };
        Ok(RiskEstimate {
            value: mean,
            std_error,
            n,
        })
    }
}

/// The importance weight `π(a|x) / λ(a|x)`: how much more likely the target
/// policy is than the logging policy to take the logged action. `lambda` is
/// the logging propensity already resolved for `(x, a)` (from the log or
/// from a fitted model via [`PropensitySource::propensity_of`]).
///
/// Errors when `lambda` is not strictly positive — the sign of a propensity
/// source without a floor.
pub fn ips_weight(pi: &dyn StochasticPolicy, lambda: f64, x: &Context, a: Action) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::NonPositivePropensity { value: lambda });
    }
    Ok(pi.action_probabilities(x).prob(a) / lambda)
}

/// Inverse-propensity-scoring estimate of the risk of `pi` from logged
/// data: the mean of `w(x_i, a_i) · δ_i` with `w = π/λ`. Uses each sample's
/// recorded propensity or a fitted model's prediction according to
/// `lambda_hat`. Errors on an empty dataset, on a missing recorded
/// propensity, and on a non-positive propensity.
pub fn ips_risk(
    d: &Dataset,
    pi: &dyn StochasticPolicy,
    lambda_hat: PropensitySource<'_>,
) -> Result<RiskEstimate> {
    let terms = d
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let lambda = lambda_hat.propensity_of(s, i)?;
            Ok(ips_weight(pi, lambda, &s.context, s.action)? * s.loss)
        })
        .collect::<Result<Vec<f64>>>()?;
    RiskEstimate::from_terms(&terms)
}

/// Direct-method estimate of the risk of `pi`: the mean over logged
/// contexts of `Σ_a π(a|x_i) · δ̂(x_i, a)`, where `δ̂` is the loss model's
/// prediction. Reads only the contexts of `d` — the logged actions, losses
/// and propensities do not enter. Errors on an empty dataset.
pub fn dm_risk(d: &Dataset, pi: &dyn StochasticPolicy, l: &LossNet) -> Result<RiskEstimate> {
    let terms: Vec<f64> = d
        .samples
        .iter()
        .map(|s| {
            let probs = pi.action_probabilities(&s.context).probs();
            let preds = l.predictions(&s.context);
            probs.iter().zip(&preds).map(|(p, d)| p * d).sum()
        })
        .collect();
    RiskEstimate::from_terms(&terms)
}

/// Mean squared error of the loss model on the logged pairs: the average of
/// `(δ_i − δ̂(x_i, a_i))²` using only the logged action's output entry.
/// This is the objective loss-model training minimizes. Errors on an empty
/// dataset.
pub fn empirical_mse(l: &LossNet, d: &Dataset) -> Result<f64> {
    if d.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = d
        .samples
        .iter()
        .map(|s| {
            let r = s.loss - l.predictions(&s.context)[s.action.index()];
            r * r
        })
        .sum();
    Ok(total / d.samples.len() as f64)
}

/// Importance-weighted test loss of a deterministic policy: over the
/// samples whose logged action equals the policy's decision, the sum of
/// `δ_i / λ(a_i|x_i)` divided by the number of such samples. Lower is
/// better. Errors when the policy matches no logged action (the ratio would
/// be 0/0), on an empty dataset, and on propensity-resolution failures.
pub fn test_loss(
    d_test: &Dataset,
    pi_det: &dyn DeterministicPolicy,
    lambda_hat: PropensitySource<'_>,
) -> Result<f64> {
    if d_test.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut weighted_sum = 0.0;
    let mut matched = 0usize;
    for (i, s) in d_test.samples.iter().enumerate() {
        if pi_det.decide(&s.context) != s.action {
            continue;
        }
        let lambda = lambda_hat.propensity_of(s, i)?;
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::NonPositivePropensity { value: lambda });
        }
        weighted_sum += s.loss / lambda;
        matched += 1;
    }
    if matched == 0 {
        return Err(Error::NoMatchedSamples {
            n: d_test.samples.len(),
        });
    }
    Ok(weighted_sum / matched as f64)
}
