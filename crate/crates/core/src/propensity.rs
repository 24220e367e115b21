//! Estimation of the logging policy from logged data.
//!
//! Importance-weighted estimators need the probability the logging policy
//! gave to each logged action. When the log does not carry those
//! probabilities (or they should be treated as unknown), this module fits a
//! multinomial logistic-regression model of action given context by
//! full-batch gradient descent on the mean categorical cross-entropy.
//!
//! Contexts enter through a quadratic feature map `[1, q, c, q·c, q², c²]`
//! (with `q` the coverage alarm rate and `c` the capacity alarm rate) so
//! threshold-style logging rules are approximable, not just linear ones.
//! Predicted probabilities are clamped below at a configurable floor and
//! renormalized, which bounds the importance weights computed from them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::{format_real, Dataset};
use crate::error::Error;
use crate::models::softmax3;
use crate::types::{Action, ActionDistribution, Context, LoggedSample, StochasticPolicy};
use crate::Result;

/// Number of entries produced by [`context_features`].
pub const NUM_FEATURES: usize = 6;

/// Default predict-time probability floor.
pub const DEFAULT_FLOOR: f64 = 0.01;

/// Default number of full-batch gradient-descent epochs.
pub const DEFAULT_FIT_EPOCHS: usize = 500;

/// Default gradient-descent step size. The fitting objective is smooth with
/// curvature bounded well below 1 for contexts in the unit square, so this
/// step size descends monotonically while converging far faster than the
/// conservative steps used in the monotonicity tests.
pub const DEFAULT_FIT_LR: f64 = 0.5;

/// Early-stop threshold on the max-norm of the objective gradient.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Version label of the feature map, recorded in persisted model files so a
/// future change of features cannot silently reinterpret old coefficients.
pub const FEATURE_VERSION: &str = "quadratic-v1";

/// Quadratic feature expansion of a context: `[1, q, c, q·c, q², c²]`.
pub fn context_features(x: &Context) -> [f64; NUM_FEATURES] {
    let q = x.coverage_alarm();
    let c = x.capacity_alarm();
    [1.0, q, c, q * c, q * q, c * c]
}

fn check_floor(floor: f64) -> Result<()> {
    if !floor.is_finite() || floor <= 0.0 || floor >= 1.0 / 3.0 {
        return Err(Error::config(format!(
            "propensity floor must be in (0, 1/3), got {floor}"
        )));
    }
    Ok(())
}

/// Multinomial logistic-regression model of the logging policy: one
/// coefficient row per action over the quadratic context features, plus a
/// predict-time probability floor.
///
/// The parametrization is deliberately unreduced (no reference class is
/// pinned to zero): gradient descent from zero initialization keeps the
/// coefficient rows summing to zero anyway, and predictions are invariant to
/// the shared component.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialLogitModel {
    /// `coefficients[a][j]` multiplies feature `j` in the score of the
    /// action with canonical index `a`.
    coefficients: [[f64; NUM_FEATURES]; 3],
    floor: f64,
}

impl MultinomialLogitModel {
    /// Builds a model from explicit coefficients, validating finiteness and
    /// the floor range `(0, 1/3)`.
    pub fn new(coefficients: [[f64; NUM_FEATURES]; 3], floor: f64) -> Result<Self> {
        for row in &coefficients {
            for v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "propensity model coefficient".into(),
                    });
                }
            }
        }
        check_floor(floor)?;
        Ok(MultinomialLogitModel {
            coefficients,
            floor,
        })
    }

    /// The all-zero model, which predicts the uniform distribution
    /// everywhere.
    pub fn zeros(floor: f64) -> Result<Self> {
        MultinomialLogitModel::new([[0.0; NUM_FEATURES]; 3], floor)
    }

    /// Coefficient matrix, one row per action in canonical order.
    pub fn coefficients(&self) -> &[[f64; NUM_FEATURES]; 3] {
        &self.coefficients
    }

    /// Predict-time probability floor.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Raw (pre-softmax) scores for the three actions.
    pub fn scores(&self, x: &Context) -> [f64; 3] {
        let phi = context_features(x);
        self.coefficients
            .map(|row| row.iter().zip(&phi).map(|(w, f)| w * f).sum())
    }

    /// Mean categorical cross-entropy of the logged actions under the raw
    /// softmax probabilities (no floor), i.e. the objective the fit
    /// minimizes. Errors on an empty dataset.
    pub fn cross_entropy(&self, d: &Dataset) -> Result<f64> {
        if d.samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let total: f64 = d
            .samples
            .iter()
            .map(|s| -log_softmax_at(self.scores(&s.context), s.action))
            .sum();
        Ok(total / d.samples.len() as f64)
    }
}

impl StochasticPolicy for MultinomialLogitModel {
    fn action_probabilities(&self, x: &Context) -> ActionDistribution {
        predict_propensity(self, x)
    }
}

/// Log-probability of `action` under the softmax of `scores`, computed
/// stably via the shifted log-sum-exp.
fn log_softmax_at(scores: [f64; 3], action: Action) -> f64 {
    let max = scores[0].max(scores[1]).max(scores[2]);
    let log_sum: f64 = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores[action.index()] - max - log_sum
}

/// Predicted action probabilities for one context: softmax over the affine
/// feature scores, then clamped below at the model floor and renormalized.
/// Every entry of the result is at least the floor (up to machine
/// precision) and the entries sum to one.
pub fn predict_propensity(m: &MultinomialLogitModel, x: &Context) -> ActionDistribution {
    let raw = softmax3(m.scores(x));
    ActionDistribution::new(raw)
        .and_then(|p| p.floor_and_renormalize(m.floor))
        .expect("softmax output is a simplex point and the floor was validated")
}

/// Which kind of propensity a protocol step should use: the values the
/// generator recorded in the log, or a model fitted from the data. This is
/// the configuration-level selector; the resolved runtime counterpart is
/// [`PropensitySource`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensitySelector {
    Logged,
    Estimated,
}

impl PropensitySelector {
    /// Stable lowercase name, the inverse of [`PropensitySelector::parse`].
    pub fn name(self) -> &'static str {
        match self {
            PropensitySelector::Logged => "logged",
            PropensitySelector::Estimated => "estimated",
        }
    }

    /// Parses the lowercase name.
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "logged" => Some(PropensitySelector::Logged),
            "estimated" => Some(PropensitySelector::Estimated),
            _ => None,
        }
    }
}

/// Where estimators should look up the logging propensity of a sample:
/// the value recorded in the log, or a fitted model's prediction.
#[derive(Debug, Clone, Copy)]
pub enum PropensitySource<'a> {
    /// Use each sample's recorded propensity; errors on samples without one.
    Logged,
    /// Evaluate a fitted model at the sample's context and action.
    Model(&'a MultinomialLogitModel),
}

impl PropensitySource<'_> {
    /// The logging propensity of `sample` under this source. `index` is the
    /// sample's position in its dataset, used in the error for a missing
    /// recorded propensity.
    pub fn propensity_of(&self, sample: &LoggedSample, index: usize) -> Result<f64> {
        match self {
            PropensitySource::Logged => sample.propensity.ok_or(Error::MissingPropensity { index }),
            PropensitySource::Model(m) => {
                Ok(predict_propensity(m, &sample.context).prob(sample.action))
            }
        }
    }
}

/// Summary of one propensity fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Number of gradient-descent updates applied.
    pub epochs_run: usize,
    /// Mean cross-entropy at the start of each epoch, before its update.
    pub objective_history: Vec<f64>,
    /// Mean cross-entropy of the returned coefficients.
    pub final_cross_entropy: f64,
    /// Whether the gradient max-norm fell below [`GRADIENT_TOLERANCE`]
    /// before the epoch budget ran out.
    pub converged: bool,
}

/// Fits the logging-policy model with the default probability floor,
/// discarding the fit report. See [`fit_propensity_floored`].
pub fn fit_propensity(
    d: &Dataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<MultinomialLogitModel> {
    fit_propensity_floored(d, epochs, lr, seed, DEFAULT_FLOOR).map(|(m, _)| m)
}

/// Fits a [`MultinomialLogitModel`] to the logged (context, action) pairs by
/// full-batch gradient descent on the mean categorical cross-entropy,
/// starting from all-zero coefficients.
///
/// Descent stops after `epochs` updates or as soon as the gradient max-norm
/// drops below [`GRADIENT_TOLERANCE`], whichever comes first. The run is
/// fully deterministic; `seed` is accepted for interface stability (it would
/// drive mini-batch shuffling) but full-batch descent never consumes it.
///
/// Errors when the dataset is empty or contains fewer than two distinct
/// actions (the model is not identifiable), and on a non-finite gradient.
pub fn fit_propensity_floored(
    d: &Dataset,
    epochs: usize,
    lr: f64,
    _seed: u64,
    floor: f64,
) -> Result<(MultinomialLogitModel, FitReport)> {
    if d.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let distinct = d.action_counts().iter().filter(|&&c| c > 0).count();
    if distinct < 2 {
        return Err(Error::SingleActionDataset { found: distinct });
    }
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::config(format!(
            "propensity learning rate must be positive and finite, got {lr}"
        )));
    }
    check_floor(floor)?;

    let features: Vec<[f64; NUM_FEATURES]> = d
        .samples
        .iter()
        .map(|s| context_features(&s.context))
        .collect();
    let n = d.samples.len() as f64;
    let mut coefficients = [[0.0; NUM_FEATURES]; 3];
    let mut history = Vec::with_capacity(epochs);
    let mut epochs_run = 0;
    let mut converged = false;

    for _ in 0..epochs {
        // One pass yields both the objective value at the current
        // coefficients and its gradient.
        let mut grad = [[0.0; NUM_FEATURES]; 3];
        let mut ce_sum = 0.0;
        for (sample, phi) in d.samples.iter().zip(&features) {
            let scores = score_features(&coefficients, phi);
            ce_sum -= log_softmax_at(scores, sample.action);
            let probs = softmax3(scores);
            let logged = sample.action.index();
            for a in 0..3 {
                let residual = probs[a] - if a == logged { 1.0 } else { 0.0 };
                for j in 0..NUM_FEATURES {
                    grad[a][j] += residual * phi[j];
                }
            }
        }
        history.push(ce_sum / n);

        let mut max_norm = 0.0_f64;
        for row in &mut grad {
            for g in row.iter_mut() {
                *g /= n;
                if !g.is_finite() {
                    return Err(Error::NonFinite {
                        context: "propensity fit gradient".into(),
                    });
                }
                max_norm = max_norm.max(g.abs());
            }
        }
        if max_norm < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        for a in 0..3 {
            for j in 0..NUM_FEATURES {
                coefficients[a][j] -= lr * grad[a][j];
            }
        }
        epochs_run += 1;
    }

    let model = MultinomialLogitModel::new(coefficients, floor)?;
    let final_cross_entropy = if converged {
        // The objective recorded for the stopping epoch is already the value
        // at the returned coefficients (no further update was applied).
        *history
            .last()
            .expect("converged implies at least one epoch ran")
    } else {
        model.cross_entropy(d)?
    };
    let report = FitReport {
        epochs_run,
        objective_history: history,
        final_cross_entropy,
        converged,
    };
    Ok((model, report))
}

fn score_features(coefficients: &[[f64; NUM_FEATURES]; 3], phi: &[f64; NUM_FEATURES]) -> [f64; 3] {
    coefficients.map(|row| row.iter().zip(phi).map(|(w, f)| w * f).sum())
}

/// Writes the model as CSV: a one-line metadata header carrying the floor
/// and feature-map version, then one coefficient row per action in
/// canonical order. Reals use the dataset's 9-significant-digit format, so
/// save → load → save reproduces the file byte for byte.
pub fn save_propensity_model(m: &MultinomialLogitModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "floor={},features={}",
        format_real(m.floor),
        FEATURE_VERSION
    );
    for row in &m.coefficients {
        let rendered: Vec<String> = row.iter().map(|v| format_real(*v)).collect();
        let _ = writeln!(out, "{}", rendered.join(","));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a model written by [`save_propensity_model`], validating the
/// header, the feature-map version, the row count and entry finiteness.
pub fn load_propensity_model(path: &Path) -> Result<MultinomialLogitModel> {
    let display = path.display().to_string();
    let bad = |message: String| Error::BadCheckpoint {
        path: display.clone(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));

    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let mut floor = None;
    let mut version = None;
    for part in header.split(',') {
        if let Some(v) = part.strip_prefix("floor=") {
            floor = Some(
                v.parse::<f64>()
                    .map_err(|_| bad(format!("unparseable floor value {v:?} in header")))?,
            );
        } else if let Some(v) = part.strip_prefix("features=") {
            version = Some(v);
        } else {
            return Err(bad(format!("unrecognized header field {part:?}")));
        }
    }
    let floor = floor.ok_or_else(|| bad("header is missing the floor".into()))?;
    match version {
        Some(FEATURE_VERSION) => {}
        Some(other) => {
            return Err(bad(format!(
                "unsupported feature map {other:?} (expected {FEATURE_VERSION:?})"
            )))
        }
        None => return Err(bad("header is missing the feature-map version".into())),
    }

    let mut coefficients = [[0.0; NUM_FEATURES]; 3];
    for (a, row) in coefficients.iter_mut().enumerate() {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("expected 3 coefficient rows, found {a}")))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != NUM_FEATURES {
            return Err(bad(format!(
                "coefficient row {} has {} fields, expected {NUM_FEATURES}",
                a + 1,
                fields.len()
            )));
        }
        for (j, field) in fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                bad(format!(
                    "unparseable coefficient {field:?} at row {}, column {}",
                    a + 1,
                    j + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(bad(format!(
                    "non-finite coefficient at row {}, column {}",
                    a + 1,
                    j + 1
                )));
            }
            row[j] = v;
        }
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(bad(
            "unexpected trailing content after 3 coefficient rows".into()
        ));
    }
    check_floor(floor).map_err(|e| bad(e.to_string()))?;
    MultinomialLogitModel::new(coefficients, floor)
}
