//! Domain types: KPI contexts, tilt actions, action distributions and logged
//! samples, plus the policy traits implemented across the crate.

use crate::error::Error;
use crate::Result;
use rand::Rng;
use std::fmt;

/// KPI context of one antenna sector: a coverage alarm and a capacity alarm,
/// both normalized to `[0, 1]` (0 = no alarm, 1 = strongest alarm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    coverage_alarm: f64,
    capacity_alarm: f64,
}

impl Context {
    /// Builds a context, rejecting non-finite or out-of-range components.
    pub fn new(coverage_alarm: f64, capacity_alarm: f64) -> Result<Self> {
        for (name, v) in [
            ("coverage_alarm", coverage_alarm),
            ("capacity_alarm", capacity_alarm),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("context {name}"),
                });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!(
                    "context {name} must be in [0, 1], got {v}"
                )));
            }
        }
        Ok(Context {
            coverage_alarm,
            capacity_alarm,
        })
    }

    /// Coverage alarm level in `[0, 1]`.
    pub fn coverage_alarm(&self) -> f64 {
        self.coverage_alarm
    }

    /// Capacity alarm level in `[0, 1]`.
    pub fn capacity_alarm(&self) -> f64 {
        self.capacity_alarm
    }

    /// The context as a feature slice `[coverage, capacity]` for model input.
    pub fn features(&self) -> [f64; 2] {
        [self.coverage_alarm, self.capacity_alarm]
    }
}

/// Discrete remote-electrical-tilt action applied to a sector.
///
/// The order `DownTilt < NoChange < UpTilt` is fixed: it defines the integer
/// codes (-1, 0, +1), the indexing of probability vectors, and the
/// deterministic tie-break used by greedy policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    DownTilt,
    NoChange,
    UpTilt,
}

impl Action {
    /// All actions in canonical order.
    pub const ALL: [Action; 3] = [Action::DownTilt, Action::NoChange, Action::UpTilt];

    /// Canonical index: 0, 1, 2.
    pub fn index(self) -> usize {
        match self {
            Action::DownTilt => 0,
            Action::NoChange => 1,
            Action::UpTilt => 2,
        }
    }

    /// Integer code used in CSV files: -1, 0, +1.
    pub fn code(self) -> i8 {
        match self {
            Action::DownTilt => -1,
            Action::NoChange => 0,
            Action::UpTilt => 1,
        }
    }

    /// Signed tilt direction as a real: -1.0, 0.0, +1.0.
    pub fn sign(self) -> f64 {
        f64::from(self.code())
    }

    /// Parses an integer code (-1, 0, +1).
    pub fn from_code(code: i64) -> Option<Action> {
        match code {
            -1 => Some(Action::DownTilt),
            0 => Some(Action::NoChange),
            1 => Some(Action::UpTilt),
            _ => None,
        }
    }

    /// Static name, usable in error messages without allocation.
    pub fn name(self) -> &'static str {
        match self {
            Action::DownTilt => "DownTilt",
            Action::NoChange => "NoChange",
            Action::UpTilt => "UpTilt",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Probability distribution over the three tilt actions, stored in canonical
/// action order. Guaranteed to be a simplex point: entries are non-negative
/// and sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution {
    probs: [f64; 3],
}

impl ActionDistribution {
    /// Tolerance accepted on the input sum before normalization.
    const SUM_TOLERANCE: f64 = 1e-9;

    /// Builds a distribution from raw probabilities, rejecting negative or
    /// non-finite entries and sums further than `1e-9` from one. The stored
    /// entries are renormalized so the sum is exactly one in floating point.
    pub fn new(probs: [f64; 3]) -> Result<Self> {
        for p in probs {
            if !p.is_finite() {
                return Err(Error::NonFinite {
                    context: "action probability".into(),
                });
            }
            if p < 0.0 {
                return Err(Error::config(format!(
                    "action probability must be non-negative, got {p}"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::config(format!(
                "action probabilities must sum to 1 (within {}), got {sum}",
                Self::SUM_TOLERANCE
            )));
        }
        Ok(ActionDistribution {
            probs: [probs[0] / sum, probs[1] / sum, probs[2] / sum],
        })
    }

    /// The uniform distribution.
    pub fn uniform() -> Self {
        ActionDistribution {
            probs: [1.0 / 3.0; 3],
        }
    }

    /// Unit mass on one action.
    pub fn one_hot(action: Action) -> Self {
        let mut probs = [0.0; 3];
        probs[action.index()] = 1.0;
        ActionDistribution { probs }
    }

    /// Probability of the given action.
    pub fn prob(&self, action: Action) -> f64 {
        self.probs[action.index()]
    }

    /// Probabilities in canonical action order.
    pub fn probs(&self) -> [f64; 3] {
        self.probs
    }

    /// Most likely action; ties resolve to the earliest action in canonical
    /// order, so a uniform distribution yields `DownTilt`.
    pub fn most_likely(&self) -> Action {
        argmax_action(self.probs)
    }

    /// Draws an action using a single uniform variate from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for a in Action::ALL {
            acc += self.prob(a);
            if u < acc {
                return a;
            }
        }
        // Guards against u landing on the accumulated rounding tail.
        Action::UpTilt
    }

    /// Total-variation distance to another distribution: half the L1
    /// distance between the probability vectors, in `[0, 1]`.
    pub fn total_variation(&self, other: &ActionDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }

    /// Raises every entry to at least `floor` and renormalizes, iterating to
    /// the fixed point of clamp-and-renormalize: deficient entries end
    /// exactly at `floor`, the remaining mass is shared proportionally.
    ///
    /// Requires `0 <= floor < 1/3` so a fixed point exists.
    pub fn floor_and_renormalize(&self, floor: f64) -> Result<Self> {
        if !(0.0..1.0 / 3.0).contains(&floor) {
            return Err(Error::config(format!(
                "probability floor must be in [0, 1/3), got {floor}"
            )));
        }
        let mut pinned = [false; 3];
        loop {
            let pinned_mass = pinned.iter().filter(|&&p| p).count() as f64 * floor;
            let free_sum: f64 = self
                .probs
                .iter()
                .zip(&pinned)
                .filter(|(_, &p)| !p)
                .map(|(v, _)| v)
                .sum();
            let scale = (1.0 - pinned_mass) / free_sum;
            let mut out = [0.0; 3];
            let mut newly_pinned = false;
            for i in 0..3 {
                out[i] = if pinned[i] {
                    floor
                } else {
                    self.probs[i] * scale
                };
                if !pinned[i] && out[i] < floor {
                    pinned[i] = true;
                    newly_pinned = true;
                }
            }
            if !newly_pinned {
                // With floor < 1/3 at most two entries pin, so free_sum > 0
                // held throughout and `out` is a valid simplex point.
                return ActionDistribution::new(out);
            }
        }
    }
}

/// Index of the largest entry, as an action; ties resolve to the earliest
/// action in canonical order.
pub fn argmax_action(values: [f64; 3]) -> Action {
    let mut best = Action::DownTilt;
    for a in [Action::NoChange, Action::UpTilt] {
        if values[a.index()] > values[best.index()] {
            best = a;
        }
    }
    best
}

/// Index of the smallest entry, as an action; ties resolve to the earliest
/// action in canonical order.
pub fn argmin_action(values: [f64; 3]) -> Action {
    let mut best = Action::DownTilt;
    for a in [Action::NoChange, Action::UpTilt] {
        if values[a.index()] < values[best.index()] {
            best = a;
        }
    }
    best
}

/// One logged interaction: the context observed, the action the logging
/// policy took, the loss incurred (change in the worst alarm, in `[-1, 1]`,
/// lower is better) and, when known, the logging policy's probability of the
/// logged action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedSample {
    pub context: Context,
    pub action: Action,
    pub loss: f64,
    /// Probability the logging policy assigned to `action` at `context`;
    /// `None` when the log does not carry propensities.
    pub propensity: Option<f64>,
}

impl LoggedSample {
    /// Builds a sample, rejecting losses outside `[-1, 1]` and propensities
    /// outside `(0, 1]`.
    pub fn new(
        context: Context,
        action: Action,
        loss: f64,
        propensity: Option<f64>,
    ) -> Result<Self> {
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "sample loss".into(),
            });
        }
        if !(-1.0..=1.0).contains(&loss) {
            return Err(Error::config(format!(
                "sample loss must be in [-1, 1], got {loss}"
            )));
        }
        if let Some(p) = propensity {
            if !p.is_finite() {
                return Err(Error::NonFinite {
                    context: "sample propensity".into(),
                });
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config(format!(
                    "sample propensity must be in (0, 1], got {p}"
                )));
            }
        }
        Ok(LoggedSample {
            context,
            action,
            loss,
            propensity,
        })
    }
}

/// A policy that assigns a probability to every action given a context.
pub trait StochasticPolicy {
    fn action_probabilities(&self, x: &Context) -> ActionDistribution;
}

/// A policy that picks a single action given a context.
pub trait DeterministicPolicy {
    fn decide(&self, x: &Context) -> Action;
}

impl<T: StochasticPolicy + ?Sized> StochasticPolicy for &T {
    fn action_probabilities(&self, x: &Context) -> ActionDistribution {
        (**self).action_probabilities(x)
    }
}

impl<T: DeterministicPolicy + ?Sized> DeterministicPolicy for &T {
    fn decide(&self, x: &Context) -> Action {
        (**self).decide(x)
    }
}

/// Adapter viewing a deterministic policy as the stochastic policy that puts
/// unit mass on the chosen action.
pub struct OneHotPolicy<D>(pub D);

impl<D: DeterministicPolicy> StochasticPolicy for OneHotPolicy<D> {
    fn action_probabilities(&self, x: &Context) -> ActionDistribution {
        ActionDistribution::one_hot(self.0.decide(x))
    }
}

/// Adapter reducing a stochastic policy to the deterministic policy that
/// always takes its most likely action (ties toward the earliest action in
/// canonical order).
pub struct MostLikelyPolicy<P>(pub P);

impl<P: StochasticPolicy> DeterministicPolicy for MostLikelyPolicy<P> {
    fn decide(&self, x: &Context) -> Action {
        self.0.action_probabilities(x).most_likely()
    }
}

/// A policy that always picks the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Action);

impl DeterministicPolicy for ConstantPolicy {
    fn decide(&self, _x: &Context) -> Action {
        self.0
    }
}

/// A policy that draws uniformly over the three actions.
#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy;

impl StochasticPolicy for UniformPolicy {
    fn action_probabilities(&self, _x: &Context) -> ActionDistribution {
        ActionDistribution::uniform()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn context_rejects_out_of_range() {
        assert!(Context::new(-0.01, 0.5).is_err());
        assert!(Context::new(0.5, 1.01).is_err());
        assert!(Context::new(f64::NAN, 0.5).is_err());
        assert!(Context::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn total_variation_matches_hand_computation() {
        let a = ActionDistribution::new([0.5, 0.3, 0.2]).unwrap();
        let b = ActionDistribution::new([0.2, 0.3, 0.5]).unwrap();
        assert!((a.total_variation(&b) - 0.3).abs() < 1e-12);
        assert_eq!(a.total_variation(&a), 0.0);
        let point = ActionDistribution::one_hot(Action::DownTilt);
        let other = ActionDistribution::one_hot(Action::UpTilt);
        assert!((point.total_variation(&other) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn action_codes_round_trip() {
        for a in Action::ALL {
            assert_eq!(Action::from_code(i64::from(a.code())), Some(a));
        }
        assert_eq!(Action::from_code(2), None);
    }

    #[test]
    fn canonical_order_is_down_nochange_up() {
        assert_eq!(
            Action::ALL.map(|a| a.code()),
            [-1, 0, 1],
            "canonical order must match integer codes"
        );
        assert!(Action::DownTilt < Action::NoChange && Action::NoChange < Action::UpTilt);
    }

    #[test]
    fn distribution_rejects_bad_simplex() {
        assert!(ActionDistribution::new([0.5, 0.5, 0.1]).is_err());
        assert!(ActionDistribution::new([-0.1, 0.6, 0.5]).is_err());
        assert!(ActionDistribution::new([0.2, 0.3, 0.5]).is_ok());
    }

    #[test]
    fn uniform_ties_break_to_down_tilt() {
        assert_eq!(
            ActionDistribution::uniform().most_likely(),
            Action::DownTilt
        );
    }

    #[test]
    fn argmin_ties_break_to_down_tilt() {
        assert_eq!(argmin_action([0.0, 0.0, 0.0]), Action::DownTilt);
        assert_eq!(argmin_action([0.5, -0.5, -0.5]), Action::NoChange);
    }

    #[test]
    fn sampling_matches_probabilities() {
        let d = ActionDistribution::new([0.2, 0.5, 0.3]).unwrap();
        let mut rng = seeding::rng(11, 0xFEED);
        let mut counts = [0usize; 3];
        let n = 200_000;
        for _ in 0..n {
            counts[d.sample(&mut rng).index()] += 1;
        }
        for a in Action::ALL {
            let freq = counts[a.index()] as f64 / n as f64;
            assert!(
                (freq - d.prob(a)).abs() < 0.005,
                "action {a}: frequency {freq} vs probability {}",
                d.prob(a)
            );
        }
    }

    #[test]
    fn floor_renormalize_reaches_fixed_point() {
        let d = ActionDistribution::new([0.004, 0.496, 0.5]).unwrap();
        let f = d.floor_and_renormalize(0.01).unwrap();
        let probs = f.probs();
        let min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= 0.01 - 1e-12, "floored min {min} below floor");
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Applying the floor again must not move anything: it is a fixed point.
        let again = f.floor_and_renormalize(0.01).unwrap();
        assert_eq!(f.probs(), again.probs());
        // Unpinned entries keep their relative proportions.
        assert!((probs[1] / probs[2] - 0.496 / 0.5).abs() < 1e-12);
    }

    #[test]
    fn floor_zero_is_identity() {
        let d = ActionDistribution::new([0.004, 0.496, 0.5]).unwrap();
        let f = d.floor_and_renormalize(0.0).unwrap();
        assert_eq!(d.probs(), f.probs());
    }

    #[test]
    fn sample_rejects_bad_loss_and_propensity() {
        let x = Context::new(0.2, 0.3).unwrap();
        assert!(LoggedSample::new(x, Action::NoChange, 1.5, None).is_err());
        assert!(LoggedSample::new(x, Action::NoChange, 0.0, Some(0.0)).is_err());
        assert!(LoggedSample::new(x, Action::NoChange, 0.0, Some(1.1)).is_err());
        assert!(LoggedSample::new(x, Action::NoChange, -1.0, Some(1.0)).is_ok());
    }
}
