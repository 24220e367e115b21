//! Loading of model checkpoints of any kind — policy networks, loss
//! networks, and propensity models — with the kind detected from the file
//! header, plus adapters that view any of them as a policy.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use tiltopt_core::learning::{GreedyFromLoss, GreedyFromPolicy};
use tiltopt_core::models::{load_loss_net, load_policy_net, LossNet, PolicyNet};
use tiltopt_core::propensity::{load_propensity_model, predict_propensity, MultinomialLogitModel};
use tiltopt_core::types::{
    argmin_action, ActionDistribution, Context, DeterministicPolicy, MostLikelyPolicy,
    StochasticPolicy,
};

/// Any model artifact the toolkit writes.
pub enum Checkpoint {
    Policy(PolicyNet),
    Loss(LossNet),
    Propensity(MultinomialLogitModel),
}

impl Checkpoint {
    /// Loads a checkpoint, sniffing its kind from the header line.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let header = first_line(path)?;
        if header.starts_with("kind=policy") {
            Ok(Checkpoint::Policy(load_policy_net(path)?))
        } else if header.starts_with("kind=loss") {
            Ok(Checkpoint::Loss(load_loss_net(path)?))
        } else if header.starts_with("floor=") {
            Ok(Checkpoint::Propensity(load_propensity_model(path)?))
        } else {
            bail!(
                "{}: not a recognized checkpoint (unexpected header `{header}`)",
                path.display()
            );
        }
    }

    /// Human-readable kind, for error messages.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Checkpoint::Policy(_) => "policy network",
            Checkpoint::Loss(_) => "loss network",
            Checkpoint::Propensity(_) => "propensity model",
        }
    }

    /// The deterministic policy the artifact induces: arg-max probability
    /// for policy networks and propensity models, arg-min predicted loss
    /// for loss networks.
    pub fn into_deterministic(self) -> Box<dyn DeterministicPolicy + Sync> {
        match self {
            Checkpoint::Policy(p) => Box::new(GreedyFromPolicy(p)),
            Checkpoint::Loss(l) => Box::new(GreedyFromLoss(l)),
            Checkpoint::Propensity(m) => Box::new(MostLikelyPolicy(m)),
        }
    }

    /// The artifact viewed as a stochastic policy. Policy networks and
    /// propensity models expose their native probabilities; a loss network
    /// acts through its greedy policy, putting unit mass on the action with
    /// the smallest predicted loss.
    pub fn into_stochastic(self) -> StochasticView {
        StochasticView(self)
    }
}

/// See [`Checkpoint::into_stochastic`].
pub struct StochasticView(Checkpoint);

impl StochasticPolicy for StochasticView {
    fn action_probabilities(&self, x: &Context) -> ActionDistribution {
        match &self.0 {
            Checkpoint::Policy(p) => p.probabilities(x),
            Checkpoint::Loss(l) => ActionDistribution::one_hot(argmin_action(l.predictions(x))),
            Checkpoint::Propensity(m) => predict_propensity(m, x),
        }
    }
}

fn first_line(path: &Path) -> Result<String> {
    let file =
        File::open(path).with_context(|| format!("cannot open checkpoint {}", path.display()))?;
    let mut line = String::new();
    BufReader::new(file)
        .read_line(&mut line)
        .with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    Ok(line.trim_end().to_string())
}
