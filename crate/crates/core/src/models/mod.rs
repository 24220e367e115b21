//! Small feed-forward networks written from scratch: flattened-parameter
//! MLPs with tanh hidden layers and exact reverse-mode gradients, the Adam
//! optimizer, a softmax policy head and a per-action loss head, and a
//! central-finite-difference gradient checker.
//!
//! Both heads map the two-component KPI context to three outputs (one per
//! tilt action) through two hidden layers of 32 tanh units by default. The
//! policy head turns its outputs into action probabilities via softmax; the
//! loss head reads its outputs directly as predicted losses.

mod adam;
mod gradcheck;
mod mlp;
mod nets;

pub(crate) use nets::softmax3;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use mlp::Mlp;
pub use nets::{
    load_loss_net, load_policy_net, save_loss_net, save_policy_net, LossNet, PolicyNet,
    DEFAULT_HIDDEN,
};
