//! Off-policy toolkit for learning and evaluating antenna-tilt control
//! policies from logged bandit feedback.
//!
//! A deployed (logging) policy chooses a tilt action per antenna sector based
//! on two KPI alarms — a coverage alarm and a capacity alarm — and only the
//! loss of the chosen action is observed. This crate provides everything
//! needed to work with such logs offline:
//!
//! - [`types`] / [`dataset`]: the logged-sample data model, CSV
//!   serialization, seeded train/test splitting and action-balanced
//!   down-sampling;
//! - [`synthenv`]: a synthetic sector environment with a configurable
//!   logging policy, dataset generator and Monte-Carlo risk oracle;
//! - [`propensity`]: multinomial-logistic estimation of the logging policy's
//!   action probabilities;
//! - [`models`]: small feed-forward networks (policy head and per-action
//!   loss head) with exact reverse-mode gradients, Adam and a
//!   finite-difference gradient checker;
//! - [`estimators`]: inverse-propensity-scoring and direct-method risk
//!   estimates, the importance-weighted test loss, and replicate
//!   bias/variance diagnostics;
//! - [`learning`]: mini-batch training of stochastic policies against the
//!   importance-weighted objective and of loss models against mean squared
//!   error, plus greedy policy extraction;
//! - [`evaluation`]: the K-split protocol that retrains per split and
//!   tabulates test losses for the learned policies and the logging policy.
//!
//! All randomness is rooted in explicit `u64` seeds (see [`seeding`]);
//! identical seeds give byte-identical outputs.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod learning;
pub mod models;
pub mod propensity;
pub mod seeding;
pub mod synthenv;
pub mod types;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
