//! Replicated Monte-Carlo measurement of estimator bias and variance.
//!
//! For each requested dataset size, many independent logs are drawn from
//! the synthetic environment, the chosen estimator is computed on each, and
//! the spread of those estimates is summarized against an oracle
//! Monte-Carlo reference for the target policy's true risk. This is how the
//! toolkit checks, empirically, that importance weighting is unbiased, that
//! both estimators' variances shrink like `1/N`, and that the direct method
//! trades bias for variance.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::format_real;
use crate::error::Error;
use crate::learning::{train_dm, TrainConfig};
use crate::models::LossNet;
use crate::propensity::PropensitySource;
use crate::seeding::{self, tags};
use crate::synthenv::{generate_dataset, EnvConfig, EnvOracle, McEstimate};
use crate::types::StochasticPolicy;
use crate::Result;

use super::{dm_risk, ips_risk};

/// Which estimator a diagnostics run measures.
#[derive(Clone, Copy)]
pub enum EstimatorKind<'a> {
    /// Importance weighting with the true propensities the generator
    /// recorded in each replicate.
    Ips,
    /// Direct method with the loss model refit on every replicate's own
    /// data, so the measured variance includes fitting variability.
    DmRefit(&'a TrainConfig),
    /// Direct method with one fixed pre-trained loss model, isolating the
    /// variance coming from averaging predictions over logged contexts.
    DmFixed(&'a LossNet),
}

impl EstimatorKind<'_> {
    /// Stable label used in the report's CSV rows.
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Ips => "ips",
            EstimatorKind::DmRefit(_) => "dm_refit",
            EstimatorKind::DmFixed(_) => "dm_fixed",
        }
    }
}

/// Shape of a diagnostics run: which dataset sizes, how many replicates
/// per size, how many oracle draws for the risk reference, and the master
/// seed all replicate streams derive from.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub n_values: Vec<usize>,
    pub m_replicates: usize,
    pub oracle_draws: usize,
    pub seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            n_values: vec![500, 1000, 2000, 4000, 8000],
            m_replicates: 100,
            oracle_draws: 1_000_000,
            seed: 0,
        }
    }
}

/// One measured (estimator, dataset size) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub estimator: &'static str,
    pub n: usize,
    pub m: usize,
    /// Mean estimate minus the oracle risk.
    pub bias: f64,
    /// Sample variance of the replicate estimates.
    pub variance: f64,
    pub oracle_risk: f64,
    pub oracle_se: f64,
}

/// Bias/variance measurements across dataset sizes, plus the oracle
/// reference they were measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsReport {
    /// Renders the report as CSV with header
    /// `estimator,N,M,bias,variance,oracle_risk,oracle_se`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,N,M,bias,variance,oracle_risk,oracle_se\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.estimator,
                r.n,
                r.m,
                format_real(r.bias),
                format_real(r.variance),
                format_real(r.oracle_risk),
                format_real(r.oracle_se)
            );
        }
        out
    }

    /// Writes [`DiagnosticsReport::to_csv`] to a file.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Least-squares slope of `ln(variance)` against `ln(N)` across the
    /// report's rows — near −1 when the variance scales like `1/N`. `None`
    /// with fewer than two usable rows or any non-positive variance.
    pub fn log_log_variance_slope(&self) -> Option<f64> {
        if self.rows.len() < 2 || self.rows.iter().any(|r| r.variance <= 0.0) {
            return None;
        }
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| ((r.n as f64).ln(), r.variance.ln()))
            .collect();
        let n = pts.len() as f64;
        let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

/// Computes the chosen estimator on `m_replicates` fresh datasets of each
/// size in `n_values`, and summarizes empirical bias and variance against
/// an oracle Monte-Carlo reference for `pi`'s risk.
///
/// Replicates are independent: replicate `r` of size index `j` draws its
/// dataset from a sub-stream indexed by `j·M + r`, and an in-replicate
/// loss-model refit derives its training seed the same way. Replicates run
/// in parallel; results are reduced in replicate order, so the report does
/// not depend on thread scheduling.
///
/// Errors when `m_replicates < 30` (too few for a variance estimate worth
/// reading) and on any replicate-level failure.
pub fn estimator_diagnostics<P: StochasticPolicy + Sync>(
    env: &EnvConfig,
    pi: &P,
    kind: EstimatorKind<'_>,
    cfg: &DiagnosticsConfig,
) -> Result<DiagnosticsReport> {
    if cfg.m_replicates < 30 {
        return Err(Error::config(format!(
            "diagnostics needs at least 30 replicates, got {}",
            cfg.m_replicates
        )));
    }
    if cfg.n_values.is_empty() || cfg.n_values.iter().any(|&n| n == 0) {
        return Err(Error::config(
            "diagnostics needs at least one positive dataset size",
        ));
    }
    let oracle = oracle_reference(env, pi, cfg.oracle_draws, cfg.seed)?;

    let mut rows = Vec::with_capacity(cfg.n_values.len());
    for (j, &n) in cfg.n_values.iter().enumerate() {
        let estimates: Vec<f64> = (0..cfg.m_replicates)
            .into_par_iter()
            .map(|r| {
                let stream = (j * cfg.m_replicates + r) as u64;
                let data_seed = seeding::mix_indexed(cfg.seed, tags::DIAGNOSTICS, stream);
                let d = generate_dataset(env, n, data_seed)?;
                let value = match kind {
                    EstimatorKind::Ips => ips_risk(&d, pi, PropensitySource::Logged)?.value,
                    EstimatorKind::DmRefit(base) => {
                        let mut train_cfg = base.clone();
                        train_cfg.seed = seeding::mix_indexed(cfg.seed, tags::TRAIN_DM, stream);
                        let (net, _) = train_dm(&d, &train_cfg, None)?;
                        dm_risk(&d, pi, &net)?.value
                    }
                    EstimatorKind::DmFixed(net) => dm_risk(&d, pi, net)?.value,
                };
                Ok(value)
            })
            .collect::<Result<Vec<f64>>>()?;

        let m = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / m;
        let variance = estimates
            .iter()
            .map(|e| (e - mean) * (e - mean))
            .sum::<f64>()
            / (m - 1.0);
        rows.push(DiagnosticsRow {
            estimator: kind.label(),
            n,
            m: cfg.m_replicates,
            bias: mean - oracle.value,
            variance,
            oracle_risk: oracle.value,
            oracle_se: oracle.std_error,
        });
    }
    Ok(DiagnosticsReport { rows })
}

/// Oracle Monte-Carlo reference for the risk of `pi`, on a seed stream
/// independent of the replicate datasets.
pub fn oracle_reference<P: StochasticPolicy + ?Sized>(
    env: &EnvConfig,
    pi: &P,
    draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    let oracle = EnvOracle::new(env.clone(), draws, seeding::mix(seed, tags::ORACLE))?;
    Ok(oracle.risk(&pi))
}
