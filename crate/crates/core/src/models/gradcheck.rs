//! Central-finite-difference verification of analytic gradients.

/// Outcome of a gradient check: the worst relative disagreement between the
/// analytic gradient and central finite differences, and where it occurred.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

impl GradCheckReport {
    /// True when the worst relative error is within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares `analytic` against central finite differences of `objective`
/// at `params` with step `h`, coordinate by coordinate.
///
/// The relative error uses denominator `max(|analytic|, |numeric|, 1e-6)`;
/// the floor keeps coordinates whose true gradient is essentially zero from
/// reporting spurious 100% errors out of roundoff noise.
pub fn gradient_check<F: Fn(&[f64]) -> f64>(
    objective: F,
    params: &[f64],
    analytic: &[f64],
    h: f64,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    let mut perturbed = params.to_vec();
    for i in 0..params.len() {
        perturbed[i] = params[i] + h;
        let plus = objective(&perturbed);
        perturbed[i] = params[i] - h;
        let minus = objective(&perturbed);
        perturbed[i] = params[i];
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: rel,
                worst_index: i,
                analytic_at_worst: analytic[i],
                numeric_at_worst: numeric,
            };
        }
    }
    report
}
