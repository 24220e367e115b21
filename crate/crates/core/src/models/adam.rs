//! Adam optimizer over a flat parameter vector.

/// First/second-moment state of Adam. One instance per parameter vector;
/// the moments have the same length as the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the standard defaults (0.9, 0.999, 1e-8).
    pub fn new(dim: usize) -> AdamState {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Number of update steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One Adam update, minimizing: moves `params` against `grad` with
/// bias-corrected moment estimates.
///
/// A zero gradient leaves both moments and the parameters exactly
/// unchanged (0 / (0 + epsilon) = 0), so "no signal" means "no movement".
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grad.len(), "gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "state length mismatch");
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}
