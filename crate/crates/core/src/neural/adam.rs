use crate::{Error, Result};

use super::{Grads, MlpParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment accumulators and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn for_params(params: &MlpParams) -> Self {
        Self::new(params.len())
    }
}

/// One bias-corrected Adam step.
pub fn adam_step(params: &mut MlpParams, grads: &Grads, state: &mut AdamState, lr: f64) -> Result<()> {
    let n = params.len();
    if grads.data.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: grads.data.len() });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for i in 0..n {
        let g = grads.data[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params.data[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = MlpParams::zeros(2, 2, 1, Activation::Tanh);
        p.data[0] = 0.3;
        let before = p.clone();
        let mut st = AdamState::for_params(&p);
        let g = Grads::zeros_like(&p);
        adam_step(&mut p, &g, &mut st, 0.01).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut p = MlpParams::zeros(1, 1, 1, Activation::Identity);
        let mut g = Grads::zeros_like(&p);
        g.data[0] = 1.0;
        let mut st = AdamState::for_params(&p);
        adam_step(&mut p, &g, &mut st, 0.001).unwrap();
        assert!((p.data[0] + 0.001).abs() < 1e-10);
        assert!(p.data[0].abs() <= 0.001 * (1.0 + 1e-8));
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = MlpParams::zeros(2, 3, 1, Activation::Tanh);
            let mut st = AdamState::for_params(&p);
            for k in 0..20 {
                let g = Grads { data: (0..p.len()).map(|i| ((i + k) as f64).sin()).collect() };
                adam_step(&mut p, &g, &mut st, 0.01).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mismatched_grads_rejected() {
        let mut p = MlpParams::zeros(1, 1, 1, Activation::Tanh);
        let mut st = AdamState::for_params(&p);
        assert!(adam_step(&mut p, &Grads { data: vec![0.0] }, &mut st, 0.1).is_err());
    }
}
