use crate::domain::ServerId;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: ServerId,
    pub reward: f64,
    /// Critic value at collection time.
    pub value: f64,
    /// Log-probability of `action` under the policy that chose it.
    pub log_prob: f64,
    pub success: bool,
}

/// Transitions of one rollout plus the bootstrap value `V(s_T)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.bootstrap_value = 0.0;
    }
}

/// Multi-step advantages bootstrapped with `V(s_T)`, by one backward pass:
/// `G = V(s_T)`, then `G = r_t + gamma * G` and `A_t = G - V(s_t)`.
pub fn compute_advantages(buffer: &RolloutBuffer, gamma: f64) -> Result<Vec<f64>> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut adv = vec![0.0; buffer.len()];
    let mut g = buffer.bootstrap_value;
    for (t, tr) in buffer.transitions.iter().enumerate().rev() {
        g = tr.reward + gamma * g;
        adv[t] = g - tr.value;
    }
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(rewards: &[f64], values: &[f64], boot: f64) -> RolloutBuffer {
        RolloutBuffer {
            transitions: rewards
                .iter()
                .zip(values)
                .map(|(&reward, &value)| Transition {
                    state: vec![],
                    action: 0,
                    reward,
                    value,
                    log_prob: 0.0,
                    success: true,
                })
                .collect(),
            bootstrap_value: boot,
        }
    }

    #[test]
    fn one_step_is_td_error() {
        let a = compute_advantages(&buf(&[1.0], &[0.0], 0.0), 0.9).unwrap();
        assert_eq!(a, vec![1.0]);
        let a = compute_advantages(&buf(&[1.0], &[0.5], 2.0), 0.9).unwrap();
        assert!((a[0] - (1.0 + 0.9 * 2.0 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn zeros_give_zeros() {
        let a = compute_advantages(&buf(&[0.0; 5], &[0.0; 5], 0.0), 0.9).unwrap();
        assert_eq!(a, vec![0.0; 5]);
    }

    #[test]
    fn empty_buffer_rejected() {
        assert!(matches!(compute_advantages(&RolloutBuffer::default(), 0.9), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn matches_forward_summation() {
        let r = [0.3, -1.0, 2.0, 0.5];
        let v = [0.1, 0.2, -0.3, 0.4];
        let boot = 1.5;
        let g: f64 = 0.9;
        let a = compute_advantages(&buf(&r, &v, boot), g).unwrap();
        for t in 0..4 {
            let mut s = -v[t];
            for (k, rk) in r.iter().enumerate().skip(t) {
                s += g.powi((k - t) as i32) * rk;
            }
            s += g.powi((4 - t) as i32) * boot;
            assert!((a[t] - s).abs() < 1e-12);
        }
    }
}
