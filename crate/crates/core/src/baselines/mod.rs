//! Comparison schedulers: tabular Q-Learning, DQN and NSGA-II.

mod dqn;
mod nsga2;
mod qlearning;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dqn::{td_loss_and_grads, DqnAgent, DqnHyper, DqnTransition, ReplayBuffer};
pub use nsga2::{
    crowding_distance, dominates, fast_nondominated_sort, lexicographic, nsga2_evolve, BatchProblem, EvolveResult,
    Fitness, Individual, Nsga2Config, Nsga2Scheduler,
};
pub use qlearning::{discretize_state, QHyper, QLearningAgent, QTable};

/// Epsilon-greedy schedule: starts at `start`, multiplied by `decay` after
/// each block of decisions, never below `min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exploration {
    pub start: f64,
    pub decay: f64,
    pub min: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Self { start: 1.0, decay: 0.9, min: 0.05 }
    }
}

impl Exploration {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.start) && unit(self.decay) && unit(self.min)) || self.min > self.start {
            return Err(Error::InvalidHyper("epsilon schedule needs 0 <= min <= start <= 1 and decay in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn next(&self, epsilon: f64) -> f64 {
        (epsilon * self.decay).max(self.min)
    }
}
