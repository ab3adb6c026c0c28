//! Discrete-event simulation of heterogeneous edge/fog/cloud fleets and a
//! from-scratch actor-critic scheduler for DAG-structured IoT applications.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: servers, tasks, application DAGs and the load-balancing,
//!   response-time and weighted cost models.
//! - [`sim`]: the event-driven environment that executes placements.
//! - [`mdp`]: state featurisation and reward functions.
//! - [`neural`]: a one-hidden-layer MLP with analytic gradients and Adam.
//! - [`ppo`]: the clipped-surrogate actor-critic scheduler.
//! - [`baselines`]: Q-Learning, DQN and NSGA-II schedulers.
//! - [`experiments`]: configuration, training/evaluation drivers, overhead
//!   measurement and the oracle check suites.

pub mod baselines;
pub mod domain;
mod error;
pub mod experiments;
pub mod mdp;
pub mod neural;
pub mod par;
pub mod ppo;
pub mod sim;

pub use error::{Error, Result};
