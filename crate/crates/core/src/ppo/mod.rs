//! Clipped-surrogate PPO: rollouts, multi-step advantages, K-epoch updates.

mod agent;
mod rollout;

pub use agent::{
    argmax, clip_ratio, ActionMode, FleetFingerprint, LossDiagnostics, PpoAgent, PpoHyper, UpdateReport,
};
pub use rollout::{compute_advantages, RolloutBuffer, Transition};
