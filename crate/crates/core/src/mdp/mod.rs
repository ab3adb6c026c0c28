//! Observation featurisation and the reward functions.

mod features;
mod normalizer;
mod reward;

pub use features::{feature_len, featurize, FeatureCaps, StateVector, TaskContext, FLEET_HEADER, PER_SERVER, TASK_FEATURES};
pub use normalizer::{NormalizerState, SIZE_BUCKETS};
pub use reward::{
    reward_load_balance, reward_response_time, reward_weighted, Objective, RewardComponents, RewardConfig,
    RewardTracker,
};
