//! Configuration, training/evaluation drivers, overhead measurement and the
//! oracle check suites.

pub mod checks;
mod compare;
mod config;
mod evaluation;
mod overhead;
mod training;

pub use checks::{run_checks, CheckOptions, CheckReport, SuiteResult};
pub use compare::{run_comparison, Comparison, RunSummary, CONVERGENCE_TOL, WINDOW};
pub use config::{
    load_config, paper_mirror_servers, parse_config, save_config, Algorithm, EvalSection, ExperimentConfig, Link,
    NetworkSection, RewardSection, ServerEntry, Tier,
};
pub use evaluation::{evaluate, run_evaluation};
pub use overhead::{mean_stderr, measure_overhead, write_overhead_csv, OverheadStats};
pub use training::{
    calibrate, read_metrics_csv, run_dir, run_training, train, updates_to_converge, window_mean, write_metrics_csv,
    write_timing_csv, Agent, MetricsRecord, Session, TrainOutcome,
};
