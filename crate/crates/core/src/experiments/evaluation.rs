use std::fs;
use std::path::Path;

use crate::Result;

use super::config::ExperimentConfig;
use super::training::{run_dir, write_metrics_csv, write_timing_csv, Agent, MetricsRecord, Session};

/// Greedy decisions on the evaluation workload, `cfg.eval.blocks` blocks of
/// `ppo.horizon` decisions, one record per block.
pub fn evaluate(cfg: &ExperimentConfig, agent: &mut Agent, seed: u64) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    agent.set_greedy();
    let mut session = Session::new(cfg, cfg.eval_workload(), seed)?;
    let mut records = Vec::with_capacity(cfg.eval.blocks);
    for b in 0..cfg.eval.blocks {
        let log = session.decide(agent.scheduler(), cfg.ppo.horizon)?;
        records.push(MetricsRecord::from_log(b, &log, cfg.objective));
    }
    Ok(records)
}

/// Loads `checkpoint`, evaluates it and writes `eval_metrics.csv` and
/// `eval_timing.csv` under the run directory of its algorithm.
pub fn run_evaluation(cfg: &ExperimentConfig, checkpoint: &Path, seed: u64, out: &Path) -> Result<Vec<MetricsRecord>> {
    let mut agent = Agent::load(cfg, checkpoint, seed)?;
    let records = evaluate(cfg, &mut agent, seed)?;
    let dir = run_dir(out, agent.algorithm(), seed);
    fs::create_dir_all(&dir)?;
    write_metrics_csv(&records, dir.join("eval_metrics.csv"))?;
    write_timing_csv(&records, dir.join("eval_timing.csv"))?;
    Ok(records)
}
