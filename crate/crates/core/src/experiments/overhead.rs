use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::{Error, Result};

use super::config::{Algorithm, ExperimentConfig};
use super::training::{Agent, Session};

/// Mean per-decision latency with a normal-approximation 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadStats {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub mean_ms: f64,
    pub stderr_ms: f64,
    pub ci_low_ms: f64,
    pub ci_high_ms: f64,
}

/// `(mean, stderr)` with the sample standard deviation.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl OverheadStats {
    pub fn from_samples(algorithm: Algorithm, samples_ms: &[f64]) -> Self {
        let (mean, se) = mean_stderr(samples_ms);
        Self {
            algorithm,
            rounds: samples_ms.len(),
            mean_ms: mean,
            stderr_ms: se,
            ci_low_ms: mean - 1.96 * se,
            ci_high_ms: mean + 1.96 * se,
        }
    }
}

/// Times `rounds` scheduling decisions per algorithm. Only the scheduler's
/// select call is inside the timer; learning agents run greedily, so the
/// figure is the cost of a deployed decision (NSGA-II plans a whole
/// application inside the first select of that application).
pub fn measure_overhead(
    cfg: &ExperimentConfig,
    algorithms: &[Algorithm],
    rounds: usize,
    seed: u64,
) -> Result<Vec<OverheadStats>> {
    if rounds < 30 {
        return Err(Error::Config { path: "rounds".into(), msg: "need at least 30 rounds for the interval".into() });
    }
    cfg.validate()?;
    let mut out = Vec::with_capacity(algorithms.len());
    for &alg in algorithms {
        let mut agent = Agent::new(cfg, alg, seed)?;
        agent.set_greedy();
        let mut session = Session::new(cfg, cfg.workload.clone(), seed)?;
        let log = session.decide(agent.scheduler(), rounds)?;
        let samples: Vec<f64> = log.select_ns.iter().map(|ns| *ns as f64 / 1e6).collect();
        out.push(OverheadStats::from_samples(alg, &samples));
    }
    Ok(out)
}

pub fn write_overhead_csv(stats: &[OverheadStats], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "algorithm,rounds,mean_ms,stderr_ms,ci_low_ms,ci_high_ms")?;
    for s in stats {
        writeln!(w, "{},{},{},{},{},{}", s.algorithm, s.rounds, s.mean_ms, s.stderr_ms, s.ci_low_ms, s.ci_high_ms)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_of_constant_samples_is_a_point() {
        let s = OverheadStats::from_samples(Algorithm::Ppo, &[2.0; 40]);
        assert_eq!((s.mean_ms, s.ci_low_ms, s.ci_high_ms), (2.0, 2.0, 2.0));
    }

    #[test]
    fn stderr_matches_hand_computation() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn too_few_rounds_rejected() {
        assert!(measure_overhead(&ExperimentConfig::default(), &[Algorithm::Ppo], 10, 1).is_err());
    }
}
