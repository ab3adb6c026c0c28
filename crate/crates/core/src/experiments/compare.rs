use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::{par, Result};

use super::config::{Algorithm, ExperimentConfig};
use super::training::{run_training, train, updates_to_converge, window_mean, MetricsRecord};

/// Window, in updates, for first/last means and convergence smoothing.
pub const WINDOW: usize = 10;
/// Relative band around the final cost that counts as converged.
pub const CONVERGENCE_TOL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub first_mean: f64,
    pub last_mean: f64,
    pub converged_at: usize,
}

impl RunSummary {
    pub fn of(algorithm: Algorithm, seed: u64, records: &[MetricsRecord]) -> Self {
        let costs: Vec<f64> = records.iter().map(|r| r.mean_cost).collect();
        Self {
            algorithm,
            seed,
            first_mean: window_mean(&costs, 0, WINDOW),
            last_mean: window_mean(&costs, costs.len().saturating_sub(WINDOW), costs.len()),
            converged_at: updates_to_converge(&costs, WINDOW, CONVERGENCE_TOL),
        }
    }
}

pub struct Comparison {
    pub summaries: Vec<RunSummary>,
    pub records: Vec<Vec<MetricsRecord>>,
}

impl Comparison {
    pub fn get(&self, algorithm: Algorithm, seed: u64) -> Option<&RunSummary> {
        self.summaries.iter().find(|s| s.algorithm == algorithm && s.seed == seed)
    }
}

/// Trains every algorithm under every seed (runs in parallel) on the same
/// configuration. With `out`, each run is persisted like `train` and a
/// `compare.csv` summary is written.
pub fn run_comparison(
    cfg: &ExperimentConfig,
    algorithms: &[Algorithm],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<Comparison> {
    let jobs: Vec<(Algorithm, u64)> = algorithms.iter().flat_map(|a| seeds.iter().map(move |s| (*a, *s))).collect();
    let results = par::map(&jobs, |&(alg, seed)| {
        let mut c = cfg.clone();
        c.algorithm = alg;
        match out {
            Some(dir) => run_training(&c, seed, dir).map(|o| o.records),
            None => train(&c, seed).map(|o| o.records),
        }
    });
    let mut summaries = Vec::with_capacity(jobs.len());
    let mut records = Vec::with_capacity(jobs.len());
    for ((alg, seed), r) in jobs.into_iter().zip(results) {
        let r = r?;
        summaries.push(RunSummary::of(alg, seed, &r));
        records.push(r);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("compare.csv"))?);
        writeln!(w, "algorithm,seed,first_mean,last_mean,converged_at")?;
        for s in &summaries {
            writeln!(w, "{},{},{},{},{}", s.algorithm, s.seed, s.first_mean, s.last_mean, s.converged_at)?;
        }
        w.flush()?;
    }
    Ok(Comparison { summaries, records })
}
