use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fogsched::experiments::{
    load_config, measure_overhead, run_checks, run_comparison, run_dir, run_evaluation, run_training, save_config,
    write_overhead_csv, Algorithm, CheckOptions, ExperimentConfig, RunSummary,
};
use fogsched::mdp::Objective;

#[derive(Parser)]
#[command(name = "fogsched", version, about = "Fog/cloud DAG scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed (overrides the config's seed list).
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    objective: Option<Objective>,
    #[arg(long)]
    updates: Option<usize>,
    /// Output directory.
    #[arg(long, env = "FOGSCHED_OUT", default_value = "runs")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = self.objective {
            cfg.objective = o;
        }
        if let Some(u) = self.updates {
            cfg.updates = u;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm for every seed.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algo: Option<Algorithm>,
    },
    /// Evaluate a checkpoint greedily on the evaluation workload.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Convergence study: train several algorithms on the same seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long = "algo", value_delimiter = ',', default_value = "ppo,qlearning,dqn,nsga2")]
        algos: Vec<Algorithm>,
    },
    /// Per-decision scheduling latency with 95% confidence intervals.
    Overhead {
        #[command(flatten)]
        common: Common,
        #[arg(long = "algo", value_delimiter = ',', default_value = "ppo,nsga2")]
        algos: Vec<Algorithm>,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
    },
    /// Run every oracle suite; nonzero exit status on any failure.
    Check {
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn print_summary(s: &RunSummary) {
    println!(
        "{:<10} seed {:<6} first10 {:>9.5}  last10 {:>9.5}  converged at update {}",
        s.algorithm.as_str(),
        s.seed,
        s.first_mean,
        s.last_mean,
        s.converged_at
    );
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common, algo } => {
            let mut cfg = common.config()?;
            if let Some(a) = algo {
                cfg.algorithm = a;
            }
            std::fs::create_dir_all(&common.out)?;
            save_config(&cfg, common.out.join(format!("{}-config.toml", cfg.algorithm)))?;
            for &seed in &cfg.seeds {
                let o = run_training(&cfg, seed, &common.out)?;
                print_summary(&RunSummary::of(cfg.algorithm, seed, &o.records));
                println!("  wrote {}", run_dir(&common.out, cfg.algorithm, seed).display());
            }
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.config()?;
            for &seed in &cfg.seeds {
                let r = run_evaluation(&cfg, &checkpoint, seed, &common.out)?;
                let mean = r.iter().map(|x| x.mean_cost).sum::<f64>() / r.len().max(1) as f64;
                println!("seed {seed}: mean {} cost {mean:.5} over {} blocks", cfg.objective.as_str(), r.len());
            }
        }
        Command::Compare { common, algos } => {
            let cfg = common.config()?;
            if algos.is_empty() {
                bail!("no algorithms given");
            }
            let c = run_comparison(&cfg, &algos, &cfg.seeds, Some(&common.out))?;
            for s in &c.summaries {
                print_summary(s);
            }
            println!("wrote {}", common.out.join("compare.csv").display());
        }
        Command::Overhead { common, algos, rounds } => {
            let cfg = common.config()?;
            let seed = cfg.seeds[0];
            let stats = measure_overhead(&cfg, &algos, rounds, seed)?;
            for s in &stats {
                println!(
                    "{:<10} {:>4} rounds  mean {:>10.4} ms  95% CI [{:.4}, {:.4}]",
                    s.algorithm.as_str(),
                    s.rounds,
                    s.mean_ms,
                    s.ci_low_ms,
                    s.ci_high_ms
                );
            }
            std::fs::create_dir_all(&common.out)?;
            write_overhead_csv(&stats, common.out.join("overhead.csv"))?;
        }
        Command::Check { seed } => {
            let mut opts = CheckOptions::default();
            if let Some(s) = seed {
                opts.seed = s;
            }
            let report = run_checks(&opts);
            print!("{}", report.to_json_lines()?);
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
