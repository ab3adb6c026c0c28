use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{DqnAgent, Nsga2Scheduler, QLearningAgent, QTable};
use crate::mdp::{feature_len, NormalizerState, Objective, RewardTracker, StateVector};
use crate::neural::checkpoint::Checkpoint;
use crate::ppo::{ActionMode, PpoAgent};
use crate::sim::{EpisodeLog, EpisodeRunner, RandomScheduler, Scheduler, SimEnv, WorkloadProfile};
use crate::{Error, Result};

use super::config::{Algorithm, ExperimentConfig};

const CALIBRATION_STREAM: u64 = 0xca11_b4a7_e000_0001;

/// One row of the metrics file: the decisions that fed one policy update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub update: usize,
    /// Mean cost on the run's objective.
    pub mean_cost: f64,
    pub mean_reward: f64,
    pub success_rate: f64,
    pub mean_lb_cost: f64,
    pub mean_rt_cost: f64,
    pub mean_weighted_cost: f64,
    pub decisions: usize,
    /// Mean wall-clock per scheduling decision. Not written to the metrics
    /// file, which must depend only on config and seed.
    #[serde(skip)]
    pub decision_ms: f64,
}

impl MetricsRecord {
    pub fn from_log(update: usize, log: &EpisodeLog, objective: Objective) -> Self {
        let n = log.select_ns.len().max(1) as f64;
        Self {
            update,
            mean_cost: log.mean_cost(objective),
            mean_reward: log.mean_reward(objective),
            success_rate: log.success_rate(),
            mean_lb_cost: log.mean_lb_cost(),
            mean_rt_cost: log.mean_rt_cost(),
            mean_weighted_cost: log.mean_weighted_cost(),
            decisions: log.len(),
            decision_ms: log.select_ns.iter().sum::<u64>() as f64 / n / 1e6,
        }
    }
}

pub fn write_metrics_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

/// Per-update decision latency, kept apart from the deterministic metrics.
pub fn write_timing_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "update,decision_ms")?;
    for r in records {
        writeln!(w, "{},{}", r.update, r.decision_ms)?;
    }
    w.flush()?;
    Ok(())
}

/// A scheduler of any supported kind.
pub enum Agent {
    Ppo(PpoAgent),
    Qlearning(QLearningAgent),
    Dqn(DqnAgent),
    Nsga2(Nsga2Scheduler),
}

impl Agent {
    pub fn new(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> Result<Self> {
        let fleet = cfg.fleet();
        let input = feature_len(cfg.features.max_servers);
        Ok(match algorithm {
            Algorithm::Ppo => Agent::Ppo(PpoAgent::new(input, &fleet, cfg.ppo, seed)?),
            Algorithm::Qlearning => Agent::Qlearning(QLearningAgent::new(fleet.len(), cfg.qlearning, seed)?),
            Algorithm::Dqn => Agent::Dqn(DqnAgent::new(input, fleet.len(), cfg.dqn, seed)?),
            Algorithm::Nsga2 => Agent::Nsga2(Nsga2Scheduler::new(cfg.nsga2, seed)?),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Agent::Ppo(_) => Algorithm::Ppo,
            Agent::Qlearning(_) => Algorithm::Qlearning,
            Agent::Dqn(_) => Algorithm::Dqn,
            Agent::Nsga2(_) => Algorithm::Nsga2,
        }
    }

    pub fn scheduler(&mut self) -> &mut dyn Scheduler {
        match self {
            Agent::Ppo(a) => a,
            Agent::Qlearning(a) => a,
            Agent::Dqn(a) => a,
            Agent::Nsga2(a) => a,
        }
    }

    /// Switches learning agents to greedy, non-learning action selection.
    pub fn set_greedy(&mut self) {
        match self {
            Agent::Ppo(a) => a.mode = ActionMode::Greedy,
            Agent::Qlearning(a) => a.greedy = true,
            Agent::Dqn(a) => a.greedy = true,
            Agent::Nsga2(_) => {}
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            Agent::Ppo(a) => a.to_checkpoint().save(path),
            Agent::Dqn(a) => a.to_checkpoint().save(path),
            Agent::Qlearning(a) => {
                let mut w = BufWriter::new(File::create(path)?);
                a.table.write_to(&mut w)?;
                w.flush()?;
                Ok(())
            }
            Agent::Nsga2(a) => {
                let c = Checkpoint::new("nsga2")
                    .with_meta("population", a.cfg.population)
                    .with_meta("generations", a.cfg.generations)
                    .with_meta("crossover", a.cfg.crossover);
                c.save(path)
            }
        }
    }

    /// Loads any checkpoint written by [`Agent::save`] and checks that it
    /// fits the configured fleet and feature layout.
    pub fn load(cfg: &ExperimentConfig, path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let mut first = String::new();
        BufReader::new(File::open(path)?).read_line(&mut first)?;
        let fleet = cfg.fleet();
        let input = feature_len(cfg.features.max_servers);
        let agent = if first.starts_with("qtable") {
            let table = QTable::read_from(BufReader::new(File::open(path)?))?;
            if table.n_actions != fleet.len() {
                return Err(Error::Checkpoint(format!(
                    "q-table has {} actions, fleet has {} servers",
                    table.n_actions,
                    fleet.len()
                )));
            }
            let mut a = QLearningAgent::new(fleet.len(), cfg.qlearning, seed)?;
            a.table = table;
            Agent::Qlearning(a)
        } else {
            let c = Checkpoint::load(path)?;
            match c.kind.as_str() {
                "ppo" => {
                    let a = PpoAgent::from_checkpoint(&c)?;
                    a.check_compatible(&fleet, input)?;
                    Agent::Ppo(a)
                }
                "dqn" => {
                    let a = DqnAgent::from_checkpoint(&c)?;
                    if a.online.input != input || a.online.output != fleet.len() {
                        return Err(Error::Checkpoint(format!(
                            "checkpoint expects {} servers and {} features, got {} and {input}",
                            a.online.output,
                            a.online.input,
                            fleet.len()
                        )));
                    }
                    Agent::Dqn(a)
                }
                "nsga2" => {
                    let mut n = cfg.nsga2;
                    n.population = c.meta_parse("population")?;
                    n.generations = c.meta_parse("generations")?;
                    n.crossover = c.meta_parse("crossover")?;
                    Agent::Nsga2(Nsga2Scheduler::new(n, seed)?)
                }
                other => return Err(Error::Checkpoint(format!("unknown checkpoint kind `{other}`"))),
            }
        };
        Ok(agent)
    }
}

/// Runs a uniform-random policy on a separate workload draw and returns the
/// resulting cost ranges and reward statistics. Every algorithm trained
/// under the same seed shares them, so their costs are comparable.
pub fn calibrate(cfg: &ExperimentConfig, workload: &WorkloadProfile, seed: u64) -> Result<(NormalizerState, RewardTracker)> {
    let (lo, hi) = workload.scaled_size_range();
    let mut env = SimEnv::new(cfg.env_config(workload.clone(), seed ^ CALIBRATION_STREAM)?)?;
    let tracker = RewardTracker::new(cfg.reward_config(), NormalizerState::new(lo, hi));
    let mut runner = EpisodeRunner::new(tracker, NormalizerState::new(lo, hi), cfg.objective, cfg.weights);
    let mut random = RandomScheduler::new(seed ^ CALIBRATION_STREAM);
    runner.run_decisions(&mut env, &mut random, cfg.calibration_decisions.max(1))?;
    Ok((runner.metric, runner.tracker))
}

/// A seeded environment plus a runner whose cost normalisation is frozen
/// after calibration.
pub struct Session {
    pub env: SimEnv,
    pub runner: EpisodeRunner,
    pending_nsga: Option<EpisodeLog>,
}

impl Session {
    pub fn new(cfg: &ExperimentConfig, workload: WorkloadProfile, seed: u64) -> Result<Self> {
        let (metric, tracker) = calibrate(cfg, &workload, seed)?;
        let env = SimEnv::new(cfg.env_config(workload, seed)?)?;
        let mut runner = EpisodeRunner::new(tracker, metric, cfg.objective, cfg.weights);
        runner.learn_metric = false;
        Ok(Self { env, runner, pending_nsga: None })
    }

    /// Observation for the task the next decision will see, rolling over to
    /// a new episode if this one is exhausted.
    pub fn peek_state(&mut self) -> Result<StateVector> {
        let task = match self.env.next_task() {
            Some(t) => t,
            None => {
                self.env.next_episode();
                self.env.next_task().ok_or_else(|| Error::InvalidTask("workload produced no tasks".into()))?
            }
        };
        self.env.observation(task)
    }

    /// Exactly `count` decisions.
    pub fn decide(&mut self, sched: &mut dyn Scheduler, count: usize) -> Result<EpisodeLog> {
        self.runner.run_decisions(&mut self.env, sched, count)
    }

    /// One decision, rolling into a new episode if needed.
    fn decide_one(&mut self, sched: &mut dyn Scheduler, log: &mut EpisodeLog) -> Result<()> {
        if !self.runner.step(&mut self.env, sched, log)? {
            self.env.next_episode();
            if !self.runner.step(&mut self.env, sched, log)? {
                return Err(Error::InvalidTask("workload produced no tasks".into()));
            }
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub agent: Agent,
    pub log: EpisodeLog,
}

/// Trains `cfg.algorithm` for `cfg.updates` policy updates: blocks of
/// `ppo.horizon` decisions for the learning agents, one evolve call (one
/// application) for NSGA-II.
pub fn train(cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut session = Session::new(cfg, cfg.workload.clone(), seed)?;
    let mut agent = Agent::new(cfg, cfg.algorithm, seed)?;
    let t = cfg.ppo.horizon;
    let mut records = Vec::with_capacity(cfg.updates);
    let mut all = EpisodeLog::default();
    for u in 0..cfg.updates {
        let log = match &mut agent {
            Agent::Ppo(a) => {
                let log = session.decide(a, t)?;
                let next = session.peek_state()?;
                a.update(Some(next.values()))?;
                log
            }
            Agent::Qlearning(a) => {
                let log = session.decide(a, t)?;
                a.end_block();
                log
            }
            Agent::Dqn(a) => {
                let log = session.decide(a, t)?;
                a.end_block();
                log
            }
            Agent::Nsga2(a) => nsga2_block(&mut session, a)?,
        };
        records.push(MetricsRecord::from_log(u, &log, cfg.objective));
        all.extend(log);
    }
    Ok(TrainOutcome { records, agent, log: all })
}

/// Decisions from one evolve call up to (excluding) the decision that
/// triggers the next one.
fn nsga2_block(session: &mut Session, sched: &mut Nsga2Scheduler) -> Result<EpisodeLog> {
    let mut log = session.pending_nsga.take().unwrap_or_default();
    let start = if log.is_empty() { sched.evolutions() + 1 } else { sched.evolutions() };
    loop {
        let mut one = EpisodeLog::default();
        let before = sched.evolutions();
        session.decide_one(sched, &mut one)?;
        if sched.evolutions() > before && sched.evolutions() > start {
            session.pending_nsga = Some(one);
            return Ok(log);
        }
        log.extend(one);
    }
}

/// Output directory of one run.
pub fn run_dir(out: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    out.join(algorithm.as_str()).join(format!("seed-{seed}"))
}

/// [`train`] plus persistence: `metrics.csv`, `timing.csv`,
/// `episodes.jsonl` and `checkpoint.txt` under [`run_dir`].
pub fn run_training(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<TrainOutcome> {
    let outcome = train(cfg, seed)?;
    let dir = run_dir(out, cfg.algorithm, seed);
    fs::create_dir_all(&dir)?;
    write_metrics_csv(&outcome.records, dir.join("metrics.csv"))?;
    write_timing_csv(&outcome.records, dir.join("timing.csv"))?;
    let mut w = BufWriter::new(File::create(dir.join("episodes.jsonl"))?);
    outcome.log.write_jsonl(&mut w)?;
    w.flush()?;
    outcome.agent.save(dir.join("checkpoint.txt"))?;
    Ok(outcome)
}

/// First update from which the trailing `window`-update moving average of
/// `costs` stays within `tol` (relative) of the final cost, the mean of the
/// last `window` updates.
pub fn updates_to_converge(costs: &[f64], window: usize, tol: f64) -> usize {
    if costs.is_empty() {
        return 0;
    }
    let w = window.clamp(1, costs.len());
    let last = &costs[costs.len() - w..];
    let fin = last.iter().sum::<f64>() / w as f64;
    let band = tol * fin.abs();
    let mut first_ok = costs.len();
    for i in (0..costs.len()).rev() {
        let lo = (i + 1).saturating_sub(w);
        let ma = costs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
        if (ma - fin).abs() <= band {
            first_ok = i;
        } else {
            break;
        }
    }
    first_ok
}

pub fn window_mean(costs: &[f64], from: usize, to: usize) -> f64 {
    let s = &costs[from.min(costs.len())..to.min(costs.len())];
    if s.is_empty() {
        f64::NAN
    } else {
        s.iter().sum::<f64>() / s.len() as f64
    }
}
