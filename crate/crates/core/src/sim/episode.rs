use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::{weighted_cost, CostWeights, ServerId, TaskId, TaskSpec};
use crate::mdp::{NormalizerState, Objective, RewardComponents, RewardTracker, StateVector};
use crate::Result;

use super::env::SimEnv;

/// What a scheduler sees when asked for a placement.
pub struct Decision<'a> {
    pub env: &'a SimEnv,
    pub task: &'a TaskSpec,
    pub state: &'a StateVector,
    pub feasible: &'a [ServerId],
}

/// Outcome of the first placement attempt for one decision.
pub struct Feedback<'a> {
    pub state: &'a StateVector,
    pub action: ServerId,
    pub rewards: RewardComponents,
    /// Reward on the active objective.
    pub reward: f64,
    pub success: bool,
}

pub trait Scheduler {
    fn name(&self) -> &str;

    fn select(&mut self, decision: &Decision<'_>) -> Result<ServerId>;

    /// Second attempt after a failed placement; `decision.feasible` is
    /// nonempty.
    fn retry(&mut self, decision: &Decision<'_>) -> Result<ServerId> {
        Ok(decision.feasible[0])
    }

    fn observe(&mut self, _feedback: &Feedback<'_>) -> Result<()> {
        Ok(())
    }
}

/// One line of the JSON-lines episode log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub decision: u64,
    pub task: TaskId,
    pub server: ServerId,
    pub final_server: Option<ServerId>,
    pub success: bool,
    pub retried: bool,
    pub dropped: bool,
    pub reward_lb: f64,
    pub reward_rt: f64,
    pub reward_weighted: f64,
    pub lb_cost: f64,
    pub rt_cost: f64,
    pub weighted_cost: f64,
    pub time_ms: f64,
}

/// Server-side view after each decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorRecord {
    pub decision: u64,
    pub cpu_utilization: Vec<f64>,
    pub ram_utilization: Vec<f64>,
}

/// User-side view after each decision.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub decision: u64,
    pub task: TaskId,
    pub response_time_ms: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActorBuffer {
    records: Vec<ActorRecord>,
}

impl ActorBuffer {
    pub fn push(&mut self, r: ActorRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[ActorRecord] {
        &self.records
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserBuffer {
    records: Vec<UserRecord>,
}

impl UserBuffer {
    pub fn push(&mut self, r: UserRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[UserRecord] {
        &self.records
    }
}

/// Everything recorded over one run of decisions. Wall-clock latencies are
/// kept apart from the decision records so logs stay deterministic.
#[derive(Debug, Clone, Default)]
pub struct EpisodeLog {
    pub decisions: Vec<DecisionRecord>,
    pub actor: ActorBuffer,
    pub user: UserBuffer,
    pub select_ns: Vec<u64>,
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn mean_weighted_cost(&self) -> f64 {
        mean(self.decisions.iter().map(|d| d.weighted_cost))
    }

    pub fn mean_lb_cost(&self) -> f64 {
        mean(self.decisions.iter().map(|d| d.lb_cost))
    }

    pub fn mean_rt_cost(&self) -> f64 {
        mean(self.decisions.iter().map(|d| d.rt_cost))
    }

    pub fn mean_cost(&self, objective: Objective) -> f64 {
        match objective {
            Objective::LoadBalance => self.mean_lb_cost(),
            Objective::ResponseTime => self.mean_rt_cost(),
            Objective::Weighted => self.mean_weighted_cost(),
        }
    }

    pub fn mean_reward(&self, objective: Objective) -> f64 {
        mean(self.decisions.iter().map(|d| match objective {
            Objective::LoadBalance => d.reward_lb,
            Objective::ResponseTime => d.reward_rt,
            Objective::Weighted => d.reward_weighted,
        }))
    }

    pub fn success_rate(&self) -> f64 {
        mean(self.decisions.iter().map(|d| if d.success { 1.0 } else { 0.0 }))
    }

    pub fn extend(&mut self, other: EpisodeLog) {
        self.decisions.extend(other.decisions);
        self.actor.records.extend(other.actor.records);
        self.user.records.extend(other.user.records);
        self.select_ns.extend(other.select_ns);
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.decisions {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Drives a scheduler through an environment and scores each decision.
///
/// `metric` scales the reported weighted cost. When `learn_metric` is false
/// its ranges stay frozen, which keeps costs comparable across schedulers.
pub struct EpisodeRunner {
    pub tracker: RewardTracker,
    pub metric: NormalizerState,
    pub learn_metric: bool,
    pub objective: Objective,
    pub weights: CostWeights,
    decisions: u64,
}

impl EpisodeRunner {
    pub fn new(tracker: RewardTracker, metric: NormalizerState, objective: Objective, weights: CostWeights) -> Self {
        Self { tracker, metric, learn_metric: true, objective, weights, decisions: 0 }
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    /// One decision: select, place, retry once on failure, score, feed back.
    /// `false` when the environment has no task left.
    pub fn step(&mut self, env: &mut SimEnv, sched: &mut dyn Scheduler, log: &mut EpisodeLog) -> Result<bool> {
        let Some(task_id) = env.next_task() else { return Ok(false) };
        let task = env.task(task_id)?.clone();
        let state = env.observation(task_id)?;
        let feasible = env.resource_check(task_id)?;
        let lb_before = env.lb_cost()?;

        let started = Instant::now();
        let action = sched.select(&Decision { env, task: &task, state: &state, feasible: &feasible })?;
        log.select_ns.push(started.elapsed().as_nanos() as u64);

        let first = env.assign_task(task_id, action)?;
        let mut final_server = first.success.then_some(action);
        let mut rt = first.response_time_ms;
        let mut retried = false;
        let rewards = if first.success {
            let lb_after = env.lb_cost()?;
            self.tracker.on_success(lb_before, lb_after, task.size_mcycles, rt)
        } else {
            let r = self.tracker.on_failure(lb_before);
            if !feasible.is_empty() {
                retried = true;
                let b = sched.retry(&Decision { env, task: &task, state: &state, feasible: &feasible })?;
                let second = env.assign_task(task_id, b)?;
                if second.success {
                    final_server = Some(b);
                    rt = second.response_time_ms;
                }
            }
            r
        };
        let dropped = final_server.is_none();
        if dropped {
            env.drop_task(task_id)?;
        }
        let reward = rewards.for_objective(self.objective);
        sched.observe(&Feedback { state: &state, action, rewards, reward, success: first.success })?;

        let lb_cost = env.lb_cost()?;
        self.tracker.set_prev(lb_cost);
        let (rt_cost, weighted) = if dropped {
            let worst = if self.metric.rt_range().count > 0 { self.metric.rt_range().max } else { 0.0 };
            (worst, 1.0)
        } else {
            if self.learn_metric {
                self.metric.record_costs(lb_cost, rt);
            }
            (rt, weighted_cost(lb_cost, rt, &self.weights, &self.metric))
        };

        let d = self.decisions;
        self.decisions += 1;
        log.decisions.push(DecisionRecord {
            decision: d,
            task: task_id,
            server: action,
            final_server,
            success: first.success,
            retried,
            dropped,
            reward_lb: rewards.lb,
            reward_rt: rewards.rt,
            reward_weighted: rewards.weighted,
            lb_cost,
            rt_cost,
            weighted_cost: weighted,
            time_ms: env.now_ms(),
        });
        log.actor.push(ActorRecord {
            decision: d,
            cpu_utilization: env.cpu_utilizations(),
            ram_utilization: env.ram_utilizations(),
        });
        log.user.push(UserRecord { decision: d, task: task_id, response_time_ms: rt, success: first.success });
        Ok(true)
    }

    /// Up to `max_decisions` decisions, stopping early if the episode's
    /// workload runs out.
    pub fn run_episode(&mut self, env: &mut SimEnv, sched: &mut dyn Scheduler, max_decisions: usize) -> Result<EpisodeLog> {
        let mut log = EpisodeLog::default();
        for _ in 0..max_decisions {
            if !self.step(env, sched, &mut log)? {
                break;
            }
        }
        Ok(log)
    }

    /// Exactly `count` decisions, rolling over to fresh episodes as needed.
    pub fn run_decisions(&mut self, env: &mut SimEnv, sched: &mut dyn Scheduler, count: usize) -> Result<EpisodeLog> {
        let mut log = EpisodeLog::default();
        while log.len() < count {
            let chunk = self.run_episode(env, sched, count - log.len())?;
            if chunk.is_empty() {
                env.next_episode();
            }
            log.extend(chunk);
        }
        Ok(log)
    }
}

/// Always the same server.
pub struct FixedServer(pub ServerId);

impl Scheduler for FixedServer {
    fn name(&self) -> &str {
        "fixed"
    }

    fn select(&mut self, _d: &Decision<'_>) -> Result<ServerId> {
        Ok(self.0)
    }
}

/// Cycles through the fleet.
#[derive(Default)]
pub struct RoundRobin {
    next: usize,
}

impl Scheduler for RoundRobin {
    fn name(&self) -> &str {
        "round-robin"
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<ServerId> {
        let k = self.next % d.env.fleet().len();
        self.next = k + 1;
        Ok(k)
    }
}

/// Uniform over the whole fleet, seeded.
pub struct RandomScheduler {
    rng: ChaCha8Rng,
}

impl RandomScheduler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Scheduler for RandomScheduler {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<ServerId> {
        Ok(self.rng.gen_range(0..d.env.fleet().len()))
    }

    fn retry(&mut self, d: &Decision<'_>) -> Result<ServerId> {
        Ok(d.feasible[self.rng.gen_range(0..d.feasible.len())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{NetworkModel, ServerSpec};
    use crate::mdp::{FeatureCaps, RewardConfig};
    use crate::sim::{ArrivalProcess, CountSpan, EnvConfig, Span, WorkloadProfile};

    fn env(seed: u64, profile: WorkloadProfile) -> SimEnv {
        let fleet: Vec<_> = (0..3).map(|k| ServerSpec::new(k, 4, 2000.0, 8.0)).collect();
        SimEnv::new(EnvConfig {
            net: NetworkModel::uniform(3, 20.0, 3.0).unwrap(),
            fleet,
            weights: CostWeights::default(),
            caps: FeatureCaps::default(),
            workload: profile,
            seed,
        })
        .unwrap()
    }

    fn runner() -> EpisodeRunner {
        EpisodeRunner::new(
            RewardTracker::new(RewardConfig::default(), NormalizerState::new(300.0, 3000.0)),
            NormalizerState::default(),
            Objective::Weighted,
            CostWeights::default(),
        )
    }

    fn identical_single_tasks() -> WorkloadProfile {
        WorkloadProfile {
            apps_per_episode: 12,
            tasks_per_app: CountSpan::new(1, 1),
            size_mcycles: Span::new(1000.0, 1000.0),
            ram_demand_gb: Span::new(0.5, 0.5),
            cpu_demand: Span::new(0.5, 0.5),
            arrival: ArrivalProcess::Fixed { interval_ms: Some(100.0) },
            ..Default::default()
        }
    }

    #[test]
    fn fixed_server_places_everything_there() {
        let mut e = env(1, identical_single_tasks());
        let log = runner().run_episode(&mut e, &mut FixedServer(0), 64).unwrap();
        assert_eq!(log.len(), 12);
        assert!(log.decisions.iter().all(|d| d.final_server == Some(0) && d.success));
    }

    #[test]
    fn round_robin_balances_better_than_fixed() {
        let mut e = env(1, identical_single_tasks());
        let fixed = runner().run_episode(&mut e, &mut FixedServer(0), 64).unwrap();
        let mut e = env(1, identical_single_tasks());
        let rr = runner().run_episode(&mut e, &mut RoundRobin::default(), 64).unwrap();
        assert!(rr.mean_lb_cost() <= fixed.mean_lb_cost());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let run = || {
            let mut e = env(9, WorkloadProfile::default());
            let log = runner().run_decisions(&mut e, &mut RandomScheduler::new(3), 100).unwrap();
            let mut buf = Vec::new();
            log.write_jsonl(&mut buf).unwrap();
            buf
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.iter().filter(|b| **b == b'\n').count(), 100);
        let first: serde_json::Value = serde_json::from_slice(a.split(|b| *b == b'\n').next().unwrap()).unwrap();
        for key in ["decision", "task", "server", "success", "reward_lb", "lb_cost", "rt_cost", "weighted_cost"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn infeasible_choice_retries_and_penalizes() {
        let profile = WorkloadProfile { ram_demand_gb: Span::new(7.5, 7.5), ..identical_single_tasks() };
        let mut e = env(1, profile);
        let log = runner().run_episode(&mut e, &mut FixedServer(0), 64).unwrap();
        // apps arrive every 100 ms but each holds a whole server for 500 ms
        let failed: Vec<_> = log.decisions.iter().filter(|d| !d.success).collect();
        assert!(!failed.is_empty());
        for d in &log.decisions {
            if d.success {
                assert!(d.reward_weighted.abs() <= 1.0);
            } else {
                assert_eq!(d.reward_weighted, -10.0);
                assert!(d.retried || d.dropped);
            }
        }
    }
}
