use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{dominates, fast_nondominated_sort, QTable};
use crate::domain::{
    critical_path, load_balance_cost, population_variance, AppDag, CostWeights, MeanFleetEstimator, NetworkModel,
    PathCostEstimator, ServerSpec, TaskId, TaskSpec,
};
use crate::mdp::{
    feature_len, reward_load_balance, reward_response_time, NormalizerState, Objective, RewardConfig, RewardTracker,
};
use crate::neural::{backward, finite_difference_check_with, forward_cached, Activation, BackwardFn, MlpParams};
use crate::ppo::{clip_ratio, compute_advantages, PpoAgent, PpoHyper, RolloutBuffer, Transition};
use crate::sim::{
    replay_utilization, ArrivalProcess, CountSpan, EnvConfig, EpisodeLog, EpisodeRunner, RandomScheduler, SimEnv, Span,
    WorkloadProfile,
};
use crate::Result;

/// Outcome of one oracle suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed discrepancy, where the suite has a numeric one.
    pub max_error: f64,
    pub elapsed_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

struct Tally {
    name: &'static str,
    started: Instant,
    cases: usize,
    failures: usize,
    max_error: f64,
    first_failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, started: Instant::now(), cases: 0, failures: 0, max_error: 0.0, first_failure: None }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    fn error(&mut self, err: f64, tol: f64, what: impl FnOnce() -> String) {
        if err > self.max_error || err.is_nan() {
            self.max_error = err;
        }
        self.check(err <= tol, what);
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            cases: self.cases,
            failures: self.failures,
            max_error: self.max_error,
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
            first_failure: self.first_failure,
        }
    }
}

/// Inputs that let tests perturb the code under check.
#[derive(Clone, Copy)]
pub struct CheckOptions {
    pub seed: u64,
    pub backward: BackwardFn,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { seed: 0x0c4e_c4e5, backward }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub suites: Vec<SuiteResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    /// One JSON object per suite, then a summary object.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.suites {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        let failed: Vec<&str> = self.suites.iter().filter(|s| !s.passed()).map(|s| s.name.as_str()).collect();
        let summary = serde_json::json!({
            "summary": {
                "suites": self.suites.len(),
                "cases": self.suites.iter().map(|s| s.cases).sum::<usize>(),
                "failed": failed,
                "passed": self.passed(),
            }
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        Ok(out)
    }
}

pub const SUITES: [&str; 9] = [
    "gradient",
    "advantage",
    "clip_ratio",
    "critical_path",
    "pareto",
    "variance",
    "event_replay",
    "reward",
    "qlearning_toy",
];

pub fn run_checks(opts: &CheckOptions) -> CheckReport {
    let suites = vec![
        check_gradients(opts, 100),
        check_advantages(opts.seed, 500),
        check_clip_ratio(opts.seed),
        check_critical_path(opts.seed, 200),
        check_pareto(opts.seed, 50),
        check_variance(opts.seed, 500),
        check_event_replay(opts.seed, 100),
        check_rewards(opts.seed),
        check_qlearning_toy(opts.seed),
    ];
    CheckReport { suites }
}

fn sq_loss(target: &[f64]) -> impl Fn(&[f64]) -> (f64, Vec<f64>) + '_ {
    move |out: &[f64]| {
        let l = out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum();
        let g = out.iter().zip(target).map(|(o, t)| 2.0 * (o - t)).collect();
        (l, g)
    }
}

/// Central differences (eps 1e-5) against the analytic backward pass for
/// `draws` random networks per activation. ReLU draws with a
/// pre-activation within 1e-4 of the kink are redrawn, since central
/// differences are undefined across it.
pub fn check_gradients(opts: &CheckOptions, draws: usize) -> SuiteResult {
    let mut t = Tally::new("gradient");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x67ad);
    for act in [Activation::Tanh, Activation::Relu, Activation::Identity] {
        let mut done = 0;
        while done < draws {
            let (ni, nh, no) = (rng.gen_range(1..=10), rng.gen_range(1..=16), rng.gen_range(1..=6));
            let p = MlpParams::init(ni, nh, no, act, &mut rng);
            let x: Vec<f64> = (0..ni).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if act == Activation::Relu {
                let pre = forward_cached(&p, &x).map(|c| c.pre).unwrap_or_default();
                if pre.iter().any(|z| z.abs() < 1e-4) {
                    continue;
                }
            }
            let target: Vec<f64> = (0..no).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = sq_loss(&target);
            match finite_difference_check_with(&p, &x, &loss, 1e-5, opts.backward) {
                Ok(err) => t.error(err, 1e-4, || format!("{} draw {done}: relative error {err:e}", act.tag())),
                Err(e) => t.check(false, || e.to_string()),
            }
            done += 1;
        }
    }
    t.finish()
}

fn random_buffer(rng: &mut ChaCha8Rng, len: usize) -> RolloutBuffer {
    RolloutBuffer {
        transitions: (0..len)
            .map(|_| Transition {
                state: vec![],
                action: 0,
                reward: rng.gen_range(-10.0..1.0),
                value: rng.gen_range(-5.0..5.0),
                log_prob: 0.0,
                success: true,
            })
            .collect(),
        bootstrap_value: rng.gen_range(-5.0..5.0),
    }
}

/// Backward recursion against the explicit discounted sum per step.
pub fn check_advantages(seed: u64, buffers: usize) -> SuiteResult {
    let mut t = Tally::new("advantage");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xad7);
    for b in 0..buffers {
        let len = rng.gen_range(1..=64);
        let gamma: f64 = rng.gen_range(0.0..=1.0);
        let buf = random_buffer(&mut rng, len);
        let adv = match compute_advantages(&buf, gamma) {
            Ok(a) => a,
            Err(e) => {
                t.check(false, || e.to_string());
                continue;
            }
        };
        let mut worst: f64 = 0.0;
        for (s, a) in adv.iter().enumerate() {
            let mut naive = -buf.transitions[s].value;
            for k in s..len {
                naive += gamma.powi((k - s) as i32) * buf.transitions[k].reward;
            }
            naive += gamma.powi((len - s) as i32) * buf.bootstrap_value;
            worst = worst.max((a - naive).abs());
        }
        t.error(worst, 1e-10, || format!("buffer {b} (len {len}): abs error {worst:e}"));
    }
    t.finish()
}

/// Pointwise clip on a 10^4 grid, unit ratios right after the old actor is
/// synced, and first-epoch surrogate equal to the advantage sum.
pub fn check_clip_ratio(seed: u64) -> SuiteResult {
    let mut t = Tally::new("clip_ratio");
    let eps = 0.3;
    for i in 0..10_000 {
        let r = 3.0 * i as f64 / 9_999.0 - 0.5;
        let want = if r < 1.0 - eps {
            1.0 - eps
        } else if r > 1.0 + eps {
            1.0 + eps
        } else {
            r
        };
        let got = clip_ratio(r, eps);
        t.check(got == want, || format!("clip({r}) = {got}, expected {want}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc11f);
    let n_servers = 5;
    let fleet: Vec<ServerSpec> = (0..n_servers).map(|k| ServerSpec::new(k, 2, 1000.0, 4.0)).collect();
    let input = feature_len(n_servers);
    for trial in 0..20 {
        let hyper = PpoHyper { horizon: 32, epochs: 3, ..PpoHyper::default() };
        let mut agent = match PpoAgent::new(input, &fleet, hyper, seed.wrapping_add(trial)) {
            Ok(a) => a,
            Err(e) => {
                t.check(false, || e.to_string());
                continue;
            }
        };
        let fill = |agent: &mut PpoAgent, rng: &mut ChaCha8Rng| -> Result<()> {
            for _ in 0..32 {
                let s: Vec<f64> = (0..input).map(|_| rng.gen_range(0.0..1.0)).collect();
                let (action, log_prob, value) = agent.select_action(&s, crate::ppo::ActionMode::Sample)?;
                let reward = rng.gen_range(-1.0..1.0);
                agent.buffer.push(Transition { state: s, action, reward, value, log_prob, success: true });
            }
            Ok(())
        };
        let outcome = (|| -> Result<(f64, f64, f64)> {
            fill(&mut agent, &mut rng)?;
            agent.update(None)?;
            fill(&mut agent, &mut rng)?;
            let ratios = agent.ratios()?;
            let worst = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
            let adv = compute_advantages(&agent.buffer, agent.hyper.gamma)?;
            let (_, diag) = agent.ppo_loss(&adv)?;
            Ok((worst, diag.l_clip, adv.iter().sum()))
        })();
        match outcome {
            Ok((worst, l_clip, sum)) => {
                t.error(worst, 1e-12, || format!("trial {trial}: ratio deviates by {worst:e}"));
                let d = (l_clip - sum).abs() / sum.abs().max(1.0);
                t.error(d, 1e-12, || format!("trial {trial}: L_clip {l_clip} vs sum of advantages {sum}"));
            }
            Err(e) => t.check(false, || e.to_string()),
        }
    }
    t.finish()
}

/// Random DAG of up to `max_nodes` tasks with shuffled ids and coarse
/// sizes and packets so equal-cost paths occur.
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize, app: usize) -> Result<AppDag> {
    let n = rng.gen_range(1..=max_nodes);
    let mut ids: Vec<TaskId> = (0..n).collect();
    ids.shuffle(rng);
    let mut tasks = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = TaskSpec::root(ids[i], app, 500.0 * rng.gen_range(1..=4) as f64);
        if i > 0 {
            let parents = rng.gen_range(0..=i.min(3));
            let mut pool: Vec<usize> = (0..i).collect();
            pool.shuffle(rng);
            for &p in pool.iter().take(parents) {
                t = t.with_parent(ids[p], rng.gen_range(1..=2) as f64);
            }
        }
        tasks.push(t);
    }
    AppDag::unflagged(app, tasks)
}

fn enumerate_paths(dag: &AppDag) -> Vec<Vec<TaskId>> {
    fn walk(dag: &AppDag, id: TaskId, prefix: &mut Vec<TaskId>, out: &mut Vec<Vec<TaskId>>) {
        prefix.push(id);
        let succ = dag.successors(id);
        if succ.is_empty() {
            out.push(prefix.clone());
        }
        for s in succ {
            walk(dag, s, prefix, out);
        }
        prefix.pop();
    }
    let mut out = Vec::new();
    for t in dag.tasks.iter().filter(|t| t.predecessors.is_empty()) {
        walk(dag, t.id, &mut Vec::new(), &mut out);
    }
    out
}

fn path_cost(dag: &AppDag, path: &[TaskId], est: &dyn PathCostEstimator) -> f64 {
    let mut c = 0.0;
    for (i, id) in path.iter().enumerate() {
        let t = dag.task(*id).expect("path node in dag");
        c += est.node_cost(t);
        if i > 0 {
            let k = t.predecessors.iter().position(|p| *p == path[i - 1]).expect("edge on path");
            c += est.edge_cost(t.packet_mb[k]);
        }
    }
    c
}

/// The marked path has maximal cost among all enumerated root-to-sink
/// paths and is the lexicographically smallest id sequence among the
/// tied maxima.
pub fn check_critical_path(seed: u64, dags: usize) -> SuiteResult {
    let mut t = Tally::new("critical_path");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc9);
    for d in 0..dags {
        let fleet: Vec<ServerSpec> =
            (0..3).map(|k| ServerSpec::new(k, 2, 1000.0 * rng.gen_range(1..=3) as f64, 4.0)).collect();
        let net = NetworkModel::uniform(3, 10.0, 5.0).expect("valid network");
        let est = MeanFleetEstimator::from_fleet(&fleet, &net);
        let dag = match random_dag(&mut rng, 12, d) {
            Ok(g) => g,
            Err(e) => {
                t.check(false, || e.to_string());
                continue;
            }
        };
        let cp = match critical_path(&dag, &est) {
            Ok(p) => p,
            Err(e) => {
                t.check(false, || e.to_string());
                continue;
            }
        };
        let paths = enumerate_paths(&dag);
        let costs: Vec<f64> = paths.iter().map(|p| path_cost(&dag, p, &est)).collect();
        let best = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expected = paths
            .iter()
            .zip(&costs)
            .filter(|(_, c)| (best - **c).abs() <= 1e-9 * best.abs().max(1.0))
            .map(|(p, _)| p)
            .min()
            .cloned()
            .unwrap_or_default();
        let got_cost = path_cost(&dag, &cp, &est);
        let err = (got_cost - best).abs() / best.abs().max(1.0);
        t.error(err, 1e-12, || format!("dag {d}: path cost {got_cost} vs max {best}"));
        t.check(cp == expected, || format!("dag {d}: path {cp:?}, tie rule expects {expected:?}"));
    }
    t.finish()
}

/// Front 0 of the fast sort equals the set of points nothing dominates.
pub fn check_pareto(seed: u64, clouds: usize) -> SuiteResult {
    let mut t = Tally::new("pareto");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a7e);
    for c in 0..clouds {
        let n = rng.gen_range(1..=200);
        let coarse = c % 2 == 0;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                if coarse {
                    [rng.gen_range(0..10) as f64, rng.gen_range(0..10) as f64]
                } else {
                    [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]
                }
            })
            .collect();
        let brute: Vec<usize> = (0..n).filter(|&i| !pts.iter().any(|q| dominates(q, &pts[i]))).collect();
        let fronts = fast_nondominated_sort(&pts);
        let mut f0 = fronts.first().cloned().unwrap_or_default();
        f0.sort_unstable();
        let total: usize = fronts.iter().map(Vec::len).sum();
        t.check(f0 == brute && total == n, || format!("cloud {c}: front 0 has {} points, brute force {}", f0.len(), brute.len()));
    }
    t.finish()
}

/// Population variance against the pairwise-difference identity
/// `Var = sum_ij (x_i - x_j)^2 / (2 n^2)`, and the load-balance cost built
/// from it.
pub fn check_variance(seed: u64, draws: usize) -> SuiteResult {
    let mut t = Tally::new("variance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a);
    let pairwise = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mut s = 0.0;
        for a in xs {
            for b in xs {
                s += (a - b) * (a - b);
            }
        }
        s / (2.0 * n * n)
    };
    for d in 0..draws {
        let n = rng.gen_range(1..=20);
        let cpu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let ram: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let a1 = rng.gen_range(0.0..=1.0);
        let w = CostWeights { a1, a2: 1.0 - a1, ..CostWeights::default() };
        let err = (population_variance(&cpu) - pairwise(&cpu)).abs();
        t.error(err, 1e-12, || format!("draw {d}: variance error {err:e}"));
        match load_balance_cost(&cpu, &ram, &w) {
            Ok(lb) => {
                let want = a1 * pairwise(&cpu) + (1.0 - a1) * pairwise(&ram);
                let e = (lb - want).abs();
                t.error(e, 1e-12, || format!("draw {d}: load-balance error {e:e}"));
            }
            Err(e) => t.check(false, || e.to_string()),
        }
    }
    t.finish()
}

/// A small random fleet and workload for simulator checks.
pub fn random_env_config(rng: &mut ChaCha8Rng, seed: u64) -> Result<EnvConfig> {
    let n = rng.gen_range(2..=6);
    let fleet: Vec<ServerSpec> = (0..n)
        .map(|k| ServerSpec::new(k, rng.gen_range(1..=8), rng.gen_range(1000.0..3500.0), rng.gen_range(1.0..16.0)))
        .collect();
    let net = NetworkModel::from_fn(n, |j, k| (5.0 + ((j * 7 + k * 3) % 20) as f64, 1.0 + ((j + k) % 10) as f64))?;
    let workload = WorkloadProfile {
        apps_per_episode: rng.gen_range(2..=8),
        tasks_per_app: CountSpan::new(1, 6),
        dag_width: CountSpan::new(1, 3),
        size_mcycles: Span::new(200.0, 3000.0),
        ram_demand_gb: Span::new(0.1, 2.0),
        cpu_demand: Span::new(0.2, 2.0),
        packet_mb: Span::new(0.5, 4.0),
        arrival: if rng.gen::<bool>() {
            ArrivalProcess::Poisson { rate_per_s: rng.gen_range(0.5..5.0) }
        } else {
            ArrivalProcess::Fixed { interval_ms: Some(rng.gen_range(50.0..800.0)) }
        },
        size_scale: 1.0,
    };
    Ok(EnvConfig {
        fleet,
        net,
        weights: CostWeights::default(),
        caps: crate::mdp::FeatureCaps::default(),
        workload,
        seed,
    })
}

fn audit_env(env: &SimEnv) -> std::result::Result<(), String> {
    env.audit()?;
    let replay = replay_utilization(env.fleet(), env.history(), env.now_ms());
    let (cpu, ram) = (env.cpu_utilizations(), env.ram_utilizations());
    for (k, (rc, rr)) in replay.iter().enumerate() {
        if (rc - cpu[k]).abs() > 1e-9 || (rr - ram[k]).abs() > 1e-9 {
            return Err(format!(
                "server {k}: replayed ({rc}, {rr}) vs live ({}, {}) at {} ms",
                cpu[k],
                ram[k],
                env.now_ms()
            ));
        }
    }
    Ok(())
}

/// Drives one episode event by event with random (possibly infeasible)
/// placements, auditing after every event and every decision.
fn conservation_episode(cfg: EnvConfig, seed: u64) -> std::result::Result<usize, String> {
    let mut env = SimEnv::new(cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.fleet().len();
    let mut audits = 0;
    loop {
        if env.has_ready() {
            let task = env.next_task().ok_or("ready task vanished")?;
            let first = env.assign_task(task, rng.gen_range(0..n)).map_err(|e| e.to_string())?;
            if !first.success {
                let feasible = env.resource_check(task).map_err(|e| e.to_string())?;
                let placed = match feasible.first() {
                    Some(&k) => env.assign_task(task, k).map_err(|e| e.to_string())?.success,
                    None => false,
                };
                if !placed {
                    env.drop_task(task).map_err(|e| e.to_string())?;
                }
            }
        } else if let Some(t) = env.next_event_ms() {
            env.advance(t).map_err(|e| e.to_string())?;
        } else {
            break;
        }
        audit_env(&env)?;
        audits += 1;
    }
    for (k, st) in env.states().iter().enumerate() {
        if st.cpu_utilization != 0.0 || st.ram_utilization != 0.0 || !st.resident_tasks.is_empty() {
            return Err(format!("server {k} not idle after drain"));
        }
    }
    Ok(audits)
}

fn logged_run(cfg: EnvConfig, seed: u64) -> Result<Vec<u8>> {
    let mut env = SimEnv::new(cfg)?;
    let (lo, hi) = env.profile().scaled_size_range();
    let tracker = RewardTracker::new(RewardConfig::default(), NormalizerState::new(lo, hi));
    let mut runner =
        EpisodeRunner::new(tracker, NormalizerState::new(lo, hi), Objective::Weighted, CostWeights::default());
    let mut sched = RandomScheduler::new(seed);
    let log: EpisodeLog = runner.run_episode(&mut env, &mut sched, usize::MAX)?;
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf)?;
    Ok(buf)
}

/// Utilization bounds, resident-share equality and replay agreement at
/// every event, idle servers after drain, and byte-identical logs across
/// repeated seeded runs.
pub fn check_event_replay(seed: u64, episodes: usize) -> SuiteResult {
    let mut t = Tally::new("event_replay");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7e);
    for e in 0..episodes {
        let ep_seed = rng.gen::<u64>();
        let cfg = match random_env_config(&mut rng, ep_seed) {
            Ok(c) => c,
            Err(err) => {
                t.check(false, || err.to_string());
                continue;
            }
        };
        match conservation_episode(cfg.clone(), ep_seed) {
            Ok(_) => t.check(true, String::new),
            Err(msg) => t.check(false, || format!("episode {e}: {msg}")),
        }
        let a = logged_run(cfg.clone(), ep_seed);
        let b = logged_run(cfg, ep_seed);
        match (a, b) {
            (Ok(a), Ok(b)) => t.check(a == b && !a.is_empty(), || format!("episode {e}: logs differ between runs")),
            (Err(err), _) | (_, Err(err)) => t.check(false, || format!("episode {e}: {err}")),
        }
    }
    t.finish()
}

/// Sign semantics of the load-balance and response-time rewards, the
/// weighted reward range, and penalties exactly on failed placements.
pub fn check_rewards(seed: u64) -> SuiteResult {
    let mut t = Tally::new("reward");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e3a);
    let cfg = RewardConfig::default();
    for _ in 0..2000 {
        let prev: f64 = rng.gen_range(0.0..0.25);
        let cur: f64 = if rng.gen_range(0..10) == 0 { prev } else { rng.gen_range(0.0..0.25) };
        let r = reward_load_balance(prev, cur, true, &cfg);
        t.check((r > 0.0) == (cur < prev), || format!("lb reward {r} for {prev} -> {cur}"));
        let mean: f64 = rng.gen_range(10.0..2000.0);
        let rt: f64 = if rng.gen_range(0..10) == 0 { mean } else { rng.gen_range(10.0..2000.0) };
        let r = reward_response_time(mean, rt, true, &cfg);
        t.check((r > 0.0) == (rt < mean), || format!("rt reward {r} for mean {mean}, rt {rt}"));
    }
    let mut tracker = RewardTracker::new(cfg, NormalizerState::new(100.0, 3000.0));
    let mut lb = 0.05;
    for i in 0..2000 {
        let next = (lb + rng.gen_range(-0.02..0.02f64)).clamp(0.0, 0.25);
        let r = tracker.on_success(lb, next, rng.gen_range(100.0..3000.0), rng.gen_range(10.0..3000.0));
        t.check((-1.0..=1.0).contains(&r.weighted), || format!("success {i}: weighted reward {} outside [-1, 1]", r.weighted));
        lb = next;
    }
    let mut rng_env = ChaCha8Rng::seed_from_u64(seed ^ 0xfa11);
    for e in 0..20 {
        let ep_seed = rng_env.gen::<u64>();
        let mut env_cfg = match random_env_config(&mut rng_env, ep_seed) {
            Ok(c) => c,
            Err(err) => {
                t.check(false, || err.to_string());
                continue;
            }
        };
        env_cfg.workload.ram_demand_gb = Span::new(0.5, 1.0);
        let run = (|| -> Result<EpisodeLog> {
            let mut env = SimEnv::new(env_cfg)?;
            let (lo, hi) = env.profile().scaled_size_range();
            let tracker = RewardTracker::new(cfg, NormalizerState::new(lo, hi));
            let mut runner =
                EpisodeRunner::new(tracker, NormalizerState::new(lo, hi), Objective::Weighted, CostWeights::default());
            runner.run_episode(&mut env, &mut RandomScheduler::new(ep_seed), usize::MAX)
        })();
        match run {
            Ok(log) => {
                for d in &log.decisions {
                    let penalised = [d.reward_lb, d.reward_rt, d.reward_weighted].iter().all(|r| *r == cfg.penalty);
                    t.check(penalised == !d.success, || {
                        format!("episode {e} decision {}: success {} but rewards {:?}", d.decision, d.success, [
                            d.reward_lb,
                            d.reward_rt,
                            d.reward_weighted
                        ])
                    });
                    if d.success {
                        t.check((-1.0..=1.0).contains(&d.reward_weighted), || {
                            format!("episode {e} decision {}: weighted reward {}", d.decision, d.reward_weighted)
                        });
                    }
                }
            }
            Err(err) => t.check(false, || err.to_string()),
        }
    }
    t.finish()
}

/// Tabular Q-Learning on a deterministic two-state MDP against the value
/// iteration fixed point.
pub fn check_qlearning_toy(seed: u64) -> SuiteResult {
    let mut t = Tally::new("qlearning_toy");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2a);
    // next[s][a], reward[s][a]
    let next = [[0usize, 1], [0, 1]];
    let reward = [[0.0, 1.0], [2.0, -1.0]];
    let gamma = 0.9;
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..10_000 {
        let mut nq = q;
        for s in 0..2 {
            for a in 0..2 {
                let ns = next[s][a];
                nq[s][a] = reward[s][a] + gamma * q[ns][0].max(q[ns][1]);
            }
        }
        q = nq;
    }
    for alpha in [0.1, 0.5, 1.0] {
        let mut table = QTable::new(2, alpha, gamma);
        for _ in 0..10_000 {
            let s = rng.gen_range(0..2usize);
            let a = rng.gen_range(0..2usize);
            if let Err(e) = table.qlearning_step(&[s as u8], a, reward[s][a], Some(&[next[s][a] as u8])) {
                t.check(false, || e.to_string());
            }
        }
        for s in 0..2 {
            for a in 0..2 {
                let err = (table.get(&[s as u8], a) - q[s][a]).abs();
                t.error(err, 1e-3, || format!("alpha {alpha}: Q({s},{a}) off by {err:e}"));
            }
        }
    }
    t.finish()
}
