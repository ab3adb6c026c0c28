use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    population_variance, processing_time_ms, transfer_time_ms, AppId, CostWeights, NetworkModel, PlacementSet,
    ServerId, ServerSpec, ServerState, TaskId, TaskSpec,
};
use crate::sim::{Decision, Scheduler, SimEnv};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nsga2Config {
    pub population: usize,
    pub generations: usize,
    pub crossover: f64,
    /// Per-gene mutation probability; `None` means `1 / genome length`.
    pub mutation: Option<f64>,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self { population: 200, generations: 100, crossover: 0.9, mutation: None }
    }
}

impl Nsga2Config {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidHyper("population must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::InvalidHyper("crossover must be in [0, 1]".into()));
        }
        if let Some(m) = self.mutation {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::InvalidHyper("mutation must be in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// `a` is no worse in both objectives and strictly better in one.
pub fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Pareto fronts by index, best first (minimization).
pub fn fast_nondominated_sort(points: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    let mut fronts = vec![Vec::new()];
    for p in 0..n {
        for q in 0..n {
            if dominates(&points[p], &points[q]) {
                dominated_by[p].push(q);
            } else if dominates(&points[q], &points[p]) {
                count[p] += 1;
            }
        }
        if count[p] == 0 {
            fronts[0].push(p);
        }
    }
    let mut i = 0;
    while !fronts[i].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[i] {
            for &q in &dominated_by[p] {
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(next);
        i += 1;
    }
    fronts.pop();
    fronts
}

/// Crowding distance of each point of one front; boundary points are
/// infinite.
pub fn crowding_distance(front: &[[f64; 2]]) -> Vec<f64> {
    let n = front.len();
    let mut d = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| front[a][m].total_cmp(&front[b][m]).then(a.cmp(&b)));
        let lo = front[order[0]][m];
        let hi = front[order[n - 1]][m];
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..n - 1 {
                d[order[k]] += (front[order[k + 1]][m] - front[order[k - 1]][m]) / (hi - lo);
            }
        }
    }
    d
}

/// A batch of pending tasks of one application plus a snapshot of the
/// fleet it will run on.
#[derive(Debug, Clone)]
pub struct BatchProblem {
    /// Topological order.
    pub tasks: Vec<TaskSpec>,
    pub fleet: Vec<ServerSpec>,
    pub net: NetworkModel,
    pub states: Vec<ServerState>,
    pub weights: CostWeights,
    pub now_ms: f64,
    /// Already placed predecessors: server and completion time.
    pub external: HashMap<TaskId, (ServerId, f64)>,
}

/// Objectives of one genome plus its capacity violations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    pub lb: f64,
    pub rt: f64,
    pub violations: usize,
}

const LB_PENALTY: f64 = 1.0;
const RT_PENALTY_MS: f64 = 1e5;

impl Fitness {
    pub fn objectives(&self) -> [f64; 2] {
        let v = self.violations as f64;
        [self.lb + v * LB_PENALTY, self.rt + v * RT_PENALTY_MS]
    }
}

impl BatchProblem {
    pub fn from_env(env: &SimEnv, app: AppId) -> Result<Self> {
        let ids = env.unplaced_tasks(app);
        if ids.is_empty() {
            return Err(Error::InvalidTask(format!("app {app} has no pending tasks")));
        }
        let tasks: Vec<TaskSpec> = ids.iter().map(|id| env.task(*id).cloned()).collect::<Result<_>>()?;
        let mut external = HashMap::new();
        for t in &tasks {
            for p in &t.predecessors {
                if let Some(s) = env.placement().server_of(*p) {
                    let finish = env.timeline().get(p).map_or(env.now_ms(), |w| w.finish_ms);
                    external.insert(*p, (s, finish));
                }
            }
        }
        Ok(Self {
            tasks,
            fleet: env.fleet().to_vec(),
            net: env.net().clone(),
            states: env.states().to_vec(),
            weights: *env.weights(),
            now_ms: env.now_ms(),
            external,
        })
    }

    /// Plays the genome forward in time: each task starts when its parents
    /// finish, holds its demand until it completes, and contributes the
    /// load-balance cost right after it lands and its response time.
    pub fn evaluate(&self, genome: &[ServerId]) -> Fitness {
        let n = self.tasks.len();
        let mut start = vec![0.0; n];
        let mut finish = vec![0.0; n];
        let mut index: HashMap<TaskId, usize> = HashMap::with_capacity(n);
        let (mut lb_sum, mut rt_sum, mut violations) = (0.0, 0.0, 0);
        for (i, t) in self.tasks.iter().enumerate() {
            let k = genome[i];
            let mut begin = self.now_ms;
            let mut ready = 0.0f64;
            for (p, packet) in t.inbound() {
                let (src, done) = match index.get(&p) {
                    Some(&j) => (genome[j], finish[j]),
                    None => self.external.get(&p).copied().unwrap_or((k, self.now_ms)),
                };
                begin = begin.max(done);
                ready = ready.max(transfer_time_ms(src, k, packet, &self.net).unwrap_or(0.0));
            }
            let proc = processing_time_ms(t.size_mcycles, self.fleet[k].cpu_freq_mhz).unwrap_or(0.0);
            let rt = ready + proc;
            start[i] = begin;
            finish[i] = begin + rt;
            index.insert(t.id, i);

            let (cpu, ram) = self.usage_at(begin, genome, &start[..i], &finish[..i]);
            let spec = &self.fleet[k];
            if spec.cpu_cores as f64 - cpu[k] < t.cpu_demand || spec.ram_size_gb - ram[k] < t.ram_demand_gb {
                violations += 1;
            }
            let mut cpu_u = Vec::with_capacity(self.fleet.len());
            let mut ram_u = Vec::with_capacity(self.fleet.len());
            for (j, s) in self.fleet.iter().enumerate() {
                let (mut c, mut r) = (cpu[j], ram[j]);
                if j == k {
                    c += t.cpu_demand;
                    r += t.ram_demand_gb;
                }
                cpu_u.push((c / s.cpu_cores as f64).min(1.0));
                ram_u.push((r / s.ram_size_gb).min(1.0));
            }
            lb_sum += self.weights.a1 * population_variance(&cpu_u) + self.weights.a2 * population_variance(&ram_u);
            rt_sum += rt;
        }
        Fitness { lb: lb_sum / n as f64, rt: rt_sum / n as f64, violations }
    }

    /// Cores and GB in use per server at `t` from residents and earlier
    /// batch tasks.
    fn usage_at(&self, t: f64, genome: &[ServerId], start: &[f64], finish: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut cpu = vec![0.0; self.fleet.len()];
        let mut ram = vec![0.0; self.fleet.len()];
        for (k, st) in self.states.iter().enumerate() {
            for r in &st.resident_tasks {
                if r.release_ms > t {
                    cpu[k] += r.cpu_cores;
                    ram[k] += r.ram_gb;
                }
            }
        }
        for j in 0..start.len() {
            if start[j] <= t && t < finish[j] {
                cpu[genome[j]] += self.tasks[j].cpu_demand;
                ram[genome[j]] += self.tasks[j].ram_demand_gb;
            }
        }
        (cpu, ram)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<ServerId>,
    pub fitness: Fitness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveResult {
    pub placement: PlacementSet,
    pub best: Individual,
    pub best_score: f64,
    /// Best scalarized front-0 cost after each generation (index 0 is the
    /// initial population).
    pub history: Vec<f64>,
    /// Every genome of the final population satisfies C1 (one valid server
    /// per task).
    pub final_population: Vec<Individual>,
}

/// Min-max ranges frozen from the initial population's feasible members,
/// so scores are comparable across generations.
#[derive(Debug, Clone, Copy)]
struct Scalarizer {
    lo: [f64; 2],
    hi: [f64; 2],
    w: [f64; 2],
}

impl Scalarizer {
    fn new(pop: &[Individual], weights: &CostWeights) -> Self {
        let feasible: Vec<&Individual> = pop.iter().filter(|i| i.fitness.violations == 0).collect();
        let pool: Vec<[f64; 2]> = if feasible.is_empty() {
            pop.iter().map(|i| i.fitness.objectives()).collect()
        } else {
            feasible.iter().map(|i| i.fitness.objectives()).collect()
        };
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &pool {
            for m in 0..2 {
                lo[m] = lo[m].min(p[m]);
                hi[m] = hi[m].max(p[m]);
            }
        }
        Self { lo, hi, w: [weights.w1, weights.w2] }
    }

    fn score(&self, f: &Fitness) -> f64 {
        let o = f.objectives();
        (0..2)
            .map(|m| {
                let span = self.hi[m] - self.lo[m];
                let n = if span > 0.0 { (o[m] - self.lo[m]) / span } else { 0.0 };
                self.w[m] * n
            })
            .sum()
    }
}

fn rank_and_crowding(pop: &[Individual]) -> (Vec<usize>, Vec<f64>, Vec<Vec<usize>>) {
    let pts: Vec<[f64; 2]> = pop.iter().map(|i| i.fitness.objectives()).collect();
    let fronts = fast_nondominated_sort(&pts);
    let mut rank = vec![0; pop.len()];
    let mut crowd = vec![0.0; pop.len()];
    for (r, f) in fronts.iter().enumerate() {
        let fp: Vec<[f64; 2]> = f.iter().map(|&i| pts[i]).collect();
        for (&i, d) in f.iter().zip(crowding_distance(&fp)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (rank, crowd, fronts)
}

fn better(a: usize, b: usize, rank: &[usize], crowd: &[f64]) -> bool {
    rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] > crowd[b])
}

fn evaluate_all(problem: &BatchProblem, genomes: Vec<Vec<ServerId>>) -> Vec<Individual> {
    par::map(&genomes, |g| problem.evaluate(g))
        .into_iter()
        .zip(genomes)
        .map(|(fitness, genome)| Individual { genome, fitness })
        .collect()
}

fn best_of_front(pop: &[Individual], front0: &[usize], s: &Scalarizer) -> (usize, f64) {
    let mut best = (front0[0], s.score(&pop[front0[0]].fitness));
    for &i in &front0[1..] {
        let sc = s.score(&pop[i].fitness);
        if sc < best.1 || (sc == best.1 && pop[i].genome < pop[best.0].genome) {
            best = (i, sc);
        }
    }
    best
}

/// Evolves server assignments for the batch and returns the front-0
/// individual with the lowest weighted normalized cost.
pub fn nsga2_evolve(problem: &BatchProblem, cfg: &Nsga2Config, seed: u64) -> Result<EvolveResult> {
    cfg.validate()?;
    let len = problem.tasks.len();
    if len == 0 {
        return Err(Error::InvalidTask("empty batch".into()));
    }
    let n_servers = problem.fleet.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pm = cfg.mutation.unwrap_or(1.0 / len as f64);
    let n = cfg.population;

    let init: Vec<Vec<ServerId>> = (0..n).map(|_| (0..len).map(|_| rng.gen_range(0..n_servers)).collect()).collect();
    let mut pop = evaluate_all(problem, init);
    let scal = Scalarizer::new(&pop, &problem.weights);
    let (mut rank, mut crowd, fronts) = rank_and_crowding(&pop);
    let (bi, bs) = best_of_front(&pop, &fronts[0], &scal);
    let mut best = (pop[bi].clone(), bs);
    let mut history = vec![bs];

    for _ in 0..cfg.generations {
        let mut children = Vec::with_capacity(n);
        while children.len() < n {
            let mut pick = || {
                let a = rng.gen_range(0..pop.len());
                let b = rng.gen_range(0..pop.len());
                if better(b, a, &rank, &crowd) {
                    b
                } else {
                    a
                }
            };
            let (p1, p2) = (pick(), pick());
            let (mut c1, mut c2) = (pop[p1].genome.clone(), pop[p2].genome.clone());
            if rng.gen::<f64>() < cfg.crossover {
                for g in 0..len {
                    if rng.gen::<bool>() {
                        std::mem::swap(&mut c1[g], &mut c2[g]);
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for gene in c.iter_mut() {
                    if rng.gen::<f64>() < pm {
                        *gene = rng.gen_range(0..n_servers);
                    }
                }
            }
            children.push(c1);
            if children.len() < n {
                children.push(c2);
            }
        }
        let mut combined = pop;
        combined.extend(evaluate_all(problem, children));

        let (r, c, fronts) = rank_and_crowding(&combined);
        let mut keep = Vec::with_capacity(n);
        for f in &fronts {
            if keep.len() + f.len() <= n {
                keep.extend_from_slice(f);
            } else {
                let mut last = f.clone();
                last.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
                keep.extend_from_slice(&last[..n - keep.len()]);
                break;
            }
        }
        let (bi, bs) = best_of_front(&combined, &fronts[0], &scal);
        if bs < best.1 {
            best = (combined[bi].clone(), bs);
        }
        history.push(best.1);
        let _ = (r, c);
        pop = keep.into_iter().map(|i| combined[i].clone()).collect();
        let rc = rank_and_crowding(&pop);
        rank = rc.0;
        crowd = rc.1;
    }

    let placement = problem.tasks.iter().zip(&best.0.genome).map(|(t, s)| (t.id, *s)).collect();
    Ok(EvolveResult { placement, best_score: best.1, best: best.0, history, final_population: pop })
}

/// Plans each application once, when its first task needs a decision.
pub struct Nsga2Scheduler {
    pub cfg: Nsga2Config,
    seed: u64,
    plans: HashMap<AppId, PlacementSet>,
    evolutions: u64,
}

impl Nsga2Scheduler {
    pub fn new(cfg: Nsga2Config, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, seed, plans: HashMap::new(), evolutions: 0 })
    }

    /// Number of evolve calls so far (one per planned application).
    pub fn evolutions(&self) -> u64 {
        self.evolutions
    }
}

impl Scheduler for Nsga2Scheduler {
    fn name(&self) -> &str {
        "nsga2"
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<ServerId> {
        let app = d.task.app_id;
        if let Some(s) = self.plans.get(&app).and_then(|p| p.server_of(d.task.id)) {
            return Ok(s);
        }
        let problem = BatchProblem::from_env(d.env, app)?;
        let seed = self.seed ^ self.evolutions.wrapping_mul(0x2545_f491_4f6c_dd1d);
        let result = nsga2_evolve(&problem, &self.cfg, seed)?;
        self.evolutions += 1;
        let s = result.placement.server_of(d.task.id).ok_or(Error::Unplaced(d.task.id))?;
        self.plans.insert(app, result.placement);
        Ok(s)
    }
}

/// Sorting helper for tests and callers that need a total order on points.
pub fn lexicographic(a: &[f64; 2], b: &[f64; 2]) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_front(points: &[[f64; 2]]) -> Vec<usize> {
        (0..points.len()).filter(|&i| !points.iter().any(|q| dominates(q, &points[i]))).collect()
    }

    #[test]
    fn identical_points_form_one_front() {
        let pts = vec![[1.0, 1.0]; 5];
        assert_eq!(fast_nondominated_sort(&pts), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn decreasing_curve_is_one_front() {
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 10.0 - i as f64]).collect();
        assert_eq!(fast_nondominated_sort(&pts).len(), 1);
    }

    #[test]
    fn front0_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pts: Vec<[f64; 2]> = (0..200).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
            let mut f0 = fast_nondominated_sort(&pts)[0].clone();
            f0.sort_unstable();
            assert_eq!(f0, brute_front(&pts));
        }
    }

    #[test]
    fn crowding_examples() {
        assert!(crowding_distance(&[[0.0, 1.0], [1.0, 0.0]]).iter().all(|d| d.is_infinite()));
        let d = crowding_distance(&[[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]]);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!((d[1] - 2.0).abs() < 1e-12);
        let d2 = crowding_distance(&[[2.0, 0.0], [0.0, 2.0], [1.0, 1.0]]);
        assert!((d2[2] - 2.0).abs() < 1e-12);
    }

    fn problem(n_tasks: usize, fleet: Vec<ServerSpec>) -> BatchProblem {
        let n = fleet.len();
        BatchProblem {
            tasks: (0..n_tasks).map(|i| TaskSpec::root(i, 0, 1000.0).with_demand(1.0, 1.0)).collect(),
            net: NetworkModel::uniform(n, 10.0, 5.0).unwrap(),
            states: vec![ServerState::default(); n],
            fleet,
            weights: CostWeights::default(),
            now_ms: 0.0,
            external: HashMap::new(),
        }
    }

    #[test]
    fn single_feasible_server_is_chosen() {
        let fleet = vec![ServerSpec::new(0, 2, 1000.0, 0.5), ServerSpec::new(1, 2, 1000.0, 4.0)];
        let cfg = Nsga2Config { population: 20, generations: 10, ..Default::default() };
        let r = nsga2_evolve(&problem(1, fleet), &cfg, 1).unwrap();
        assert_eq!(r.placement.server_of(0), Some(1));
    }

    #[test]
    fn beats_random_placement_on_load_balance() {
        let fleet = vec![ServerSpec::new(0, 4, 1000.0, 8.0), ServerSpec::new(1, 4, 1000.0, 8.0)];
        let p = problem(4, fleet);
        let cfg = Nsga2Config { population: 40, generations: 30, ..Default::default() };
        let r = nsga2_evolve(&p, &cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mean: f64 = (0..100)
            .map(|_| {
                let g: Vec<usize> = (0..4).map(|_| rng.gen_range(0..2)).collect();
                p.evaluate(&g).lb
            })
            .sum::<f64>()
            / 100.0;
        assert!(r.best.fitness.lb <= mean);
    }

    #[test]
    fn deterministic_and_monotone() {
        let fleet: Vec<_> = (0..3).map(|k| ServerSpec::new(k, 2, 1000.0 * (k + 1) as f64, 4.0)).collect();
        let p = problem(5, fleet);
        let cfg = Nsga2Config { population: 30, generations: 20, ..Default::default() };
        let a = nsga2_evolve(&p, &cfg, 9).unwrap();
        let b = nsga2_evolve(&p, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.final_population.iter().all(|i| i.genome.len() == 5 && i.genome.iter().all(|s| *s < 3)));
    }
}
