use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{critical_path, AppDag, AppId, PathCostEstimator, TaskId, TaskSpec};
use crate::{Error, Result};

/// Inclusive real range sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

/// Inclusive integer range sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSpan {
    pub lo: usize,
    pub hi: usize,
}

impl CountSpan {
    pub const fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        rng.gen_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrivalProcess {
    /// Fixed spacing; `None` uses the mean critical-path estimate of the profile.
    Fixed { interval_ms: Option<f64> },
    /// Exponential inter-arrival times.
    Poisson { rate_per_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadProfile {
    pub apps_per_episode: usize,
    pub tasks_per_app: CountSpan,
    pub dag_width: CountSpan,
    pub size_mcycles: Span,
    pub ram_demand_gb: Span,
    pub cpu_demand: Span,
    pub packet_mb: Span,
    pub arrival: ArrivalProcess,
    /// Multiplier on every sampled task size (evaluation-time workload shift).
    pub size_scale: f64,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        Self {
            apps_per_episode: 16,
            tasks_per_app: CountSpan::new(2, 6),
            dag_width: CountSpan::new(1, 3),
            size_mcycles: Span::new(300.0, 3000.0),
            ram_demand_gb: Span::new(0.05, 0.6),
            cpu_demand: Span::new(0.25, 1.0),
            packet_mb: Span::new(0.5, 5.0),
            arrival: ArrivalProcess::Fixed { interval_ms: None },
            size_scale: 1.0,
        }
    }
}

impl WorkloadProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config { path: format!("workload.{what}"), msg: "invalid range".into() });
        let pos = |s: &Span| s.lo > 0.0 && s.hi >= s.lo && s.hi.is_finite();
        if self.tasks_per_app.lo == 0 || self.tasks_per_app.hi < self.tasks_per_app.lo {
            return bad("tasks_per_app");
        }
        if self.dag_width.lo == 0 || self.dag_width.hi < self.dag_width.lo {
            return bad("dag_width");
        }
        if !pos(&self.size_mcycles) {
            return bad("size_mcycles");
        }
        if !(self.ram_demand_gb.lo >= 0.0 && self.ram_demand_gb.hi >= self.ram_demand_gb.lo) {
            return bad("ram_demand_gb");
        }
        if !pos(&self.cpu_demand) {
            return bad("cpu_demand");
        }
        if !pos(&self.packet_mb) {
            return bad("packet_mb");
        }
        if !(self.size_scale > 0.0) {
            return bad("size_scale");
        }
        match self.arrival {
            ArrivalProcess::Fixed { interval_ms: Some(i) } if !(i > 0.0) => bad("arrival.interval_ms"),
            ArrivalProcess::Poisson { rate_per_s } if !(rate_per_s > 0.0) => bad("arrival.rate_per_s"),
            _ => Ok(()),
        }
    }

    /// Task-size range after scaling, used for response-time buckets.
    pub fn scaled_size_range(&self) -> (f64, f64) {
        (self.size_mcycles.lo * self.size_scale, self.size_mcycles.hi * self.size_scale)
    }
}

/// An application together with its arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct AppArrival {
    pub at_ms: f64,
    pub dag: AppDag,
}

const ARRIVAL_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const CALIBRATION_STREAM: u64 = 0xc2b2_ae3d_27d4_eb4f;
const CALIBRATION_SAMPLES: usize = 64;

/// Infinite, seed-deterministic stream of layered DAG applications.
pub struct WorkloadStream {
    profile: WorkloadProfile,
    estimator: Box<dyn PathCostEstimator>,
    dag_rng: ChaCha8Rng,
    arrival_rng: ChaCha8Rng,
    interval_ms: f64,
    next_app: AppId,
    next_task: TaskId,
    clock_ms: f64,
}

impl WorkloadStream {
    pub fn new(profile: WorkloadProfile, seed: u64, estimator: Box<dyn PathCostEstimator>) -> Result<Self> {
        profile.validate()?;
        let interval_ms = match profile.arrival {
            ArrivalProcess::Fixed { interval_ms: Some(i) } => i,
            ArrivalProcess::Fixed { interval_ms: None } => {
                mean_critical_path_ms(&profile, seed ^ CALIBRATION_STREAM, estimator.as_ref())?
            }
            ArrivalProcess::Poisson { rate_per_s } => 1000.0 / rate_per_s,
        };
        Ok(Self {
            profile,
            estimator,
            dag_rng: ChaCha8Rng::seed_from_u64(seed),
            arrival_rng: ChaCha8Rng::seed_from_u64(seed ^ ARRIVAL_STREAM),
            interval_ms,
            next_app: 0,
            next_task: 0,
            clock_ms: 0.0,
        })
    }

    pub fn profile(&self) -> &WorkloadProfile {
        &self.profile
    }

    /// Mean spacing between arrivals.
    pub fn interval_ms(&self) -> f64 {
        self.interval_ms
    }

    fn next_gap(&mut self) -> f64 {
        match self.profile.arrival {
            ArrivalProcess::Fixed { .. } => self.interval_ms,
            ArrivalProcess::Poisson { .. } => {
                let u: f64 = self.arrival_rng.gen_range(f64::EPSILON..1.0);
                -u.ln() * self.interval_ms
            }
        }
    }
}

impl Iterator for WorkloadStream {
    type Item = AppArrival;

    fn next(&mut self) -> Option<AppArrival> {
        let app_id = self.next_app;
        let tasks = sample_app_tasks(&self.profile, app_id, self.next_task, &mut self.dag_rng);
        self.next_app += 1;
        self.next_task += tasks.len();
        let dag = AppDag::new(app_id, tasks, self.estimator.as_ref()).expect("layered generator builds DAGs");
        let at_ms = self.clock_ms;
        self.clock_ms += self.next_gap();
        Some(AppArrival { at_ms, dag })
    }
}

/// Convenience wrapper: the first `count` applications of the stream.
pub fn generate_workload(
    profile: &WorkloadProfile,
    seed: u64,
    count: usize,
    estimator: Box<dyn PathCostEstimator>,
) -> Result<Vec<AppArrival>> {
    Ok(WorkloadStream::new(profile.clone(), seed, estimator)?.take(count).collect())
}

/// Layered construction: random layer widths, every non-root task takes one
/// or two parents from the previous layer, so edges only point forward.
fn sample_app_tasks<R: Rng>(profile: &WorkloadProfile, app_id: AppId, first_id: TaskId, rng: &mut R) -> Vec<TaskSpec> {
    let n = profile.tasks_per_app.sample(rng);
    let mut layers: Vec<Vec<TaskId>> = Vec::new();
    let mut tasks = Vec::with_capacity(n);
    let mut id = first_id;
    let mut remaining = n;
    while remaining > 0 {
        let width = profile.dag_width.sample(rng).min(remaining);
        let mut layer = Vec::with_capacity(width);
        for _ in 0..width {
            let mut t = TaskSpec::root(id, app_id, profile.size_mcycles.sample(rng) * profile.size_scale);
            t.ram_demand_gb = profile.ram_demand_gb.sample(rng);
            t.cpu_demand = profile.cpu_demand.sample(rng);
            if let Some(prev) = layers.last() {
                let k = rng.gen_range(1..=prev.len().min(2));
                let mut picks: Vec<usize> = sample(rng, prev.len(), k).into_vec();
                picks.sort_unstable();
                for p in picks {
                    t = t.with_parent(prev[p], profile.packet_mb.sample(rng));
                }
            }
            layer.push(id);
            tasks.push(t);
            id += 1;
        }
        remaining -= width;
        layers.push(layer);
    }
    tasks
}

/// Mean critical-path cost of a sample of applications, from an independent
/// random stream.
fn mean_critical_path_ms(profile: &WorkloadProfile, seed: u64, estimator: &dyn PathCostEstimator) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for i in 0..CALIBRATION_SAMPLES {
        let tasks = sample_app_tasks(profile, i, 0, &mut rng);
        let dag = AppDag::unflagged(i, tasks)?;
        let cp = critical_path(&dag, estimator)?;
        let mut cost = 0.0;
        for (k, id) in cp.iter().enumerate() {
            let t = dag.task(*id).expect("path ids belong to dag");
            cost += estimator.node_cost(t);
            if k > 0 {
                let packet = t.inbound().find(|(p, _)| *p == cp[k - 1]).map_or(0.0, |(_, mb)| mb);
                cost += estimator.edge_cost(packet);
            }
        }
        total += cost;
    }
    Ok(total / CALIBRATION_SAMPLES as f64)
}
