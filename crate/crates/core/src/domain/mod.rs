//! Static domain types and the three cost models.

mod constraints;
mod cost;
mod critical_path;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use constraints::{check_constraints, ConstraintInput, TaskWindow, Violation};
pub use cost::{
    app_response_time_ms, load_balance_cost, population_variance, processing_time_ms,
    task_ready_time_ms, task_response_time_ms, transfer_time_ms, weighted_cost, RunningRange,
};
pub use critical_path::{critical_path, MeanFleetEstimator, PathCostEstimator};
pub(crate) use cost::ready_time_on;

pub type ServerId = usize;
pub type TaskId = usize;
pub type AppId = usize;

/// Static capacity of one fleet node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub id: ServerId,
    pub cpu_cores: u32,
    /// Mean frequency across cores.
    pub cpu_freq_mhz: f64,
    pub ram_size_gb: f64,
}

impl ServerSpec {
    pub fn new(id: ServerId, cpu_cores: u32, cpu_freq_mhz: f64, ram_size_gb: f64) -> Self {
        Self { id, cpu_cores, cpu_freq_mhz, ram_size_gb }
    }
}

/// Checks ids are contiguous from 0 and capacities positive.
pub fn validate_fleet(fleet: &[ServerSpec]) -> Result<()> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    for (k, s) in fleet.iter().enumerate() {
        if s.id != k {
            return Err(Error::UnknownServer(s.id));
        }
        if !(s.cpu_freq_mhz > 0.0 && s.ram_size_gb > 0.0) || s.cpu_cores == 0 {
            return Err(Error::InvalidSizeOrFrequency);
        }
    }
    Ok(())
}

/// A task currently holding resources on a server.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidentTask {
    pub task: TaskId,
    /// Cores held.
    pub cpu_cores: f64,
    /// GB held.
    pub ram_gb: f64,
    pub release_ms: f64,
}

/// Dynamic utilization of one server.
///
/// Utilizations are always recomputed from the resident list, so they equal
/// the resident sum divided by capacity by construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ServerState {
    pub cpu_utilization: f64,
    pub ram_utilization: f64,
    pub resident_tasks: Vec<ResidentTask>,
}

impl ServerState {
    pub fn resident_cpu(&self) -> f64 {
        self.resident_tasks.iter().map(|r| r.cpu_cores).sum()
    }

    pub fn resident_ram(&self) -> f64 {
        self.resident_tasks.iter().map(|r| r.ram_gb).sum()
    }

    pub fn free_cores(&self, spec: &ServerSpec) -> f64 {
        spec.cpu_cores as f64 - self.resident_cpu()
    }

    pub fn free_ram_gb(&self, spec: &ServerSpec) -> f64 {
        spec.ram_size_gb - self.resident_ram()
    }

    pub(crate) fn refresh(&mut self, spec: &ServerSpec) {
        self.cpu_utilization = (self.resident_cpu() / spec.cpu_cores as f64).clamp(0.0, 1.0);
        self.ram_utilization = (self.resident_ram() / spec.ram_size_gb).clamp(0.0, 1.0);
    }

    pub(crate) fn admit(&mut self, spec: &ServerSpec, resident: ResidentTask) {
        self.resident_tasks.push(resident);
        self.refresh(spec);
    }

    pub(crate) fn release(&mut self, spec: &ServerSpec, task: TaskId) -> Option<ResidentTask> {
        let pos = self.resident_tasks.iter().position(|r| r.task == task)?;
        let r = self.resident_tasks.remove(pos);
        self.refresh(spec);
        Some(r)
    }
}

/// Pairwise link characteristics, bandwidth in MB/s and propagation in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub bandwidth_mbps: Vec<Vec<f64>>,
    pub propagation_ms: Vec<Vec<f64>>,
}

impl NetworkModel {
    pub fn new(bandwidth_mbps: Vec<Vec<f64>>, propagation_ms: Vec<Vec<f64>>) -> Result<Self> {
        let net = Self { bandwidth_mbps, propagation_ms };
        net.validate()?;
        Ok(net)
    }

    /// Uniform network: every off-diagonal link has the same characteristics.
    pub fn uniform(n: usize, bandwidth_mbps: f64, propagation_ms: f64) -> Result<Self> {
        Self::from_fn(n, |_, _| (bandwidth_mbps, propagation_ms))
    }

    /// Builds a network from a per-pair `(bandwidth, propagation)` function;
    /// the diagonal is forced to `(0, 0)`.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Result<Self> {
        let mut bw = vec![vec![0.0; n]; n];
        let mut prop = vec![vec![0.0; n]; n];
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    let (b, p) = f(j, k);
                    bw[j][k] = b;
                    prop[j][k] = p;
                }
            }
        }
        Self::new(bw, prop)
    }

    pub fn len(&self) -> usize {
        self.bandwidth_mbps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bandwidth_mbps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.bandwidth_mbps.len();
        if self.propagation_ms.len() != n
            || self.bandwidth_mbps.iter().any(|r| r.len() != n)
            || self.propagation_ms.iter().any(|r| r.len() != n)
        {
            return Err(Error::InvalidNetwork("matrices must be square and equally sized".into()));
        }
        for j in 0..n {
            if self.bandwidth_mbps[j][j] != 0.0 || self.propagation_ms[j][j] != 0.0 {
                return Err(Error::InvalidNetwork(format!("diagonal entry {j} must be 0")));
            }
            for k in 0..n {
                if j == k {
                    continue;
                }
                if !(self.bandwidth_mbps[j][k] > 0.0) {
                    return Err(Error::InvalidNetwork(format!("bandwidth[{j}][{k}] must be > 0")));
                }
                if !(self.propagation_ms[j][k] >= 0.0) {
                    return Err(Error::InvalidNetwork(format!("propagation[{j}][{k}] must be >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Mean propagation from `k` to every other server.
    pub fn mean_propagation_from(&self, k: ServerId) -> f64 {
        mean_off_diagonal_row(&self.propagation_ms, k)
    }

    /// Mean bandwidth from `k` to every other server.
    pub fn mean_bandwidth_from(&self, k: ServerId) -> f64 {
        mean_off_diagonal_row(&self.bandwidth_mbps, k)
    }

    pub fn mean_bandwidth(&self) -> f64 {
        mean_off_diagonal(&self.bandwidth_mbps)
    }

    pub fn mean_propagation(&self) -> f64 {
        mean_off_diagonal(&self.propagation_ms)
    }
}

fn mean_off_diagonal_row(m: &[Vec<f64>], k: usize) -> f64 {
    let n = m.len();
    if n < 2 {
        return 0.0;
    }
    m[k].iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| v).sum::<f64>() / (n - 1) as f64
}

fn mean_off_diagonal(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n < 2 {
        return 0.0;
    }
    (0..n).map(|k| mean_off_diagonal_row(m, k)).sum::<f64>() / n as f64
}

/// One task of an application.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub app_id: AppId,
    pub size_mcycles: f64,
    pub ram_demand_gb: f64,
    /// Fraction of one core.
    pub cpu_demand: f64,
    pub predecessors: Vec<TaskId>,
    /// Inbound packet size per predecessor edge, parallel to `predecessors`.
    pub packet_mb: Vec<f64>,
}

impl TaskSpec {
    pub fn root(id: TaskId, app_id: AppId, size_mcycles: f64) -> Self {
        Self {
            id,
            app_id,
            size_mcycles,
            ram_demand_gb: 0.0,
            cpu_demand: 0.0,
            predecessors: Vec::new(),
            packet_mb: Vec::new(),
        }
    }

    pub fn with_parent(mut self, parent: TaskId, packet_mb: f64) -> Self {
        self.predecessors.push(parent);
        self.packet_mb.push(packet_mb);
        self
    }

    pub fn with_demand(mut self, cpu_demand: f64, ram_demand_gb: f64) -> Self {
        self.cpu_demand = cpu_demand;
        self.ram_demand_gb = ram_demand_gb;
        self
    }

    pub fn inbound(&self) -> impl Iterator<Item = (TaskId, f64)> + '_ {
        self.predecessors.iter().copied().zip(self.packet_mb.iter().copied())
    }
}

/// An application DAG with its critical-path flags.
#[derive(Debug, Clone, PartialEq)]
pub struct AppDag {
    pub app_id: AppId,
    /// Stored in a topological order.
    pub tasks: Vec<TaskSpec>,
    pub critical_flags: Vec<bool>,
    index: HashMap<TaskId, usize>,
}

impl AppDag {
    /// Validates the graph, reorders tasks topologically (stable by id) and
    /// marks the critical path under `estimator`.
    pub fn new(app_id: AppId, tasks: Vec<TaskSpec>, estimator: &dyn PathCostEstimator) -> Result<Self> {
        let mut dag = Self::unflagged(app_id, tasks)?;
        let cp = critical_path(&dag, estimator)?;
        dag.critical_flags = dag.tasks.iter().map(|t| cp.contains(&t.id)).collect();
        Ok(dag)
    }

    /// Builds the DAG without computing critical flags (all false).
    pub fn unflagged(app_id: AppId, tasks: Vec<TaskSpec>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            if t.app_id != app_id {
                return Err(Error::InvalidTask(format!("task {} belongs to app {}", t.id, t.app_id)));
            }
            if !(t.size_mcycles > 0.0) {
                return Err(Error::InvalidTask(format!("task {} size must be > 0", t.id)));
            }
            if !(t.ram_demand_gb >= 0.0) || !(t.cpu_demand >= 0.0) {
                return Err(Error::InvalidTask(format!("task {} demands must be >= 0", t.id)));
            }
            if t.packet_mb.len() != t.predecessors.len() {
                return Err(Error::InvalidTask(format!("task {} packet list length", t.id)));
            }
            if index.insert(t.id, i).is_some() {
                return Err(Error::InvalidTask(format!("duplicate task id {}", t.id)));
            }
        }
        for t in &tasks {
            if let Some(p) = t.predecessors.iter().find(|p| !index.contains_key(p)) {
                return Err(Error::InvalidTask(format!("task {} references foreign task {p}", t.id)));
            }
        }
        let order = topological_order(&tasks, &index)?;
        let tasks: Vec<TaskSpec> = order.into_iter().map(|i| tasks[i].clone()).collect();
        let index = tasks.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
        let critical_flags = vec![false; tasks.len()];
        Ok(Self { app_id, tasks, critical_flags, index })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn position(&self, id: TaskId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskSpec> {
        self.position(id).map(|i| &self.tasks[i])
    }

    pub fn is_critical(&self, id: TaskId) -> bool {
        self.position(id).map(|i| self.critical_flags[i]).unwrap_or(false)
    }

    /// Direct successors of `id`, in topological order.
    pub fn successors(&self, id: TaskId) -> Vec<TaskId> {
        self.tasks.iter().filter(|t| t.predecessors.contains(&id)).map(|t| t.id).collect()
    }

    pub fn critical_tasks(&self) -> Vec<TaskId> {
        self.tasks.iter().zip(&self.critical_flags).filter(|(_, c)| **c).map(|(t, _)| t.id).collect()
    }

    /// Returns a copy with every task size multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.tasks {
            t.size_mcycles *= factor;
        }
        out
    }
}

/// Kahn's algorithm; ready tasks are taken smallest id first.
fn topological_order(tasks: &[TaskSpec], index: &HashMap<TaskId, usize>) -> Result<Vec<usize>> {
    let n = tasks.len();
    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, t) in tasks.iter().enumerate() {
        for p in &t.predecessors {
            let pi = index[p];
            children[pi].push(i);
            indegree[i] += 1;
        }
    }
    let mut ready: std::collections::BTreeSet<(TaskId, usize)> = tasks
        .iter()
        .enumerate()
        .filter(|(i, _)| indegree[*i] == 0)
        .map(|(i, t)| (t.id, i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&first) = ready.iter().next() {
        ready.remove(&first);
        let (_, i) = first;
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert((tasks[c].id, c));
            }
        }
    }
    if order.len() != n {
        return Err(Error::NotADag);
    }
    Ok(order)
}

/// Task-to-server mapping; a map makes double assignment unrepresentable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlacementSet {
    pub assignment: BTreeMap<TaskId, ServerId>,
}

impl PlacementSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, task: TaskId, server: ServerId) -> Option<ServerId> {
        self.assignment.insert(task, server)
    }

    pub fn server_of(&self, task: TaskId) -> Option<ServerId> {
        self.assignment.get(&task).copied()
    }

    pub fn remove(&mut self, task: TaskId) -> Option<ServerId> {
        self.assignment.remove(&task)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

impl FromIterator<(TaskId, ServerId)> for PlacementSet {
    fn from_iter<I: IntoIterator<Item = (TaskId, ServerId)>>(iter: I) -> Self {
        Self { assignment: iter.into_iter().collect() }
    }
}

/// Load-balance weights `a1`/`a2` and weighted-cost weights `w1`/`w2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub a1: f64,
    pub a2: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { a1: 0.5, a2: 0.5, w1: 0.5, w2: 0.5 }
    }
}

const SIMPLEX_TOL: f64 = 1e-9;

fn on_simplex(x: f64, y: f64) -> bool {
    (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) && ((x + y) - 1.0).abs() <= SIMPLEX_TOL
}

impl CostWeights {
    pub fn load_balance_valid(&self) -> bool {
        on_simplex(self.a1, self.a2)
    }

    pub fn weighted_valid(&self) -> bool {
        on_simplex(self.w1, self.w2)
    }
}
