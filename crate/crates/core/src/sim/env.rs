use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use crate::domain::{
    load_balance_cost, processing_time_ms, ready_time_on, validate_fleet, AppDag, AppId, CostWeights, MeanFleetEstimator,
    NetworkModel, PlacementSet, ResidentTask, ServerId, ServerSpec, ServerState, TaskId, TaskSpec, TaskWindow,
};
use crate::mdp::{featurize, FeatureCaps, StateVector, TaskContext};
use crate::{Error, Result};

use super::clock::{Event, EventKind, SimClock};
use super::workload::{WorkloadProfile, WorkloadStream};

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub fleet: Vec<ServerSpec>,
    pub net: NetworkModel,
    pub weights: CostWeights,
    pub caps: FeatureCaps,
    pub workload: WorkloadProfile,
    pub seed: u64,
}

/// One successful placement, kept for replaying utilization histories.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentRecord {
    pub task: TaskId,
    pub server: ServerId,
    pub cpu_cores: f64,
    pub ram_gb: f64,
    pub start_ms: f64,
    pub finish_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignOutcome {
    pub success: bool,
    pub response_time_ms: f64,
}

/// Servers with enough free RAM and free cores for `task`.
pub fn resource_check(task: &TaskSpec, fleet: &[ServerSpec], states: &[ServerState]) -> Vec<ServerId> {
    fleet
        .iter()
        .zip(states)
        .filter(|(spec, st)| st.free_ram_gb(spec) >= task.ram_demand_gb && st.free_cores(spec) >= task.cpu_demand)
        .map(|(spec, _)| spec.id)
        .collect()
}

/// Discrete-event fleet simulator. Each episode injects
/// `apps_per_episode` applications from a seeded workload stream and runs
/// until they have all completed or been dropped.
pub struct SimEnv {
    fleet: Vec<ServerSpec>,
    net: NetworkModel,
    weights: CostWeights,
    caps: FeatureCaps,
    states: Vec<ServerState>,
    clock: SimClock,
    stream: WorkloadStream,
    apps: BTreeMap<AppId, AppDag>,
    task_app: HashMap<TaskId, AppId>,
    waiting_on: HashMap<TaskId, usize>,
    placement: PlacementSet,
    completed: HashSet<TaskId>,
    dropped: BTreeSet<TaskId>,
    ready: VecDeque<TaskId>,
    current: Option<TaskId>,
    timeline: BTreeMap<TaskId, TaskWindow>,
    history: Vec<AssignmentRecord>,
    episode: usize,
}

impl SimEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        validate_fleet(&cfg.fleet)?;
        cfg.net.validate()?;
        if cfg.net.len() != cfg.fleet.len() {
            return Err(Error::ShapeMismatch { expected: cfg.fleet.len(), got: cfg.net.len() });
        }
        if cfg.workload.apps_per_episode == 0 {
            return Err(Error::Config { path: "workload.apps_per_episode".into(), msg: "must be >= 1".into() });
        }
        let estimator = MeanFleetEstimator::from_fleet(&cfg.fleet, &cfg.net);
        let stream = WorkloadStream::new(cfg.workload, cfg.seed, Box::new(estimator))?;
        let n = cfg.fleet.len();
        let mut env = Self {
            fleet: cfg.fleet,
            net: cfg.net,
            weights: cfg.weights,
            caps: cfg.caps,
            states: vec![ServerState::default(); n],
            clock: SimClock::new(0.0),
            stream,
            apps: BTreeMap::new(),
            task_app: HashMap::new(),
            waiting_on: HashMap::new(),
            placement: PlacementSet::new(),
            completed: HashSet::new(),
            dropped: BTreeSet::new(),
            ready: VecDeque::new(),
            current: None,
            timeline: BTreeMap::new(),
            history: Vec::new(),
            episode: 0,
        };
        env.load_episode();
        Ok(env)
    }

    fn load_episode(&mut self) {
        self.states = vec![ServerState::default(); self.fleet.len()];
        self.apps.clear();
        self.task_app.clear();
        self.waiting_on.clear();
        self.placement = PlacementSet::new();
        self.completed.clear();
        self.dropped.clear();
        self.ready.clear();
        self.current = None;
        self.timeline.clear();
        self.history.clear();
        let count = self.stream.profile().apps_per_episode;
        let arrivals: Vec<_> = self.stream.by_ref().take(count).collect();
        self.clock = SimClock::new(arrivals.first().map_or(0.0, |a| a.at_ms));
        for a in arrivals {
            let app = a.dag.app_id;
            for t in &a.dag.tasks {
                self.task_app.insert(t.id, app);
                self.waiting_on.insert(t.id, t.predecessors.len());
            }
            self.apps.insert(app, a.dag);
            self.clock.schedule(a.at_ms, EventKind::Arrival { app });
        }
    }

    /// Starts the next episode with fresh, idle servers; the workload stream
    /// continues where it left off.
    pub fn next_episode(&mut self) {
        self.episode += 1;
        self.load_episode();
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn fleet(&self) -> &[ServerSpec] {
        &self.fleet
    }

    pub fn net(&self) -> &NetworkModel {
        &self.net
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn caps(&self) -> &FeatureCaps {
        &self.caps
    }

    pub fn states(&self) -> &[ServerState] {
        &self.states
    }

    pub fn now_ms(&self) -> f64 {
        self.clock.now_ms()
    }

    pub fn placement(&self) -> &PlacementSet {
        &self.placement
    }

    pub fn timeline(&self) -> &BTreeMap<TaskId, TaskWindow> {
        &self.timeline
    }

    pub fn history(&self) -> &[AssignmentRecord] {
        &self.history
    }

    pub fn dropped(&self) -> &BTreeSet<TaskId> {
        &self.dropped
    }

    pub fn apps(&self) -> impl Iterator<Item = &AppDag> {
        self.apps.values()
    }

    pub fn profile(&self) -> &WorkloadProfile {
        self.stream.profile()
    }

    pub fn app_of(&self, task: TaskId) -> Result<&AppDag> {
        self.task_app.get(&task).and_then(|a| self.apps.get(a)).ok_or(Error::UnknownTask(task))
    }

    pub fn task(&self, task: TaskId) -> Result<&TaskSpec> {
        self.app_of(task)?.task(task).ok_or(Error::UnknownTask(task))
    }

    pub fn is_completed(&self, task: TaskId) -> bool {
        self.completed.contains(&task)
    }

    /// Tasks of `app` not yet placed or dropped, in topological order.
    pub fn unplaced_tasks(&self, app: AppId) -> Vec<TaskId> {
        self.apps.get(&app).map_or_else(Vec::new, |dag| {
            dag.tasks
                .iter()
                .map(|t| t.id)
                .filter(|id| self.placement.server_of(*id).is_none() && !self.dropped.contains(id))
                .collect()
        })
    }

    /// No task left to schedule and no pending events.
    pub fn is_exhausted(&self) -> bool {
        self.current.is_none() && self.ready.is_empty() && self.clock.pending() == 0
    }

    /// A task is ready for a decision without advancing time.
    pub fn has_ready(&self) -> bool {
        self.current.is_some() || !self.ready.is_empty()
    }

    /// Time of the earliest pending event.
    pub fn next_event_ms(&self) -> Option<f64> {
        self.clock.peek_time()
    }

    /// The task awaiting a decision, advancing time through events until one
    /// becomes ready. `None` once the episode is exhausted.
    pub fn next_task(&mut self) -> Option<TaskId> {
        loop {
            if self.current.is_some() {
                return self.current;
            }
            if let Some(t) = self.ready.pop_front() {
                self.current = Some(t);
                return self.current;
            }
            let t = self.clock.peek_time()?;
            self.advance(t).expect("event time is never in the past");
        }
    }

    pub fn observation(&self, task: TaskId) -> Result<StateVector> {
        let app = self.app_of(task)?;
        let spec = app.task(task).ok_or(Error::UnknownTask(task))?;
        let ctx = TaskContext { task: spec, app, placement: &self.placement };
        featurize(&ctx, &self.fleet, &self.states, &self.net, &self.caps)
    }

    pub fn resource_check(&self, task: TaskId) -> Result<Vec<ServerId>> {
        Ok(resource_check(self.task(task)?, &self.fleet, &self.states))
    }

    pub fn cpu_utilizations(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.cpu_utilization).collect()
    }

    pub fn ram_utilizations(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.ram_utilization).collect()
    }

    pub fn lb_cost(&self) -> Result<f64> {
        load_balance_cost(&self.cpu_utilizations(), &self.ram_utilizations(), &self.weights)
    }

    /// Response time `task` would see on `server` given current placements.
    pub fn response_time_on(&self, task: TaskId, server: ServerId) -> Result<f64> {
        let spec = self.task(task)?;
        let srv = self.fleet.get(server).ok_or(Error::UnknownServer(server))?;
        Ok(ready_time_on(spec, server, &self.placement, &self.net)?
            + processing_time_ms(spec.size_mcycles, srv.cpu_freq_mhz)?)
    }

    /// Places `task` on `server` now. Infeasible placements leave the state
    /// untouched and report `success = false`.
    pub fn assign_task(&mut self, task: TaskId, server: ServerId) -> Result<AssignOutcome> {
        let spec = self.task(task)?.clone();
        let srv = self.fleet.get(server).ok_or(Error::UnknownServer(server))?.clone();
        if self.placement.server_of(task).is_some() || self.dropped.contains(&task) {
            return Err(Error::InvalidTask(format!("task {task} already scheduled")));
        }
        if let Some(&p) = spec.predecessors.iter().find(|p| !self.completed.contains(p)) {
            return Err(Error::PrecedenceViolation { task, predecessor: p });
        }
        let st = &self.states[server];
        if st.free_ram_gb(&srv) < spec.ram_demand_gb || st.free_cores(&srv) < spec.cpu_demand {
            return Ok(AssignOutcome { success: false, response_time_ms: 0.0 });
        }
        let rt = self.response_time_on(task, server)?;
        let now = self.clock.now_ms();
        let finish = now + rt;
        self.states[server].admit(
            &srv,
            ResidentTask { task, cpu_cores: spec.cpu_demand, ram_gb: spec.ram_demand_gb, release_ms: finish },
        );
        self.placement.assign(task, server);
        self.timeline.insert(task, TaskWindow { start_ms: now, finish_ms: finish });
        self.history.push(AssignmentRecord {
            task,
            server,
            cpu_cores: spec.cpu_demand,
            ram_gb: spec.ram_demand_gb,
            start_ms: now,
            finish_ms: finish,
        });
        self.clock.schedule(finish, EventKind::Completion { task, server });
        if self.current == Some(task) {
            self.current = None;
        }
        Ok(AssignOutcome { success: true, response_time_ms: rt })
    }

    /// Drops `task` and every descendant; returns the dropped ids.
    pub fn drop_task(&mut self, task: TaskId) -> Result<Vec<TaskId>> {
        let app = self.app_of(task)?;
        let mut out = vec![task];
        let mut frontier = vec![task];
        while let Some(t) = frontier.pop() {
            for s in app.successors(t) {
                if !out.contains(&s) {
                    out.push(s);
                    frontier.push(s);
                }
            }
        }
        out.sort_unstable();
        for t in &out {
            self.dropped.insert(*t);
        }
        self.ready.retain(|t| !out.contains(t));
        if self.current.is_some_and(|c| out.contains(&c)) {
            self.current = None;
        }
        Ok(out)
    }

    /// Processes every event due by `until_ms` in order, then sets the clock.
    pub fn advance(&mut self, until_ms: f64) -> Result<Vec<Event>> {
        if until_ms < self.clock.now_ms() {
            return Err(Error::InvalidHyper(format!(
                "cannot advance to {until_ms} ms before now ({} ms)",
                self.clock.now_ms()
            )));
        }
        let mut fired = Vec::new();
        while let Some(e) = self.clock.pop_due(until_ms) {
            match e.kind {
                EventKind::Arrival { app } => {
                    let roots: Vec<TaskId> = self.apps[&app]
                        .tasks
                        .iter()
                        .filter(|t| t.predecessors.is_empty())
                        .map(|t| t.id)
                        .collect();
                    self.ready.extend(roots);
                }
                EventKind::Completion { task, server } => {
                    let spec = &self.fleet[server];
                    self.states[server].release(spec, task);
                    self.completed.insert(task);
                    let app = &self.apps[&self.task_app[&task]];
                    for s in app.successors(task) {
                        let w = self.waiting_on.get_mut(&s).expect("successor registered");
                        *w -= 1;
                        if *w == 0 && !self.dropped.contains(&s) {
                            self.ready.push_back(s);
                        }
                    }
                }
            }
            fired.push(e);
        }
        self.clock.set_now(until_ms);
        Ok(fired)
    }

    /// Checks every server's utilizations against its resident list.
    pub fn audit(&self) -> std::result::Result<(), String> {
        for (k, (spec, st)) in self.fleet.iter().zip(&self.states).enumerate() {
            let cpu = st.resident_cpu() / spec.cpu_cores as f64;
            let ram = st.resident_ram() / spec.ram_size_gb;
            for (what, u, sum) in [("cpu", st.cpu_utilization, cpu), ("ram", st.ram_utilization, ram)] {
                if !(0.0..=1.0).contains(&u) {
                    return Err(format!("server {k} {what} utilization {u} outside [0,1]"));
                }
                if (u - sum).abs() > 1e-9 {
                    return Err(format!("server {k} {what} utilization {u} != resident share {sum}"));
                }
            }
        }
        Ok(())
    }
}

/// Utilizations at time `t_ms` rebuilt from assignment records alone.
pub fn replay_utilization(fleet: &[ServerSpec], history: &[AssignmentRecord], t_ms: f64) -> Vec<(f64, f64)> {
    let mut cpu = vec![0.0; fleet.len()];
    let mut ram = vec![0.0; fleet.len()];
    for r in history {
        if r.start_ms <= t_ms && t_ms < r.finish_ms {
            cpu[r.server] += r.cpu_cores;
            ram[r.server] += r.ram_gb;
        }
    }
    fleet
        .iter()
        .enumerate()
        .map(|(k, s)| (cpu[k] / s.cpu_cores as f64, ram[k] / s.ram_size_gb))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::workload::{ArrivalProcess, CountSpan, Span};

    fn env_with(profile: WorkloadProfile) -> SimEnv {
        let fleet = vec![ServerSpec::new(0, 2, 1000.0, 4.0), ServerSpec::new(1, 4, 2000.0, 8.0)];
        let net = NetworkModel::uniform(2, 10.0, 5.0).unwrap();
        SimEnv::new(EnvConfig {
            fleet,
            net,
            weights: CostWeights::default(),
            caps: FeatureCaps::default(),
            workload: profile,
            seed: 7,
        })
        .unwrap()
    }

    fn single_task_profile() -> WorkloadProfile {
        WorkloadProfile {
            apps_per_episode: 2,
            tasks_per_app: CountSpan::new(1, 1),
            size_mcycles: Span::new(1000.0, 1000.0),
            ram_demand_gb: Span::new(1.0, 1.0),
            cpu_demand: Span::new(1.0, 1.0),
            arrival: ArrivalProcess::Fixed { interval_ms: Some(10.0) },
            ..Default::default()
        }
    }

    #[test]
    fn feasible_assignment_matches_response_time() {
        let mut env = env_with(single_task_profile());
        let t = env.next_task().unwrap();
        let out = env.assign_task(t, 0).unwrap();
        assert!(out.success);
        assert_eq!(out.response_time_ms, 1000.0);
        assert_eq!(env.states()[0].cpu_utilization, 0.5);
        assert_eq!(env.states()[0].ram_utilization, 0.25);
    }

    #[test]
    fn infeasible_assignment_changes_nothing() {
        let profile = WorkloadProfile { ram_demand_gb: Span::new(5.0, 5.0), ..single_task_profile() };
        let mut env = env_with(profile);
        let t = env.next_task().unwrap();
        assert_eq!(env.resource_check(t).unwrap(), vec![1]);
        let before = env.states().to_vec();
        let out = env.assign_task(t, 0).unwrap();
        assert!(!out.success);
        assert_eq!(env.states(), &before[..]);
        assert_eq!(env.next_task(), Some(t));
    }

    #[test]
    fn sequential_tasks_return_to_baseline() {
        let mut env = env_with(single_task_profile());
        let a = env.next_task().unwrap();
        env.assign_task(a, 0).unwrap();
        let b = env.next_task().unwrap();
        assert_ne!(a, b);
        env.assign_task(b, 0).unwrap();
        assert_eq!(env.states()[0].ram_utilization, 0.5);
        assert!(env.next_task().is_none());
        assert!(env.is_exhausted());
        assert_eq!(env.states()[0].ram_utilization, 0.0);
        assert_eq!(env.states()[0].cpu_utilization, 0.0);
        assert_eq!(replay_utilization(env.fleet(), env.history(), 1e12), vec![(0.0, 0.0); 2]);
    }

    #[test]
    fn precedence_and_unknown_server_are_errors() {
        let profile = WorkloadProfile {
            apps_per_episode: 1,
            tasks_per_app: CountSpan::new(3, 3),
            dag_width: CountSpan::new(1, 1),
            ..Default::default()
        };
        let mut env = env_with(profile);
        let root = env.next_task().unwrap();
        let child = env.app_of(root).unwrap().successors(root)[0];
        assert!(matches!(env.assign_task(child, 0), Err(Error::PrecedenceViolation { .. })));
        assert!(matches!(env.assign_task(root, 9), Err(Error::UnknownServer(9))));
    }

    #[test]
    fn advance_without_events_moves_clock() {
        let mut env = env_with(single_task_profile());
        let t = env.next_task().unwrap();
        env.assign_task(t, 1).unwrap();
        let now = env.now_ms();
        let fired = env.advance(now + 5.0).unwrap();
        assert!(fired.iter().all(|e| e.at_ms <= now + 5.0));
        assert_eq!(env.now_ms(), now + 5.0);
        assert!(env.advance(now).is_err());
    }

    #[test]
    fn dropping_cascades_to_descendants() {
        let profile = WorkloadProfile {
            apps_per_episode: 1,
            tasks_per_app: CountSpan::new(4, 4),
            dag_width: CountSpan::new(1, 1),
            ..Default::default()
        };
        let mut env = env_with(profile);
        let root = env.next_task().unwrap();
        let gone = env.drop_task(root).unwrap();
        assert_eq!(gone.len(), 4);
        assert!(env.next_task().is_none());
    }
}
