use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::domain::{transfer_time_ms, AppDag, NetworkModel, PlacementSet, ServerSpec, ServerState, TaskSpec};
use crate::{Error, Result};

/// Task block: index in app, predecessors, successors, app size, cpu demand,
/// ram demand, response-time estimate.
pub const TASK_FEATURES: usize = 7;
/// Fleet header: server count.
pub const FLEET_HEADER: usize = 1;
/// Per server: cpu util, freq, ram util, ram size, mean propagation, mean
/// bandwidth, parent-transfer estimate.
pub const PER_SERVER: usize = 7;

pub const fn feature_len(max_servers: usize) -> usize {
    TASK_FEATURES + FLEET_HEADER + PER_SERVER * max_servers
}

/// Reference scales; every feature is divided by its reference and clamped to
/// `[0, 1]`, which is also the declared range used for discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureCaps {
    pub max_servers: usize,
    pub app_tasks_ref: f64,
    pub cpu_ref: f64,
    pub ram_ref_gb: f64,
    pub time_ref_ms: f64,
    pub prop_ref_ms: f64,
    pub bw_ref_mbps: f64,
}

impl Default for FeatureCaps {
    fn default() -> Self {
        Self {
            max_servers: 8,
            app_tasks_ref: 10.0,
            cpu_ref: 2.0,
            ram_ref_gb: 2.0,
            time_ref_ms: 2000.0,
            prop_ref_ms: 50.0,
            bw_ref_mbps: 50.0,
        }
    }
}

/// Immutable, fixed-length observation.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// The task being placed, its application and the placement so far.
#[derive(Clone, Copy)]
pub struct TaskContext<'a> {
    pub task: &'a TaskSpec,
    pub app: &'a AppDag,
    pub placement: &'a PlacementSet,
}

fn unit(x: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        (x / reference).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn featurize(
    ctx: &TaskContext<'_>,
    fleet: &[ServerSpec],
    states: &[ServerState],
    net: &NetworkModel,
    caps: &FeatureCaps,
) -> Result<StateVector> {
    let n = fleet.len();
    if n > caps.max_servers {
        return Err(Error::FleetExceedsCapacity { fleet: n, max: caps.max_servers });
    }
    if states.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: states.len() });
    }
    let mut v = Vec::with_capacity(feature_len(caps.max_servers));
    let task = ctx.task;
    let app = ctx.app;

    let position = app.position(task.id).unwrap_or(0);
    let mean_freq = fleet.iter().map(|s| s.cpu_freq_mhz).sum::<f64>() / n.max(1) as f64;
    let rt_estimate = if mean_freq > 0.0 { task.size_mcycles / mean_freq * 1000.0 } else { 0.0 };
    v.push(unit(position as f64, caps.app_tasks_ref));
    v.push(unit(task.predecessors.len() as f64, caps.app_tasks_ref));
    v.push(unit(app.successors(task.id).len() as f64, caps.app_tasks_ref));
    v.push(unit(app.len() as f64, caps.app_tasks_ref));
    v.push(unit(task.cpu_demand, caps.cpu_ref));
    v.push(unit(task.ram_demand_gb, caps.ram_ref_gb));
    v.push(unit(rt_estimate, caps.time_ref_ms));

    v.push(unit(n as f64, caps.max_servers as f64));
    let max_freq = fleet.iter().map(|s| s.cpu_freq_mhz).fold(0.0, f64::max);
    let max_ram = fleet.iter().map(|s| s.ram_size_gb).fold(0.0, f64::max);
    for (k, (spec, st)) in fleet.iter().zip(states).enumerate() {
        let mut parent_transfer = 0.0f64;
        for (parent, packet) in task.inbound() {
            if let Some(src) = ctx.placement.server_of(parent) {
                parent_transfer = parent_transfer.max(transfer_time_ms(src, k, packet, net)?);
            }
        }
        v.push(st.cpu_utilization);
        v.push(unit(spec.cpu_freq_mhz, max_freq));
        v.push(st.ram_utilization);
        v.push(unit(spec.ram_size_gb, max_ram));
        v.push(unit(net.mean_propagation_from(k), caps.prop_ref_ms));
        v.push(unit(net.mean_bandwidth_from(k), caps.bw_ref_mbps));
        v.push(unit(parent_transfer, caps.time_ref_ms));
    }
    v.resize(feature_len(caps.max_servers), 0.0);
    Ok(StateVector(v))
}
