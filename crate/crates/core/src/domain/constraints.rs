use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{AppDag, CostWeights, PlacementSet, ServerId, ServerSpec, ServerState, TaskId};

/// Execution window of a placed task, used for the precedence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskWindow {
    pub start_ms: f64,
    pub finish_ms: f64,
}

/// A violated constraint. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Task unassigned or assigned to a server outside the fleet.
    C1 { task: TaskId },
    /// Utilization outside `[0, 1]`.
    C2 { server: ServerId },
    /// Non-positive frequency or RAM.
    C3 { server: ServerId },
    /// Task RAM demand not below the assigned server's RAM size.
    C4 { task: TaskId, server: ServerId },
    /// Task started before a predecessor finished.
    C5 { task: TaskId, predecessor: TaskId },
    /// Weighted-cost weights off the simplex.
    C6,
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::C1 { .. } => "C1",
            Violation::C2 { .. } => "C2",
            Violation::C3 { .. } => "C3",
            Violation::C4 { .. } => "C4",
            Violation::C5 { .. } => "C5",
            Violation::C6 => "C6",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::C1 { task } => write!(f, "C1: task {task} not assigned to exactly one server"),
            Violation::C2 { server } => write!(f, "C2: server {server} utilization outside [0,1]"),
            Violation::C3 { server } => write!(f, "C3: server {server} has non-positive capacity"),
            Violation::C4 { task, server } => write!(f, "C4: server {server} lacks RAM for task {task}"),
            Violation::C5 { task, predecessor } => {
                write!(f, "C5: task {task} starts before predecessor {predecessor} completes")
            }
            Violation::C6 => write!(f, "C6: w1 + w2 must equal 1 with both in [0,1]"),
        }
    }
}

pub struct ConstraintInput<'a> {
    pub placement: &'a PlacementSet,
    pub fleet: &'a [ServerSpec],
    pub states: &'a [ServerState],
    pub apps: &'a [AppDag],
    pub weights: &'a CostWeights,
    pub timeline: Option<&'a BTreeMap<TaskId, TaskWindow>>,
}

/// Lists every violated constraint, in C1..C6 order.
pub fn check_constraints(input: &ConstraintInput<'_>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = input.fleet.len();

    for app in input.apps {
        for t in &app.tasks {
            match input.placement.server_of(t.id) {
                Some(s) if s < n => {}
                _ => out.push(Violation::C1 { task: t.id }),
            }
        }
    }

    for (k, st) in input.states.iter().enumerate() {
        let ok = |u: f64| (0.0..=1.0).contains(&u);
        if !ok(st.cpu_utilization) || !ok(st.ram_utilization) {
            out.push(Violation::C2 { server: k });
        }
    }

    for s in input.fleet {
        if !(s.cpu_freq_mhz > 0.0 && s.ram_size_gb > 0.0) {
            out.push(Violation::C3 { server: s.id });
        }
    }

    for app in input.apps {
        for t in &app.tasks {
            if let Some(spec) = input.placement.server_of(t.id).and_then(|s| input.fleet.get(s)) {
                if !(t.ram_demand_gb < spec.ram_size_gb) {
                    out.push(Violation::C4 { task: t.id, server: spec.id });
                }
            }
        }
    }

    if let Some(timeline) = input.timeline {
        for app in input.apps {
            for t in &app.tasks {
                let Some(w) = timeline.get(&t.id) else { continue };
                for p in &t.predecessors {
                    match timeline.get(p) {
                        Some(pw) if pw.finish_ms <= w.start_ms => {}
                        _ => out.push(Violation::C5 { task: t.id, predecessor: *p }),
                    }
                }
            }
        }
    }

    if !input.weights.weighted_valid() {
        out.push(Violation::C6);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TaskSpec;

    fn setup() -> (Vec<ServerSpec>, Vec<ServerState>, Vec<AppDag>) {
        let fleet = vec![ServerSpec::new(0, 2, 1000.0, 1.0), ServerSpec::new(1, 2, 1000.0, 8.0)];
        let states = vec![ServerState::default(); 2];
        let tasks = vec![
            TaskSpec::root(0, 0, 10.0).with_demand(0.5, 2.0),
            TaskSpec::root(1, 0, 10.0).with_parent(0, 1.0).with_demand(0.5, 0.5),
        ];
        let apps = vec![AppDag::unflagged(0, tasks).unwrap()];
        (fleet, states, apps)
    }

    #[test]
    fn valid_placement_has_no_violations() {
        let (fleet, states, apps) = setup();
        let placement: PlacementSet = [(0, 1), (1, 1)].into_iter().collect();
        let timeline: BTreeMap<_, _> = [
            (0, TaskWindow { start_ms: 0.0, finish_ms: 10.0 }),
            (1, TaskWindow { start_ms: 10.0, finish_ms: 20.0 }),
        ]
        .into_iter()
        .collect();
        let w = CostWeights::default();
        let v = check_constraints(&ConstraintInput {
            placement: &placement,
            fleet: &fleet,
            states: &states,
            apps: &apps,
            weights: &w,
            timeline: Some(&timeline),
        });
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn ram_weights_and_precedence_violations() {
        let (fleet, mut states, apps) = setup();
        let placement: PlacementSet = [(0, 0)].into_iter().collect();
        states[1].ram_utilization = 1.5;
        let timeline: BTreeMap<_, _> = [
            (0, TaskWindow { start_ms: 0.0, finish_ms: 10.0 }),
            (1, TaskWindow { start_ms: 5.0, finish_ms: 20.0 }),
        ]
        .into_iter()
        .collect();
        let w = CostWeights { w1: 0.7, w2: 0.7, ..Default::default() };
        let v = check_constraints(&ConstraintInput {
            placement: &placement,
            fleet: &fleet,
            states: &states,
            apps: &apps,
            weights: &w,
            timeline: Some(&timeline),
        });
        assert_eq!(
            v,
            vec![
                Violation::C1 { task: 1 },
                Violation::C2 { server: 1 },
                Violation::C4 { task: 0, server: 0 },
                Violation::C5 { task: 1, predecessor: 0 },
                Violation::C6,
            ]
        );
        assert_eq!(v[2].to_string(), "C4: server 0 lacks RAM for task 0");
    }

    #[test]
    fn nonpositive_capacity_is_c3() {
        let fleet = vec![ServerSpec::new(0, 1, 0.0, 1.0)];
        let w = CostWeights::default();
        let v = check_constraints(&ConstraintInput {
            placement: &PlacementSet::new(),
            fleet: &fleet,
            states: &[],
            apps: &[],
            weights: &w,
            timeline: None,
        });
        assert_eq!(v, vec![Violation::C3 { server: 0 }]);
    }
}
