use std::cmp::Ordering;

use crate::{Error, Result};

use super::{AppDag, NetworkModel, ServerSpec, TaskId, TaskSpec};

/// Placement-independent cost of DAG nodes and edges, in ms.
pub trait PathCostEstimator: Send + Sync {
    fn node_cost(&self, task: &TaskSpec) -> f64;
    fn edge_cost(&self, packet_mb: f64) -> f64;
}

/// Node cost from the mean fleet frequency, edge cost from the mean
/// off-diagonal bandwidth and propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFleetEstimator {
    pub mean_freq_mhz: f64,
    pub mean_bandwidth_mbps: f64,
    pub mean_propagation_ms: f64,
}

impl MeanFleetEstimator {
    pub fn from_fleet(fleet: &[ServerSpec], net: &NetworkModel) -> Self {
        let mean_freq_mhz = fleet.iter().map(|s| s.cpu_freq_mhz).sum::<f64>() / fleet.len().max(1) as f64;
        Self {
            mean_freq_mhz,
            mean_bandwidth_mbps: net.mean_bandwidth(),
            mean_propagation_ms: net.mean_propagation(),
        }
    }
}

impl PathCostEstimator for MeanFleetEstimator {
    fn node_cost(&self, task: &TaskSpec) -> f64 {
        task.size_mcycles / self.mean_freq_mhz * 1000.0
    }

    fn edge_cost(&self, packet_mb: f64) -> f64 {
        if self.mean_bandwidth_mbps > 0.0 {
            packet_mb / self.mean_bandwidth_mbps * 1000.0 + self.mean_propagation_ms
        } else {
            0.0
        }
    }
}

/// Relative tolerance under which two path costs count as tied.
pub(crate) const TIE_TOLERANCE: f64 = 1e-9;

/// Orders `(cost, path)` candidates: higher cost first, then the
/// lexicographically smaller id sequence.
pub(crate) fn compare_paths(a: (f64, &[TaskId]), b: (f64, &[TaskId])) -> Ordering {
    let scale = a.0.abs().max(b.0.abs()).max(1.0);
    if (a.0 - b.0).abs() <= TIE_TOLERANCE * scale {
        a.1.cmp(b.1)
    } else if a.0 > b.0 {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

/// Maximal-cost source-to-sink path, returned in path order.
///
/// Ties are broken toward the lexicographically smallest id sequence.
pub fn critical_path(dag: &AppDag, estimator: &dyn PathCostEstimator) -> Result<Vec<TaskId>> {
    let n = dag.tasks.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    // (child position, inbound packet) per node
    let mut children: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (ci, child) in dag.tasks.iter().enumerate() {
        for (parent, packet) in child.inbound() {
            let pi = dag.position(parent).ok_or(Error::UnknownTask(parent))?;
            if pi >= ci {
                return Err(Error::NotADag);
            }
            children[pi].push((ci, packet));
        }
    }

    // best suffix (cost, id sequence) starting at each node
    let mut suffix: Vec<(f64, Vec<TaskId>)> = vec![(0.0, Vec::new()); n];
    for i in (0..n).rev() {
        let mut best: Option<(f64, usize)> = None;
        for &(ci, packet) in &children[i] {
            let cand = estimator.edge_cost(packet) + suffix[ci].0;
            best = match best {
                None => Some((cand, ci)),
                Some((bc, bi)) => {
                    if compare_paths((cand, &suffix[ci].1), (bc, &suffix[bi].1)) == Ordering::Less {
                        Some((cand, ci))
                    } else {
                        Some((bc, bi))
                    }
                }
            };
        }
        let node = estimator.node_cost(&dag.tasks[i]);
        let mut seq = vec![dag.tasks[i].id];
        let cost = match best {
            Some((c, ci)) => {
                seq.extend_from_slice(&suffix[ci].1);
                node + c
            }
            None => node,
        };
        suffix[i] = (cost, seq);
    }

    let mut best: Option<usize> = None;
    for (i, task) in dag.tasks.iter().enumerate() {
        if !task.predecessors.is_empty() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                if compare_paths((suffix[i].0, &suffix[i].1), (suffix[b].0, &suffix[b].1)) == Ordering::Less {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let root = best.ok_or(Error::NotADag)?;
    Ok(std::mem::take(&mut suffix[root].1))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SizeOnly;
    impl PathCostEstimator for SizeOnly {
        fn node_cost(&self, task: &TaskSpec) -> f64 {
            task.size_mcycles
        }
        fn edge_cost(&self, _packet_mb: f64) -> f64 {
            0.0
        }
    }

    fn cp(tasks: Vec<TaskSpec>) -> Vec<TaskId> {
        let dag = AppDag::unflagged(0, tasks).unwrap();
        critical_path(&dag, &SizeOnly).unwrap()
    }

    #[test]
    fn chain_and_single() {
        let chain = vec![
            TaskSpec::root(0, 0, 1.0),
            TaskSpec::root(1, 0, 1.0).with_parent(0, 0.0),
            TaskSpec::root(2, 0, 1.0).with_parent(1, 0.0),
        ];
        assert_eq!(cp(chain), vec![0, 1, 2]);
        assert_eq!(cp(vec![TaskSpec::root(7, 0, 3.0)]), vec![7]);
    }

    #[test]
    fn diamond_takes_heavier_branch() {
        let diamond = vec![
            TaskSpec::root(0, 0, 1.0),
            TaskSpec::root(1, 0, 2.0).with_parent(0, 0.0),
            TaskSpec::root(2, 0, 5.0).with_parent(0, 0.0),
            TaskSpec::root(3, 0, 1.0).with_parent(1, 0.0).with_parent(2, 0.0),
        ];
        assert_eq!(cp(diamond), vec![0, 2, 3]);
    }

    #[test]
    fn ties_take_smallest_sequence() {
        let diamond = vec![
            TaskSpec::root(0, 0, 1.0),
            TaskSpec::root(1, 0, 2.0).with_parent(0, 0.0),
            TaskSpec::root(2, 0, 2.0).with_parent(0, 0.0),
            TaskSpec::root(3, 0, 1.0).with_parent(1, 0.0).with_parent(2, 0.0),
        ];
        assert_eq!(cp(diamond), vec![0, 1, 3]);
        let two_roots = vec![TaskSpec::root(4, 0, 2.0), TaskSpec::root(3, 0, 2.0)];
        assert_eq!(cp(two_roots), vec![3]);
    }

    #[test]
    fn edge_costs_count() {
        let est = MeanFleetEstimator { mean_freq_mhz: 1000.0, mean_bandwidth_mbps: 10.0, mean_propagation_ms: 0.0 };
        // branch 1 is lighter on compute but carries a large packet
        let tasks = vec![
            TaskSpec::root(0, 0, 100.0),
            TaskSpec::root(1, 0, 100.0).with_parent(0, 50.0),
            TaskSpec::root(2, 0, 1000.0).with_parent(0, 0.0),
        ];
        let dag = AppDag::unflagged(0, tasks).unwrap();
        assert_eq!(critical_path(&dag, &est).unwrap(), vec![0, 1]);
    }
}
