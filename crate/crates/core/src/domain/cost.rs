use crate::mdp::NormalizerState;
use crate::{Error, Result};

use super::{AppDag, CostWeights, NetworkModel, PlacementSet, ServerId, ServerSpec, TaskSpec};

/// Population variance (divides by the count).
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Weighted CPU/RAM utilization variance across the fleet.
pub fn load_balance_cost(cpu_utils: &[f64], ram_utils: &[f64], weights: &CostWeights) -> Result<f64> {
    if cpu_utils.is_empty() || ram_utils.is_empty() {
        return Err(Error::EmptyFleet);
    }
    if cpu_utils.len() != ram_utils.len() {
        return Err(Error::LengthMismatch { cpu: cpu_utils.len(), ram: ram_utils.len() });
    }
    if let Some(&bad) = cpu_utils.iter().chain(ram_utils).find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(Error::UtilizationOutOfRange(bad));
    }
    Ok(weights.a1 * population_variance(cpu_utils) + weights.a2 * population_variance(ram_utils))
}

/// Execution time in ms of `size_mcycles` on a core running at `freq_mhz`.
pub fn processing_time_ms(size_mcycles: f64, freq_mhz: f64) -> Result<f64> {
    if !(size_mcycles > 0.0 && freq_mhz > 0.0) || !size_mcycles.is_finite() || !freq_mhz.is_finite() {
        return Err(Error::InvalidSizeOrFrequency);
    }
    Ok(size_mcycles / freq_mhz * 1000.0)
}

/// Transmission plus propagation time; free when co-located.
pub fn transfer_time_ms(src: ServerId, dst: ServerId, packet_mb: f64, net: &NetworkModel) -> Result<f64> {
    let n = net.len();
    if src >= n {
        return Err(Error::UnknownServer(src));
    }
    if dst >= n {
        return Err(Error::UnknownServer(dst));
    }
    if src == dst {
        return Ok(0.0);
    }
    Ok(packet_mb / net.bandwidth_mbps[src][dst] * 1000.0 + net.propagation_ms[src][dst])
}

/// Latest arrival over the task's inbound edges, for the task's assigned server.
pub fn task_ready_time_ms(task: &TaskSpec, placement: &PlacementSet, net: &NetworkModel) -> Result<f64> {
    let dst = placement.server_of(task.id).ok_or(Error::Unplaced(task.id))?;
    ready_time_on(task, dst, placement, net)
}

/// Ready time as if `task` were placed on `dst`.
pub(crate) fn ready_time_on(
    task: &TaskSpec,
    dst: ServerId,
    placement: &PlacementSet,
    net: &NetworkModel,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (parent, packet) in task.inbound() {
        let src = placement
            .server_of(parent)
            .ok_or(Error::DependencyUnplaced { task: task.id, predecessor: parent })?;
        worst = worst.max(transfer_time_ms(src, dst, packet, net)?);
    }
    Ok(worst)
}

/// Ready time plus processing time on the assigned server.
pub fn task_response_time_ms(
    task: &TaskSpec,
    placement: &PlacementSet,
    fleet: &[ServerSpec],
    net: &NetworkModel,
) -> Result<f64> {
    let server = placement.server_of(task.id).ok_or(Error::Unplaced(task.id))?;
    let spec = fleet.get(server).ok_or(Error::UnknownServer(server))?;
    Ok(task_ready_time_ms(task, placement, net)? + processing_time_ms(task.size_mcycles, spec.cpu_freq_mhz)?)
}

/// Sum of task response times over the critical path.
pub fn app_response_time_ms(
    dag: &AppDag,
    placement: &PlacementSet,
    fleet: &[ServerSpec],
    net: &NetworkModel,
) -> Result<f64> {
    let mut total = 0.0;
    for (task, critical) in dag.tasks.iter().zip(&dag.critical_flags) {
        if *critical {
            total += task_response_time_ms(task, placement, fleet, net)?;
        }
    }
    Ok(total)
}

/// Running minimum/maximum of one objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningRange {
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

impl Default for RunningRange {
    fn default() -> Self {
        Self { min: f64::INFINITY, max: f64::NEG_INFINITY, count: 0 }
    }
}

impl RunningRange {
    pub fn record(&mut self, x: f64) {
        if x.is_finite() {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
            self.count += 1;
        }
    }

    /// Min-max scaled value in `[0, 1]`; 0 when the range is degenerate.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.count == 0 || !(self.max > self.min) {
            return 0.0;
        }
        ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

/// Weighted sum of the min-max normalised load-balance and response-time costs.
pub fn weighted_cost(lb_cost: f64, rt_cost: f64, weights: &CostWeights, norm: &NormalizerState) -> f64 {
    weights.w1 * norm.lb_range().normalize(lb_cost) + weights.w2 * norm.rt_range().normalize(rt_cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MeanFleetEstimator;

    fn w(a1: f64, a2: f64) -> CostWeights {
        CostWeights { a1, a2, ..Default::default() }
    }

    #[test]
    fn load_balance_examples() {
        assert_eq!(load_balance_cost(&[0.3, 0.3], &[0.5, 0.5], &w(0.5, 0.5)).unwrap(), 0.0);
        // mean 0.3, deviations ±0.1 -> variance 0.01 for both resources
        let c = load_balance_cost(&[0.2, 0.4], &[0.2, 0.4], &w(0.5, 0.5)).unwrap();
        assert!((c - 0.01).abs() < 1e-15);
        let c = load_balance_cost(&[0.2, 0.4], &[0.9, 0.1], &w(1.0, 0.0)).unwrap();
        assert!((c - 0.01).abs() < 1e-15);
    }

    #[test]
    fn load_balance_errors() {
        assert!(matches!(load_balance_cost(&[], &[], &w(0.5, 0.5)), Err(Error::EmptyFleet)));
        assert!(matches!(
            load_balance_cost(&[1.2], &[0.1], &w(0.5, 0.5)),
            Err(Error::UtilizationOutOfRange(_))
        ));
    }

    #[test]
    fn processing_examples() {
        assert_eq!(processing_time_ms(2000.0, 2000.0).unwrap(), 1000.0);
        assert!(processing_time_ms(0.0, 2000.0).is_err());
        assert!(processing_time_ms(10.0, -1.0).is_err());
        let t = processing_time_ms(1200.0, 2200.0).unwrap();
        assert!((t - 545.454_545_454_545_4).abs() < 1e-9);
    }

    #[test]
    fn transfer_examples() {
        let fog = NetworkModel::uniform(2, 25.0, 3.0).unwrap();
        assert_eq!(transfer_time_ms(1, 1, 100.0, &fog).unwrap(), 0.0);
        assert_eq!(transfer_time_ms(0, 1, 25.0, &fog).unwrap(), 1003.0);
        let cloud = NetworkModel::uniform(2, 6.0, 15.0).unwrap();
        assert_eq!(transfer_time_ms(0, 1, 12.0, &cloud).unwrap(), 2015.0);
        assert!(matches!(transfer_time_ms(0, 5, 1.0, &cloud), Err(Error::UnknownServer(5))));
    }

    fn fleet2() -> Vec<ServerSpec> {
        vec![ServerSpec::new(0, 2, 2000.0, 4.0), ServerSpec::new(1, 2, 2000.0, 4.0)]
    }

    #[test]
    fn ready_and_response_times() {
        let net = NetworkModel::from_fn(3, |j, k| if j + k == 1 { (25.0, 3.0) } else { (1.0, 0.0) }).unwrap();
        let root = TaskSpec::root(0, 0, 2000.0);
        let mut pl = PlacementSet::new();
        pl.assign(0, 0);
        assert_eq!(task_ready_time_ms(&root, &pl, &net).unwrap(), 0.0);

        let fleet = fleet2();
        assert_eq!(task_response_time_ms(&root, &pl, &fleet, &net).unwrap(), 1000.0);

        let child = TaskSpec::root(1, 0, 2000.0).with_parent(0, 25.0);
        pl.assign(1, 0);
        assert_eq!(task_response_time_ms(&child, &pl, &fleet, &net).unwrap(), 1000.0);
        pl.assign(1, 1);
        assert_eq!(task_response_time_ms(&child, &pl, &fleet, &net).unwrap(), 2003.0);

        let orphan = TaskSpec::root(5, 0, 10.0).with_parent(4, 1.0);
        pl.assign(5, 0);
        assert!(matches!(
            task_ready_time_ms(&orphan, &pl, &net),
            Err(Error::DependencyUnplaced { task: 5, predecessor: 4 })
        ));
    }

    #[test]
    fn ready_time_is_max_over_parents() {
        // 10 ms and 20 ms edges into server 2
        let net = NetworkModel::from_fn(3, |_, _| (1000.0, 0.0)).unwrap();
        let t = TaskSpec::root(2, 0, 1.0).with_parent(0, 10.0).with_parent(1, 20.0);
        let pl: PlacementSet = [(0, 0), (1, 1), (2, 2)].into_iter().collect();
        assert_eq!(task_ready_time_ms(&t, &pl, &net).unwrap(), 20.0);
        let co: PlacementSet = [(0, 2), (1, 2), (2, 2)].into_iter().collect();
        assert_eq!(task_ready_time_ms(&t, &co, &net).unwrap(), 0.0);
    }

    #[test]
    fn app_response_sums_critical_path_only() {
        let fleet = fleet2();
        let net = NetworkModel::uniform(2, 25.0, 3.0).unwrap();
        let est = MeanFleetEstimator::from_fleet(&fleet, &net);
        let chain = vec![TaskSpec::root(0, 0, 2000.0), TaskSpec::root(1, 0, 2000.0).with_parent(0, 1.0)];
        let dag = AppDag::new(0, chain, &est).unwrap();
        let pl: PlacementSet = [(0, 0), (1, 0)].into_iter().collect();
        assert_eq!(app_response_time_ms(&dag, &pl, &fleet, &net).unwrap(), 2000.0);

        // diamond: 0 -> {1 (heavy), 2 (light)} -> 3; changing 2 leaves the total unchanged
        let diamond = |light: f64| {
            vec![
                TaskSpec::root(0, 0, 100.0),
                TaskSpec::root(1, 0, 5000.0).with_parent(0, 0.0),
                TaskSpec::root(2, 0, light).with_parent(0, 0.0),
                TaskSpec::root(3, 0, 100.0).with_parent(1, 0.0).with_parent(2, 0.0),
            ]
        };
        let pl: PlacementSet = (0..4).map(|t| (t, 0)).collect();
        let a = AppDag::new(0, diamond(10.0), &est).unwrap();
        let b = AppDag::new(0, diamond(20.0), &est).unwrap();
        assert_eq!(a.critical_tasks(), vec![0, 1, 3]);
        assert_eq!(
            app_response_time_ms(&a, &pl, &fleet, &net).unwrap(),
            app_response_time_ms(&b, &pl, &fleet, &net).unwrap()
        );
    }

    #[test]
    fn running_range_normalization() {
        let mut r = RunningRange::default();
        assert_eq!(r.normalize(3.0), 0.0);
        r.record(2.0);
        assert_eq!(r.normalize(2.0), 0.0);
        r.record(4.0);
        assert_eq!(r.normalize(3.0), 0.5);
        assert_eq!(r.normalize(9.0), 1.0);
    }

    #[test]
    fn weighted_cost_examples() {
        let mut norm = NormalizerState::default();
        norm.record_costs(0.0, 100.0);
        norm.record_costs(0.02, 300.0);
        let wts = CostWeights::default();
        assert_eq!(weighted_cost(0.0, 100.0, &wts, &norm), 0.0);
        assert_eq!(weighted_cost(0.02, 300.0, &wts, &norm), 1.0);
        assert!((weighted_cost(0.01, 200.0, &wts, &norm) - 0.5).abs() < 1e-12);
    }
}
