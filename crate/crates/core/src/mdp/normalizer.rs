use crate::domain::RunningRange;

pub const SIZE_BUCKETS: usize = 10;

/// Running statistics behind cost normalisation and reward scaling.
///
/// Everything is updated through the `record_*` methods only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerState {
    lb: RunningRange,
    rt: RunningRange,
    size_lo: f64,
    size_hi: f64,
    rt_sum: [f64; SIZE_BUCKETS],
    rt_count: [u64; SIZE_BUCKETS],
    max_abs_r_lb: f64,
    max_abs_r_rt: f64,
}

impl Default for NormalizerState {
    fn default() -> Self {
        Self::new(0.0, 1.0)
    }
}

impl NormalizerState {
    /// `size_lo..size_hi` is the task-size range split into response-time
    /// buckets (deciles).
    pub fn new(size_lo: f64, size_hi: f64) -> Self {
        Self {
            lb: RunningRange::default(),
            rt: RunningRange::default(),
            size_lo,
            size_hi: size_hi.max(size_lo),
            rt_sum: [0.0; SIZE_BUCKETS],
            rt_count: [0; SIZE_BUCKETS],
            max_abs_r_lb: 0.0,
            max_abs_r_rt: 0.0,
        }
    }

    pub fn lb_range(&self) -> &RunningRange {
        &self.lb
    }

    pub fn rt_range(&self) -> &RunningRange {
        &self.rt
    }

    pub fn record_costs(&mut self, lb: f64, rt: f64) {
        self.lb.record(lb);
        self.rt.record(rt);
    }

    pub fn size_bucket(&self, size_mcycles: f64) -> usize {
        let span = self.size_hi - self.size_lo;
        if !(span > 0.0) {
            return 0;
        }
        let f = ((size_mcycles - self.size_lo) / span).clamp(0.0, 1.0);
        ((f * SIZE_BUCKETS as f64) as usize).min(SIZE_BUCKETS - 1)
    }

    /// Adds a response-time sample and returns the bucket mean including it.
    pub fn record_response(&mut self, size_mcycles: f64, rt_ms: f64) -> f64 {
        let b = self.size_bucket(size_mcycles);
        self.rt_sum[b] += rt_ms;
        self.rt_count[b] += 1;
        self.rt_sum[b] / self.rt_count[b] as f64
    }

    /// Bucket mean, or `None` before any sample landed in the bucket.
    pub fn mean_response(&self, size_mcycles: f64) -> Option<f64> {
        let b = self.size_bucket(size_mcycles);
        (self.rt_count[b] > 0).then(|| self.rt_sum[b] / self.rt_count[b] as f64)
    }

    pub fn record_rewards(&mut self, r_lb: f64, r_rt: f64) {
        if r_lb.is_finite() {
            self.max_abs_r_lb = self.max_abs_r_lb.max(r_lb.abs());
        }
        if r_rt.is_finite() {
            self.max_abs_r_rt = self.max_abs_r_rt.max(r_rt.abs());
        }
    }

    pub fn max_abs_lb_reward(&self) -> f64 {
        self.max_abs_r_lb
    }

    pub fn max_abs_rt_reward(&self) -> f64 {
        self.max_abs_r_rt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_cover_range() {
        let n = NormalizerState::new(100.0, 1100.0);
        assert_eq!(n.size_bucket(100.0), 0);
        assert_eq!(n.size_bucket(1100.0), SIZE_BUCKETS - 1);
        assert_eq!(n.size_bucket(650.0), 5);
        assert_eq!(n.size_bucket(-5.0), 0);
    }

    #[test]
    fn response_mean_includes_current() {
        let mut n = NormalizerState::new(0.0, 10.0);
        assert_eq!(n.mean_response(1.0), None);
        assert_eq!(n.record_response(1.0, 400.0), 400.0);
        assert_eq!(n.record_response(1.0, 600.0), 500.0);
        // other bucket untouched
        assert_eq!(n.mean_response(9.0), None);
    }

    #[test]
    fn reward_magnitudes() {
        let mut n = NormalizerState::default();
        n.record_rewards(-0.5, 3.0);
        n.record_rewards(0.2, -4.0);
        assert_eq!(n.max_abs_lb_reward(), 0.5);
        assert_eq!(n.max_abs_rt_reward(), 4.0);
    }
}
