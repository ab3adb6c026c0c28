use serde::{Deserialize, Serialize};

use super::NormalizerState;

/// Which cost the scheduler is asked to minimise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Objective {
    #[serde(rename = "lb")]
    LoadBalance,
    #[serde(rename = "rt")]
    ResponseTime,
    #[default]
    #[serde(rename = "weighted")]
    Weighted,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::LoadBalance => "lb",
            Objective::ResponseTime => "rt",
            Objective::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lb" => Ok(Objective::LoadBalance),
            "rt" => Ok(Objective::ResponseTime),
            "weighted" => Ok(Objective::Weighted),
            other => Err(format!("unknown objective `{other}` (expected lb, rt or weighted)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub penalty: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { penalty: -10.0, w1: 0.5, w2: 0.5 }
    }
}

/// Decrease in load-balance cost since the previous decision.
pub fn reward_load_balance(prev_cost: f64, cur_cost: f64, success: bool, cfg: &RewardConfig) -> f64 {
    if success {
        prev_cost - cur_cost
    } else {
        cfg.penalty
    }
}

/// How far the response time undercuts the running mean for its size class.
pub fn reward_response_time(mean_rt: f64, cur_rt: f64, success: bool, cfg: &RewardConfig) -> f64 {
    if success {
        mean_rt - cur_rt
    } else {
        cfg.penalty
    }
}

/// Both channels scaled by their running max magnitude, then weighted.
pub fn reward_weighted(r_lb: f64, r_rt: f64, success: bool, cfg: &RewardConfig, norm: &NormalizerState) -> f64 {
    if !success {
        return cfg.penalty;
    }
    let scale = |r: f64, m: f64| if m > 0.0 { (r / m).clamp(-1.0, 1.0) } else { 0.0 };
    cfg.w1 * scale(r_lb, norm.max_abs_lb_reward()) + cfg.w2 * scale(r_rt, norm.max_abs_rt_reward())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub lb: f64,
    pub rt: f64,
    pub weighted: f64,
}

impl RewardComponents {
    pub fn for_objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::LoadBalance => self.lb,
            Objective::ResponseTime => self.rt,
            Objective::Weighted => self.weighted,
        }
    }
}

/// Owns the normaliser and the previous load-balance cost for one run.
#[derive(Debug, Clone)]
pub struct RewardTracker {
    pub cfg: RewardConfig,
    pub norm: NormalizerState,
    prev_lb: Option<f64>,
}

impl RewardTracker {
    pub fn new(cfg: RewardConfig, norm: NormalizerState) -> Self {
        Self { cfg, norm, prev_lb: None }
    }

    /// Rewards for a successful placement. `lb_before` stands in for the
    /// previous decision's cost on the first decision of a run.
    pub fn on_success(&mut self, lb_before: f64, lb_after: f64, size_mcycles: f64, rt_ms: f64) -> RewardComponents {
        let prev = self.prev_lb.unwrap_or(lb_before);
        self.prev_lb = Some(lb_after);
        let mean = self.norm.record_response(size_mcycles, rt_ms);
        let lb = reward_load_balance(prev, lb_after, true, &self.cfg);
        let rt = reward_response_time(mean, rt_ms, true, &self.cfg);
        self.norm.record_rewards(lb, rt);
        let weighted = reward_weighted(lb, rt, true, &self.cfg, &self.norm);
        RewardComponents { lb, rt, weighted }
    }

    /// Overrides the cost the next decision is compared against, e.g. after
    /// a retry placed the task anyway.
    pub fn set_prev(&mut self, lb: f64) {
        self.prev_lb = Some(lb);
    }

    pub fn on_failure(&mut self, lb_now: f64) -> RewardComponents {
        self.prev_lb = Some(lb_now);
        let p = self.cfg.penalty;
        RewardComponents { lb: p, rt: p, weighted: p }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_balance_reward_examples() {
        let cfg = RewardConfig::default();
        assert!((reward_load_balance(0.04, 0.01, true, &cfg) - 0.03).abs() < 1e-15);
        assert!((reward_load_balance(0.01, 0.04, true, &cfg) + 0.03).abs() < 1e-15);
        assert_eq!(reward_load_balance(0.01, 0.04, false, &cfg), -10.0);
    }

    #[test]
    fn response_reward_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(reward_response_time(500.0, 400.0, true, &cfg), 100.0);
        assert_eq!(reward_response_time(500.0, 600.0, true, &cfg), -100.0);
        let mut t = RewardTracker::new(cfg, NormalizerState::new(0.0, 1000.0));
        let r = t.on_success(0.0, 0.0, 10.0, 321.0);
        assert_eq!(r.rt, 0.0);
    }

    #[test]
    fn weighted_reward_examples() {
        let cfg = RewardConfig::default();
        let mut norm = NormalizerState::default();
        norm.record_rewards(0.02, 150.0);
        assert_eq!(reward_weighted(0.02, 150.0, true, &cfg, &norm), 1.0);
        assert_eq!(reward_weighted(0.0, 0.0, true, &cfg, &norm), 0.0);
        assert_eq!(reward_weighted(0.0, 0.0, false, &cfg, &norm), -10.0);
        // channel without history contributes nothing
        let fresh = NormalizerState::default();
        assert_eq!(reward_weighted(1.0, 1.0, true, &cfg, &fresh), 0.0);
    }

    #[test]
    fn tracker_uses_previous_decision_cost() {
        let mut t = RewardTracker::new(RewardConfig::default(), NormalizerState::default());
        let r1 = t.on_success(0.0, 0.02, 0.5, 100.0);
        assert_eq!(r1.lb, -0.02);
        let r2 = t.on_success(0.05, 0.01, 0.5, 100.0);
        assert!((r2.lb - 0.01).abs() < 1e-15);
        let f = t.on_failure(0.03);
        assert_eq!(f.weighted, -10.0);
        let r3 = t.on_success(0.9, 0.02, 0.5, 100.0);
        assert!((r3.lb - 0.01).abs() < 1e-15);
    }

    #[test]
    fn objective_parsing() {
        assert_eq!("rt".parse::<Objective>().unwrap(), Objective::ResponseTime);
        assert!("x".parse::<Objective>().is_err());
    }
}
