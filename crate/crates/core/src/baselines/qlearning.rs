use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ServerId;
use crate::ppo::argmax;
use crate::sim::{Decision, Feedback, Scheduler};
use crate::{Error, Result};

use super::Exploration;

/// Bin index of each feature; features are already scaled to `[0, 1]`.
pub fn discretize_state(state: &[f64], bins: usize) -> Vec<u8> {
    let b = bins.max(1);
    state
        .iter()
        .map(|&x| {
            let x = if x.is_finite() { x.clamp(0.0, 1.0) } else { 0.0 };
            ((x * b as f64) as usize).min(b - 1) as u8
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QHyper {
    pub alpha: f64,
    pub gamma: f64,
    pub bins: usize,
    pub exploration: Exploration,
}

impl Default for QHyper {
    fn default() -> Self {
        Self { alpha: 0.1, gamma: 0.9, bins: 4, exploration: Exploration::default() }
    }
}

impl QHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidHyper("alpha must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidHyper("gamma must be in [0, 1]".into()));
        }
        if !(1..=255).contains(&self.bins) {
            return Err(Error::InvalidHyper("bins must be in 1..=255".into()));
        }
        self.exploration.validate()
    }
}

/// Tabular action values keyed by discretised state. Unvisited states read
/// as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_actions: usize,
    pub alpha: f64,
    pub gamma: f64,
    values: BTreeMap<Vec<u8>, Vec<f64>>,
}

impl QTable {
    pub fn new(n_actions: usize, alpha: f64, gamma: f64) -> Self {
        Self { n_actions, alpha, gamma, values: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, key: &[u8], action: ServerId) -> f64 {
        self.values.get(key).map_or(0.0, |v| v[action])
    }

    pub fn row(&self, key: &[u8]) -> Vec<f64> {
        self.values.get(key).cloned().unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    /// Greedy action; ties go to the lowest index.
    pub fn best_action(&self, key: &[u8]) -> ServerId {
        self.values.get(key).map_or(0, |v| argmax(v))
    }

    pub fn max_value(&self, key: &[u8]) -> f64 {
        self.values.get(key).map_or(0.0, |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// `Q(s,a) += alpha * (r + gamma * max Q(s',.) - Q(s,a))`; `next = None`
    /// marks a terminal transition. Returns the TD error.
    pub fn qlearning_step(&mut self, s: &[u8], a: ServerId, r: f64, next: Option<&[u8]>) -> Result<f64> {
        if a >= self.n_actions {
            return Err(Error::UnknownServer(a));
        }
        let target = r + next.map_or(0.0, |n| self.gamma * self.max_value(n));
        let n = self.n_actions;
        let row = self.values.entry(s.to_vec()).or_insert_with(|| vec![0.0; n]);
        let td = target - row[a];
        row[a] += self.alpha * td;
        Ok(td)
    }

    /// Header lines, then one `key<TAB>values` line per state in key order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "qtable 1")?;
        writeln!(w, "actions {}", self.n_actions)?;
        writeln!(w, "alpha {}", self.alpha)?;
        writeln!(w, "gamma {}", self.gamma)?;
        for (k, v) in &self.values {
            let mut line = String::with_capacity(k.len() + 24 * v.len());
            for b in k {
                let _ = write!(line, "{b:x}");
            }
            line.push('\t');
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            line.push_str(&vals.join(" "));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(format!("qtable: {m}"));
        let mut lines = r.lines();
        let mut header = |name: &str| -> Result<String> {
            let l = lines.next().ok_or_else(|| bad(format!("missing `{name}`")))??;
            match l.split_once(' ') {
                Some((k, v)) if k == name => Ok(v.to_string()),
                _ => Err(bad(format!("expected `{name}`, got `{l}`"))),
            }
        };
        if header("qtable")? != "1" {
            return Err(bad("unsupported version".into()));
        }
        let n_actions: usize = header("actions")?.parse().map_err(|_| bad("bad action count".into()))?;
        let alpha: f64 = header("alpha")?.parse().map_err(|_| bad("bad alpha".into()))?;
        let gamma: f64 = header("gamma")?.parse().map_err(|_| bad("bad gamma".into()))?;
        let mut t = QTable::new(n_actions, alpha, gamma);
        for l in lines {
            let l = l?;
            if l.is_empty() {
                continue;
            }
            let (k, v) = l.split_once('\t').ok_or_else(|| bad(format!("bad row `{l}`")))?;
            let key: Vec<u8> = k
                .chars()
                .map(|c| c.to_digit(16).map(|d| d as u8).ok_or_else(|| bad(format!("bad key `{k}`"))))
                .collect::<Result<_>>()?;
            let vals: Vec<f64> =
                v.split(' ').map(|x| x.parse().map_err(|_| bad(format!("bad value `{x}`")))).collect::<Result<_>>()?;
            if vals.len() != n_actions {
                return Err(bad(format!("row has {} values, expected {n_actions}", vals.len())));
            }
            t.values.insert(key, vals);
        }
        Ok(t)
    }
}

/// Epsilon-greedy tabular agent. The update for a decision happens when the
/// next state is observed.
pub struct QLearningAgent {
    pub table: QTable,
    pub hyper: QHyper,
    pub epsilon: f64,
    pub greedy: bool,
    rng: ChaCha8Rng,
    last: Option<(Vec<u8>, ServerId)>,
    pending: Option<(Vec<u8>, ServerId, f64)>,
}

impl QLearningAgent {
    pub fn new(n_actions: usize, hyper: QHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            table: QTable::new(n_actions, hyper.alpha, hyper.gamma),
            epsilon: hyper.exploration.start,
            hyper,
            greedy: false,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x0a_7ab1e),
            last: None,
            pending: None,
        })
    }

    /// Multiplicative epsilon decay, floored.
    pub fn end_block(&mut self) {
        self.epsilon = self.hyper.exploration.next(self.epsilon);
    }
}

impl Scheduler for QLearningAgent {
    fn name(&self) -> &str {
        "qlearning"
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<ServerId> {
        let key = discretize_state(d.state.values(), self.hyper.bins);
        if let Some((s, a, r)) = self.pending.take() {
            self.table.qlearning_step(&s, a, r, Some(&key))?;
        }
        let a = if !self.greedy && self.rng.gen::<f64>() < self.epsilon {
            self.rng.gen_range(0..self.table.n_actions)
        } else {
            self.table.best_action(&key)
        };
        if !self.greedy {
            self.last = Some((key, a));
        }
        Ok(a)
    }

    fn observe(&mut self, fb: &Feedback<'_>) -> Result<()> {
        if let Some((s, a)) = self.last.take() {
            self.pending = Some((s, a, fb.reward));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_unit_interval() {
        assert_eq!(discretize_state(&[0.0, 0.24, 0.25, 0.5, 0.99, 1.0, 7.0, -1.0], 4), vec![0, 0, 1, 2, 3, 3, 3, 0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let t = QTable::new(3, 0.1, 0.9);
        assert_eq!(t.best_action(&[1, 2]), 0);
        let mut t = QTable::new(3, 0.5, 0.9);
        t.qlearning_step(&[0], 1, 1.0, None).unwrap();
        t.qlearning_step(&[0], 2, 1.0, None).unwrap();
        assert_eq!(t.best_action(&[0]), 1);
    }

    #[test]
    fn single_step_update() {
        let mut t = QTable::new(2, 0.1, 0.9);
        t.qlearning_step(&[1], 0, 2.0, None).unwrap();
        assert!((t.get(&[1], 0) - 0.2).abs() < 1e-15);
        t.qlearning_step(&[0], 1, 0.0, Some(&[1])).unwrap();
        assert!((t.get(&[0], 1) - 0.1 * 0.9 * 0.2).abs() < 1e-15);
        assert!(t.qlearning_step(&[0], 2, 0.0, None).is_err());
    }

    #[test]
    fn text_round_trip_is_exact_and_sorted() {
        let mut t = QTable::new(3, 0.1, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let k: Vec<u8> = (0..5).map(|_| rng.gen_range(0..4)).collect();
            t.qlearning_step(&k, rng.gen_range(0..3), rng.gen_range(-1.0..1.0), Some(&[0, 1, 2, 3, 0])).unwrap();
        }
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = QTable::read_from(&buf[..]).unwrap();
        assert_eq!(back, t);
        let text = String::from_utf8(buf).unwrap();
        let keys: Vec<&str> = text.lines().skip(4).map(|l| l.split('\t').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn epsilon_schedule() {
        let mut a = QLearningAgent::new(2, QHyper::default(), 0).unwrap();
        assert_eq!(a.epsilon, 1.0);
        a.end_block();
        assert!((a.epsilon - 0.9).abs() < 1e-15);
        for _ in 0..100 {
            a.end_block();
        }
        assert_eq!(a.epsilon, 0.05);
    }
}
