use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ServerId;
use crate::neural::checkpoint::Checkpoint;
use crate::neural::{adam_step, backward_into, forward, forward_cached, Activation, AdamState, Grads, MlpParams};
use crate::ppo::argmax;
use crate::sim::{Decision, Feedback, Scheduler};
use crate::{Error, Result};

use super::Exploration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnHyper {
    pub lr: f64,
    pub gamma: f64,
    pub hidden: usize,
    pub replay_capacity: usize,
    pub batch: usize,
    pub target_sync: u64,
    pub exploration: Exploration,
}

impl Default for DqnHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            gamma: 0.99,
            hidden: 64,
            replay_capacity: 10_000,
            batch: 32,
            target_sync: 100,
            exploration: Exploration::default(),
        }
    }
}

impl DqnHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidHyper("lr must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidHyper("gamma must be in [0, 1]".into()));
        }
        if self.hidden == 0 || self.replay_capacity == 0 || self.batch == 0 || self.target_sync == 0 {
            return Err(Error::InvalidHyper("hidden, replay_capacity, batch and target_sync must be >= 1".into()));
        }
        self.exploration.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnTransition {
    pub state: Vec<f64>,
    pub action: ServerId,
    pub reward: f64,
    /// `None` for a terminal transition.
    pub next_state: Option<Vec<f64>>,
}

/// Fixed-capacity ring buffer; the oldest entry is overwritten first.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<DqnTransition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: DqnTransition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `k` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<&DqnTransition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..k).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

/// Mean squared TD error over the batch and its gradient with respect to the
/// online network; targets use `target` and carry no gradient.
pub fn td_loss_and_grads(
    online: &MlpParams,
    target: &MlpParams,
    batch: &[&DqnTransition],
    gamma: f64,
) -> Result<(f64, Grads)> {
    let mut g = Grads::zeros_like(online);
    if batch.is_empty() {
        return Ok((0.0, g));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let y = t.reward
            + match &t.next_state {
                Some(s) => gamma * forward(target, s)?.into_iter().fold(f64::NEG_INFINITY, f64::max),
                None => 0.0,
            };
        let cache = forward_cached(online, &t.state)?;
        let q = *cache.output.get(t.action).ok_or(Error::UnknownServer(t.action))?;
        loss += scale * (q - y) * (q - y);
        let mut dout = vec![0.0; online.output];
        dout[t.action] = 2.0 * scale * (q - y);
        backward_into(online, &t.state, &cache, &dout, &mut g.data)?;
    }
    Ok((loss, g))
}

pub struct DqnAgent {
    pub online: MlpParams,
    pub target: MlpParams,
    pub adam: AdamState,
    pub hyper: DqnHyper,
    pub replay: ReplayBuffer,
    pub epsilon: f64,
    pub greedy: bool,
    steps: u64,
    seed: u64,
    rng: ChaCha8Rng,
    last: Option<(Vec<f64>, ServerId)>,
    pending: Option<(Vec<f64>, ServerId, f64)>,
}

impl DqnAgent {
    pub fn new(input_len: usize, n_actions: usize, hyper: DqnHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let online = MlpParams::init(input_len, hyper.hidden, n_actions, Activation::Relu, &mut init);
        Ok(Self {
            target: online.clone(),
            adam: AdamState::for_params(&online),
            online,
            replay: ReplayBuffer::new(hyper.replay_capacity),
            epsilon: hyper.exploration.start,
            hyper,
            greedy: false,
            steps: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xd9_0a6e),
            last: None,
            pending: None,
        })
    }

    /// Gradient steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        forward(&self.online, state)
    }

    /// Stores the transition and takes one gradient step on a sampled batch.
    /// Returns the batch loss, or `None` when nothing was trained.
    pub fn dqn_step(&mut self, t: Option<DqnTransition>) -> Result<Option<f64>> {
        if let Some(t) = t {
            self.replay.push(t);
        }
        if self.replay.is_empty() {
            return Ok(None);
        }
        let batch = self.replay.sample(&mut self.rng, self.hyper.batch);
        let (loss, g) = td_loss_and_grads(&self.online, &self.target, &batch, self.hyper.gamma)?;
        adam_step(&mut self.online, &g, &mut self.adam, self.hyper.lr)?;
        self.steps += 1;
        if self.steps % self.hyper.target_sync == 0 {
            self.target = self.online.clone();
        }
        Ok(Some(loss))
    }

    /// Multiplicative epsilon decay, floored.
    pub fn end_block(&mut self) {
        self.epsilon = self.hyper.exploration.next(self.epsilon);
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let h = &self.hyper;
        let mut c = Checkpoint::new("dqn")
            .with_meta("lr", h.lr)
            .with_meta("gamma", h.gamma)
            .with_meta("hidden", h.hidden)
            .with_meta("replay_capacity", h.replay_capacity)
            .with_meta("batch", h.batch)
            .with_meta("target_sync", h.target_sync)
            .with_meta("eps_start", h.exploration.start)
            .with_meta("eps_decay", h.exploration.decay)
            .with_meta("eps_min", h.exploration.min)
            .with_meta("epsilon", self.epsilon)
            .with_meta("steps", self.steps)
            .with_meta("seed", self.seed);
        c.push_network("online", &self.online, Some(&self.adam));
        c.push_network("target", &self.target, None);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != "dqn" {
            return Err(Error::Checkpoint(format!("expected a dqn checkpoint, found `{}`", c.kind)));
        }
        let hyper = DqnHyper {
            lr: c.meta_parse("lr")?,
            gamma: c.meta_parse("gamma")?,
            hidden: c.meta_parse("hidden")?,
            replay_capacity: c.meta_parse("replay_capacity")?,
            batch: c.meta_parse("batch")?,
            target_sync: c.meta_parse("target_sync")?,
            exploration: Exploration {
                start: c.meta_parse("eps_start")?,
                decay: c.meta_parse("eps_decay")?,
                min: c.meta_parse("eps_min")?,
            },
        };
        hyper.validate()?;
        let online = c.network("online")?;
        let target = c.network("target")?;
        if !online.params.same_shape(&target.params) {
            return Err(Error::Checkpoint("inconsistent network shapes".into()));
        }
        let seed: u64 = c.meta_parse("seed")?;
        Ok(Self {
            adam: online.adam.clone().unwrap_or_else(|| AdamState::for_params(&online.params)),
            online: online.params.clone(),
            target: target.params.clone(),
            replay: ReplayBuffer::new(hyper.replay_capacity),
            hyper,
            epsilon: c.meta_parse("epsilon")?,
            greedy: true,
            steps: c.meta_parse("steps")?,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xd9_0a6e),
            last: None,
            pending: None,
        })
    }
}

impl Scheduler for DqnAgent {
    fn name(&self) -> &str {
        "dqn"
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<ServerId> {
        let s = d.state.values();
        if let Some((ps, a, r)) = self.pending.take() {
            self.dqn_step(Some(DqnTransition { state: ps, action: a, reward: r, next_state: Some(s.to_vec()) }))?;
        }
        let a = if !self.greedy && self.rng.gen::<f64>() < self.epsilon {
            self.rng.gen_range(0..self.online.output)
        } else {
            argmax(&self.q_values(s)?)
        };
        if !self.greedy {
            self.last = Some((s.to_vec(), a));
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
