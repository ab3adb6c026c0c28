use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ServerId, ServerSpec};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::{
    adam_step, backward_into, entropy, forward, forward_cached, log_softmax, softmax, Activation, AdamState, Grads,
    MlpParams,
};
use crate::sim::{Decision, Feedback, Scheduler};
use crate::{par, Error, Result};

use super::rollout::{compute_advantages, RolloutBuffer, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoHyper {
    pub clip: f64,
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub coef_policy: f64,
    pub coef_value: f64,
    pub coef_entropy: f64,
    /// Rollout length T.
    pub horizon: usize,
    /// Update epochs K.
    pub epochs: usize,
    pub hidden: usize,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            clip: 0.3,
            gamma: 0.9,
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            coef_policy: 1.0,
            coef_value: 0.5,
            coef_entropy: 0.01,
            horizon: 64,
            epochs: 30,
            hidden: 64,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyper(m.to_string()));
        if !(self.clip > 0.0) {
            return bad("clip must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(self.coef_policy >= 0.0 && self.coef_value >= 0.0 && self.coef_entropy >= 0.0) {
            return bad("loss coefficients must be >= 0");
        }
        if self.epochs == 0 {
            return bad("K >= 1");
        }
        if self.horizon == 0 {
            return bad("T >= 1");
        }
        if self.hidden == 0 {
            return bad("hidden >= 1");
        }
        Ok(())
    }
}

/// `r` limited to `[1 - eps, 1 + eps]`.
pub fn clip_ratio(r: f64, eps: f64) -> f64 {
    if r < 1.0 - eps {
        1.0 - eps
    } else if r > 1.0 + eps {
        1.0 + eps
    } else {
        r
    }
}

/// Server count and capacities; a change triggers re-initialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FleetFingerprint(Vec<(u32, u64, u64)>);

impl FleetFingerprint {
    pub fn of(fleet: &[ServerSpec]) -> Self {
        Self(fleet.iter().map(|s| (s.cpu_cores, s.cpu_freq_mhz.to_bits(), s.ram_size_gb.to_bits())).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn encode(&self) -> String {
        self.0.iter().map(|(c, f, r)| format!("{c}:{f:x}:{r:x}")).collect::<Vec<_>>().join(",")
    }

    fn decode(s: &str) -> Result<Self> {
        let bad = || Error::Checkpoint(format!("bad fleet fingerprint `{s}`"));
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let mut it = part.split(':');
            let c = it.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            let f = it.next().and_then(|x| u64::from_str_radix(x, 16).ok()).ok_or_else(bad)?;
            let r = it.next().and_then(|x| u64::from_str_radix(x, 16).ok()).ok_or_else(bad)?;
            out.push((c, f, r));
        }
        Ok(Self(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Loss terms summed over the rollout.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossDiagnostics {
    pub loss: f64,
    pub l_clip: f64,
    pub l_vf: f64,
    pub l_et: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    pub first_epoch: LossDiagnostics,
    pub last_epoch: LossDiagnostics,
    pub mean_advantage: f64,
}

/// Argmax with ties to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// CLIP-PPO with a new actor, a frozen old actor and a critic.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub actor: MlpParams,
    pub actor_old: MlpParams,
    pub critic: MlpParams,
    pub adam_actor: AdamState,
    pub adam_critic: AdamState,
    pub hyper: PpoHyper,
    pub buffer: RolloutBuffer,
    pub mode: ActionMode,
    fingerprint: FleetFingerprint,
    seed: u64,
    generation: u64,
    updates: u64,
    rng: ChaCha8Rng,
    pending: Option<(usize, f64, f64)>,
}

impl PpoAgent {
    pub fn new(input_len: usize, fleet: &[ServerSpec], hyper: PpoHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if fleet.is_empty() {
            return Err(Error::EmptyFleet);
        }
        let fingerprint = FleetFingerprint::of(fleet);
        let (actor, critic) = Self::fresh_networks(input_len, fingerprint.len(), &hyper, seed, 0);
        Ok(Self {
            actor_old: actor.clone(),
            adam_actor: AdamState::for_params(&actor),
            adam_critic: AdamState::for_params(&critic),
            actor,
            critic,
            hyper,
            buffer: RolloutBuffer::default(),
            mode: ActionMode::Sample,
            fingerprint,
            seed,
            generation: 0,
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ac71),
            pending: None,
        })
    }

    fn fresh_networks(input: usize, actions: usize, h: &PpoHyper, seed: u64, generation: u64) -> (MlpParams, MlpParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(generation.wrapping_mul(0x9e37_79b9)));
        let actor = MlpParams::init(input, h.hidden, actions, Activation::Tanh, &mut rng);
        let critic = MlpParams::init(input, h.hidden, 1, Activation::Tanh, &mut rng);
        (actor, critic)
    }

    pub fn input_len(&self) -> usize {
        self.actor.input
    }

    pub fn n_actions(&self) -> usize {
        self.actor.output
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn fingerprint(&self) -> &FleetFingerprint {
        &self.fingerprint
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&forward(&self.actor, state)?))
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(forward(&self.critic, state)?[0])
    }

    /// `(action, log_prob, value)` for `state`.
    pub fn select_action(&mut self, state: &[f64], mode: ActionMode) -> Result<(usize, f64, f64)> {
        let logits = forward(&self.actor, state)?;
        let logp = log_softmax(&logits);
        let action = match mode {
            ActionMode::Greedy => argmax(&logits),
            ActionMode::Sample => {
                let u: f64 = self.rng.gen();
                let mut acc = 0.0;
                let mut pick = logp.len() - 1;
                for (i, lp) in logp.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
        };
        Ok((action, logp[action], self.value(state)?))
    }

    /// Records the outcome of the last selected action.
    pub fn record(&mut self, state: &[f64], reward: f64, success: bool) {
        if let Some((action, log_prob, value)) = self.pending.take() {
            self.buffer.push(Transition { state: state.to_vec(), action, reward, value, log_prob, success });
        }
    }

    pub fn rollout_full(&self) -> bool {
        self.buffer.len() >= self.hyper.horizon
    }

    /// Re-initializes networks, optimizers and the buffer when the fleet
    /// differs from the one the agent was built for.
    pub fn reset_on_fleet_change(&mut self, fleet: &[ServerSpec]) -> bool {
        let fp = FleetFingerprint::of(fleet);
        if fp == self.fingerprint {
            return false;
        }
        self.generation += 1;
        let (actor, critic) = Self::fresh_networks(self.input_len(), fp.len(), &self.hyper, self.seed, self.generation);
        self.adam_actor = AdamState::for_params(&actor);
        self.adam_critic = AdamState::for_params(&critic);
        self.actor_old = actor.clone();
        self.actor = actor;
        self.critic = critic;
        self.fingerprint = fp;
        self.buffer.clear();
        self.pending = None;
        true
    }

    /// K full-batch epochs, then `actor_old <- actor` and the buffer is
    /// cleared. `bootstrap_state` is the observation following the last
    /// transition.
    pub fn update(&mut self, bootstrap_state: Option<&[f64]>) -> Result<UpdateReport> {
        if self.buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        self.buffer.bootstrap_value = match bootstrap_state {
            Some(s) => self.value(s)?,
            None => 0.0,
        };
        let adv = compute_advantages(&self.buffer, self.hyper.gamma)?;
        let targets: Vec<f64> = adv.iter().zip(&self.buffer.transitions).map(|(a, t)| a + t.value).collect();
        let old_logp = self.old_log_probs()?;
        let mut first = None;
        let mut last = LossDiagnostics::default();
        for _ in 0..self.hyper.epochs {
            let (diag, ga, gc) = self.loss_and_grads(&adv, &targets, &old_logp, true)?;
            adam_step(&mut self.actor, &ga, &mut self.adam_actor, self.hyper.lr_actor)?;
            adam_step(&mut self.critic, &gc, &mut self.adam_critic, self.hyper.lr_critic)?;
            first.get_or_insert(diag);
            last = diag;
        }
        self.actor_old = self.actor.clone();
        let mean_advantage = adv.iter().sum::<f64>() / adv.len() as f64;
        self.buffer.clear();
        self.updates += 1;
        Ok(UpdateReport { first_epoch: first.unwrap_or_default(), last_epoch: last, mean_advantage })
    }

    fn old_log_probs(&self) -> Result<Vec<f64>> {
        let old = &self.actor_old;
        par::map(&self.buffer.transitions, |t| -> Result<f64> {
            Ok(log_softmax(&forward(old, &t.state)?)[t.action])
        })
        .into_iter()
        .collect()
    }

    /// Composite loss `-a_c L_CLIP + a_v L_VF - a_e L_ET` over the buffer,
    /// with critic targets `R_t = A_t + V_old(s_t)`.
    pub fn ppo_loss(&self, advantages: &[f64]) -> Result<(f64, LossDiagnostics)> {
        if advantages.len() != self.buffer.len() {
            return Err(Error::ShapeMismatch { expected: self.buffer.len(), got: advantages.len() });
        }
        let targets: Vec<f64> = advantages.iter().zip(&self.buffer.transitions).map(|(a, t)| a + t.value).collect();
        let old_logp = self.old_log_probs()?;
        let (diag, _, _) = self.loss_and_grads(advantages, &targets, &old_logp, false)?;
        Ok((diag.loss, diag))
    }

    /// Probability ratios `pi_theta(a|s) / pi_old(a|s)` for the buffer.
    pub fn ratios(&self) -> Result<Vec<f64>> {
        let old = self.old_log_probs()?;
        self.buffer
            .transitions
            .iter()
            .zip(old)
            .map(|(t, lo)| Ok((log_softmax(&forward(&self.actor, &t.state)?)[t.action] - lo).exp()))
            .collect()
    }

    fn loss_and_grads(
        &self,
        adv: &[f64],
        targets: &[f64],
        old_logp: &[f64],
        want_grads: bool,
    ) -> Result<(LossDiagnostics, Grads, Grads)> {
        let h = &self.hyper;
        let actor = &self.actor;
        let critic = &self.critic;
        let idx: Vec<usize> = (0..self.buffer.len()).collect();
        let parts = par::map(&idx, |&i| -> Result<PerTransition> {
            let t = &self.buffer.transitions[i];
            let ac = forward_cached(actor, &t.state)?;
            let cc = forward_cached(critic, &t.state)?;
            let logp = log_softmax(&ac.output);
            let p = softmax(&ac.output);
            let ent = entropy(&p);
            let ratio = (logp[t.action] - old_logp[i]).exp();
            let clipped = clip_ratio(ratio, h.clip);
            let unclipped_term = ratio * adv[i];
            let clipped_term = clipped * adv[i];
            let surrogate = unclipped_term.min(clipped_term);
            let v = cc.output[0];
            let v_err = v - targets[i];

            let mut ga = Vec::new();
            let mut gc = Vec::new();
            if want_grads {
                // d surrogate / d logp(a): A * ratio on the unclipped branch, 0 when clipped
                let g = if unclipped_term <= clipped_term { adv[i] * ratio } else { 0.0 };
                let mut dz = vec![0.0; p.len()];
                for (j, d) in dz.iter_mut().enumerate() {
                    let onehot = if j == t.action { 1.0 } else { 0.0 };
                    let lnp = if p[j] > 0.0 { p[j].ln() } else { 0.0 };
                    *d = -h.coef_policy * g * (onehot - p[j]) + h.coef_entropy * p[j] * (lnp + ent);
                }
                ga = vec![0.0; actor.len()];
                backward_into(actor, &t.state, &ac, &dz, &mut ga)?;
                gc = vec![0.0; critic.len()];
                backward_into(critic, &t.state, &cc, &[2.0 * h.coef_value * v_err], &mut gc)?;
            }
            Ok(PerTransition { surrogate, v_err2: v_err * v_err, ent, ratio, clipped: clipped != ratio, ga, gc })
        });
        let parts: Vec<PerTransition> = parts.into_iter().collect::<Result<_>>()?;

        let n = parts.len() as f64;
        let mut d = LossDiagnostics::default();
        for p in &parts {
            d.l_clip += p.surrogate;
            d.l_vf += p.v_err2;
            d.l_et += p.ent;
            d.mean_ratio += p.ratio;
            d.clip_fraction += if p.clipped { 1.0 } else { 0.0 };
        }
        d.mean_ratio /= n;
        d.clip_fraction /= n;
        d.loss = -h.coef_policy * d.l_clip + h.coef_value * d.l_vf - h.coef_entropy * d.l_et;

        let mut ga = Grads::zeros_like(actor);
        let mut gc = Grads::zeros_like(critic);
        if want_grads {
            let (a_parts, c_parts): (Vec<_>, Vec<_>) = parts.into_iter().map(|p| (p.ga, p.gc)).unzip();
            ga.data = par::sum_in_order(&a_parts, actor.len());
            gc.data = par::sum_in_order(&c_parts, critic.len());
        }
        Ok((d, ga, gc))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let h = &self.hyper;
        let mut c = Checkpoint::new("ppo")
            .with_meta("clip", h.clip)
            .with_meta("gamma", h.gamma)
            .with_meta("lr_actor", h.lr_actor)
            .with_meta("lr_critic", h.lr_critic)
            .with_meta("coef_policy", h.coef_policy)
            .with_meta("coef_value", h.coef_value)
            .with_meta("coef_entropy", h.coef_entropy)
            .with_meta("horizon", h.horizon)
            .with_meta("epochs", h.epochs)
            .with_meta("hidden", h.hidden)
            .with_meta("seed", self.seed)
            .with_meta("generation", self.generation)
            .with_meta("updates", self.updates)
            .with_meta("fleet", self.fingerprint.encode());
        c.push_network("actor", &self.actor, Some(&self.adam_actor));
        c.push_network("actor_old", &self.actor_old, None);
        c.push_network("critic", &self.critic, Some(&self.adam_critic));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != "ppo" {
            return Err(Error::Checkpoint(format!("expected a ppo checkpoint, found `{}`", c.kind)));
        }
        let hyper = PpoHyper {
            clip: c.meta_parse("clip")?,
            gamma: c.meta_parse("gamma")?,
            lr_actor: c.meta_parse("lr_actor")?,
            lr_critic: c.meta_parse("lr_critic")?,
            coef_policy: c.meta_parse("coef_policy")?,
            coef_value: c.meta_parse("coef_value")?,
            coef_entropy: c.meta_parse("coef_entropy")?,
            horizon: c.meta_parse("horizon")?,
            epochs: c.meta_parse("epochs")?,
            hidden: c.meta_parse("hidden")?,
        };
        hyper.validate()?;
        let seed: u64 = c.meta_parse("seed")?;
        let actor = c.network("actor")?;
        let critic = c.network("critic")?;
        let actor_old = c.network("actor_old")?;
        if !actor.params.same_shape(&actor_old.params) || critic.params.input != actor.params.input {
            return Err(Error::Checkpoint("inconsistent network shapes".into()));
        }
        let fingerprint = FleetFingerprint::decode(c.meta("fleet").unwrap_or(""))?;
        if fingerprint.len() != actor.params.output {
            return Err(Error::Checkpoint("fleet size does not match actor output".into()));
        }
        Ok(Self {
            adam_actor: actor.adam.clone().unwrap_or_else(|| AdamState::for_params(&actor.params)),
            adam_critic: critic.adam.clone().unwrap_or_else(|| AdamState::for_params(&critic.params)),
            actor: actor.params.clone(),
            actor_old: actor_old.params.clone(),
            critic: critic.params.clone(),
            hyper,
            buffer: RolloutBuffer::default(),
            mode: ActionMode::Greedy,
            fingerprint,
            seed,
            generation: c.meta_parse("generation")?,
            updates: c.meta_parse("updates")?,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ac71),
            pending: None,
        })
    }

    /// Checks the agent fits a fleet of this shape.
    pub fn check_compatible(&self, fleet: &[ServerSpec], input_len: usize) -> Result<()> {
        if fleet.len() != self.n_actions() || input_len != self.input_len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} servers and {} features, got {} and {}",
                self.n_actions(),
                self.input_len(),
                fleet.len(),
                input_len
            )));
        }
        Ok(())
    }
}

struct PerTransition {
    surrogate: f64,
    v_err2: f64,
    ent: f64,
    ratio: f64,
    clipped: bool,
    ga: Vec<f64>,
    gc: Vec<f64>,
}

impl Scheduler for PpoAgent {
    fn name(&self) -> &str {
        "ppo"
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<ServerId> {
        let mode = self.mode;
        let (a, logp, v) = self.select_action(d.state, mode)?;
        if mode == ActionMode::Sample {
            self.pending = Some((a, logp, v));
        }
        Ok(a)
    }

    /// Most probable server among the feasible ones.
    fn retry(&mut self, d: &Decision<'_>) -> Result<ServerId> {
        let p = self.probabilities(d.state)?;
        let mut best = d.feasible[0];
        for &k in d.feasible {
            if p[k] > p[best] {
                best = k;
            }
        }
        Ok(best)
    }

    fn observe(&mut self, fb: &Feedback<'_>) -> Result<()> {
        self.record(fb.state, fb.reward, fb.success);
        Ok(())
    }
}
