use serde::{Deserialize, Serialize};

use super::policy::ActorCritic;
use crate::envs::Action;
use crate::error::{Error, Result};
use crate::numerics::{clip_grad_norm, Adam, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Active one-hot features of `o_t`.
    pub features: Vec<usize>,
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    steps: Vec<Transition>,
}

impl RolloutBuffer {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            steps: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.steps.push(t);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Generalised advantage estimates and discounted returns.
///
/// `last_value` bootstraps a trailing unfinished episode; it is ignored when
/// the final step is terminal.
pub fn compute_returns_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let (next_value, live) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 < n {
            (values[t + 1], 1.0)
        } else {
            (last_value, 1.0)
        };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// `(a - mean) / (std + 1e-8)` with the population standard deviation.
pub fn normalize(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub update_steps: usize,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 60,
            update_steps: 400,
            vf_coef: 0.5,
            ent_coef: 0.01,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("ppo: {msg}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma must lie in [0, 1) and gae_lambda in [0, 1]");
        }
        if self.clip <= 0.0 || self.epochs == 0 || self.update_steps == 0 {
            return bad("clip, epochs and update_steps must be positive");
        }
        Ok(())
    }
}

/// Everything one PPO objective needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Vec<Vec<usize>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn from_buffer(buffer: &RolloutBuffer, last_value: f64, cfg: &PpoConfig) -> Self {
        let steps = buffer.steps();
        let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
        let dones: Vec<bool> = steps.iter().map(|s| s.done).collect();
        let (adv, returns) = compute_returns_advantages(&rewards, &values, &dones, last_value, cfg.gamma, cfg.gae_lambda);
        Self {
            features: steps.iter().map(|s| s.features.clone()).collect(),
            actions: steps.iter().map(|s| s.action.index()).collect(),
            old_log_probs: steps.iter().map(|s| s.log_prob).collect(),
            advantages: normalize(&adv),
            returns,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    /// Fraction of samples whose ratio left `[1 - clip, 1 + clip]`.
    pub clip_fraction: f64,
}

/// Clipped surrogate term for one sample.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// PPO loss on `batch` and its gradient for every parameter of `net`.
pub fn loss_and_gradients(net: &ActorCritic, batch: &Batch, cfg: &PpoConfig) -> Result<(LossStats, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Empty("ppo batch".into()));
    }
    let n = batch.len();
    let mut tape = Tape::new();
    let bound = net.params().bind(&mut tape);
    let f = net.forward(&mut tape, bound.vars(), &batch.features)?;
    let logp = tape.log_softmax_rows(f.logits);
    let logp_a = tape.pick(logp, &batch.actions)?;
    let old = tape.leaf(Tensor::matrix(n, 1, batch.old_log_probs.clone())?);
    let diff = tape.sub(logp_a, old)?;
    let ratio = tape.exp(diff);
    let adv = tape.leaf(Tensor::matrix(n, 1, batch.advantages.clone())?);
    let unclipped = tape.mul(ratio, adv)?;
    let clipped_ratio = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let clipped = tape.mul(clipped_ratio, adv)?;
    let surrogate = tape.minimum(unclipped, clipped)?;
    let surrogate = tape.mean(surrogate);
    let policy = tape.scale(surrogate, -1.0);

    let targets = tape.leaf(Tensor::matrix(n, 1, batch.returns.clone())?);
    let err = tape.sub(f.values, targets)?;
    let sq = tape.mul(err, err)?;
    let value = tape.mean(sq);

    let probs = tape.exp(logp);
    let plogp = tape.mul(probs, logp)?;
    let neg_entropy = tape.sum(plogp);
    let entropy = tape.scale(neg_entropy, -1.0 / n as f64);

    let v_term = tape.scale(value, cfg.vf_coef);
    let e_term = tape.scale(entropy, -cfg.ent_coef);
    let partial = tape.add(policy, v_term)?;
    let total = tape.add(partial, e_term)?;

    let total_value = tape.value(total).item();
    if !total_value.is_finite() {
        return Err(Error::NonFinite(format!(
            "ppo loss (policy {}, value {}, entropy {})",
            tape.value(policy).item(),
            tape.value(value).item(),
            tape.value(entropy).item()
        )));
    }
    let outside = tape
        .value(ratio)
        .data()
        .iter()
        .filter(|r| (**r - 1.0).abs() > cfg.clip)
        .count();
    let stats = LossStats {
        total: total_value,
        policy: tape.value(policy).item(),
        value: tape.value(value).item(),
        entropy: tape.value(entropy).item(),
        clip_fraction: outside as f64 / n as f64,
    };
    let grads = tape.backward(total)?.collect(bound.vars());
    Ok((stats, grads))
}

/// `epochs` full-batch optimisation passes over the buffer, which is then cleared.
pub fn ppo_update(
    net: &mut ActorCritic,
    adam: &mut Adam,
    buffer: &mut RolloutBuffer,
    last_value: f64,
    cfg: &PpoConfig,
) -> Result<LossStats> {
    let batch = Batch::from_buffer(buffer, last_value, cfg);
    let mut stats = LossStats::default();
    for _ in 0..cfg.epochs {
        let (s, mut grads) = loss_and_gradients(net, &batch, cfg)?;
        clip_grad_norm(&mut grads, cfg.max_grad_norm);
        adam.step(net.params_mut(), &grads)?;
        stats = s;
    }
    buffer.clear();
    Ok(stats)
}
