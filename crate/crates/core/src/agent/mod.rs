//! PPO actor-critic trained on the composite reward.

mod policy;
mod ppo;
mod record;

use std::collections::VecDeque;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use policy::{ActOutput, ActorCritic, Forward};
pub use ppo::{
    clipped_surrogate, compute_returns_advantages, loss_and_gradients, normalize, ppo_update, Batch, LossStats, PpoConfig,
    RolloutBuffer, Transition,
};
pub use record::{EpisodeRecord, RunRecord};

use crate::envs::{EgoObservation, EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig};
use crate::reward::{breakdown, dominance_check, IntrinsicMode, VcConfig};
use crate::smann::SmannModel;

/// The last `l` observations, padded by repeating the first one.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsWindow {
    len: usize,
    buf: VecDeque<EgoObservation>,
}

impl ObsWindow {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "window length must be positive");
        Self {
            len,
            buf: VecDeque::with_capacity(len),
        }
    }

    /// Clears the window and fills it with `first`.
    pub fn reset(&mut self, first: EgoObservation) {
        self.buf.clear();
        self.buf.extend(std::iter::repeat_n(first, self.len));
    }

    pub fn push(&mut self, obs: EgoObservation) {
        if self.buf.is_empty() {
            self.reset(obs);
            return;
        }
        if self.buf.len() == self.len {
            self.buf.pop_front();
        }
        self.buf.push_back(obs);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn to_vec(&self) -> Vec<EgoObservation> {
        self.buf.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub hidden: usize,
    pub window_len: usize,
    pub ppo: PpoConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            window_len: 3,
            ppo: PpoConfig::default(),
        }
    }
}

/// Which reward the agent optimises.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub mode: IntrinsicMode,
    /// When false the extrinsic term is left out of the composite reward.
    pub extrinsic: bool,
    pub vc: VcConfig,
}

impl RewardSpec {
    pub fn extrinsic_only() -> Self {
        Self {
            mode: IntrinsicMode::None,
            extrinsic: true,
            vc: VcConfig::default(),
        }
    }
}

/// Runs PPO for `episodes` episodes and records every episode.
///
/// Each step: act, step the world, append the new observation to the window,
/// score the window with the frozen classifier, form the composite reward and
/// buffer it. The policy is updated whenever the buffer holds `update_steps`
/// transitions.
pub fn train_loop(
    env_config: &EnvConfig,
    smann: Option<&SmannModel>,
    reward: &RewardSpec,
    cfg: &AgentConfig,
    episodes: usize,
    seed: u64,
) -> Result<RunRecord> {
    cfg.ppo.validate()?;
    reward.vc.validate()?;
    let mut env = env_config.build()?;
    let smann = match (reward.mode, smann) {
        (IntrinsicMode::None, _) => None,
        (_, None) => return Err(Error::Config("intrinsic reward requires a trained classifier".into())),
        (_, Some(m)) if !m.is_frozen() => return Err(Error::NotFrozen),
        (_, Some(m)) => {
            if m.config().window_len != cfg.window_len {
                return Err(Error::WindowLength {
                    expected: m.config().window_len,
                    got: cfg.window_len,
                });
            }
            Some(m)
        }
    };
    if reward.mode != IntrinsicMode::None {
        let ext_max = if reward.extrinsic { env.max_abs_extrinsic() } else { 0.0 };
        dominance_check(&reward.vc, ext_max);
    }

    let mut net = ActorCritic::new(env.view(), cfg.hidden, seed)?;
    let mut adam = Adam::new(net.params(), AdamConfig::with_lr(cfg.ppo.lr));
    let mut act_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_A5A5_5A5A);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0F0F_F0F0_0F0F_F0F0);
    let mut buffer = RolloutBuffer::with_capacity(cfg.ppo.update_steps);
    let mut window = ObsWindow::new(cfg.window_len);
    let mut record = RunRecord::default();

    for episode in 0..episodes {
        let mut obs = env.reset(env_rng.next_u64());
        window.reset(obs.clone());
        let mut ep = EpisodeRecord::new(episode);
        loop {
            let out = net.act(&obs, &mut act_rng)?;
            let step = env.step(out.action)?;
            window.push(step.observation.clone());
            let p = match smann {
                Some(m) => m.infer(&window.to_vec())?,
                None => [0.0; 2],
            };
            let r_ext = if reward.extrinsic { step.reward } else { 0.0 };
            let rb = breakdown(r_ext, p, &reward.vc, reward.mode);
            ep.length += 1;
            ep.ext_return += step.reward;
            ep.intr_return += rb.r_vic;
            ep.composite_return += rb.composite;
            buffer.push(Transition {
                features: obs.active_features(),
                action: out.action,
                log_prob: out.log_prob,
                value: out.value,
                reward: rb.composite,
                done: step.done,
            });
            obs = step.observation;
            if buffer.len() >= cfg.ppo.update_steps {
                let last_value = if step.done { 0.0 } else { net.value(&obs)? };
                let stats = ppo_update(&mut net, &mut adam, &mut buffer, last_value, &cfg.ppo)?;
                log::debug!("episode {episode}: ppo loss {:.4} entropy {:.3}", stats.total, stats.entropy);
            }
            if step.done {
                ep.termination = step.cause;
                break;
            }
        }
        record.episodes.push(ep);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::script_both;
    use crate::envs::{CellCode, RingConfig, SidewalkConfig};
    use crate::smann::{SmannConfig, TrainConfig};

    fn o(code: CellCode) -> EgoObservation {
        EgoObservation::from_cells(1, vec![code])
    }

    #[test]
    fn window_pads_then_slides() {
        let mut w = ObsWindow::new(3);
        w.reset(o(CellCode::Walkway));
        assert_eq!(w.to_vec(), vec![o(CellCode::Walkway); 3]);
        w.push(o(CellCode::Street));
        w.push(o(CellCode::Goal));
        w.push(o(CellCode::Grass));
        assert_eq!(w.to_vec(), vec![o(CellCode::Street), o(CellCode::Goal), o(CellCode::Grass)]);
        assert_eq!(w.len(), 3);
    }

    fn small() -> AgentConfig {
        AgentConfig {
            ppo: PpoConfig { update_steps: 64, epochs: 2, ..PpoConfig::default() },
            ..AgentConfig::default()
        }
    }

    fn frozen(env: &EnvConfig) -> SmannModel {
        let demos = script_both(env, 6, 3, 0).unwrap();
        let cfg = SmannConfig { embed_dim: 8, memory_slots: 16, read_heads: 2, write_heads: 2, depth: 3, hidden: 16, ..SmannConfig::default() };
        let mut m = SmannModel::new(cfg, env.view(), 0).unwrap();
        m.train(&demos, &TrainConfig { epochs: 2, ..TrainConfig::default() }).unwrap();
        m.freeze();
        m
    }

    #[test]
    fn zero_alpha_reproduces_extrinsic_stream() {
        let env = EnvConfig::Ring(RingConfig { step_cost: 0.1, ..RingConfig::default() });
        let model = frozen(&env);
        let base = train_loop(&env, None, &RewardSpec::extrinsic_only(), &small(), 5, 3).unwrap();
        let spec = RewardSpec {
            mode: IntrinsicMode::Gated,
            extrinsic: true,
            vc: VcConfig { alpha: 0.0, theta_thr: 0.0, ..VcConfig::default() },
        };
        let vc = train_loop(&env, Some(&model), &spec, &small(), 5, 3).unwrap();
        assert_eq!(base.episodes.len(), vc.episodes.len());
        for (a, b) in base.episodes.iter().zip(&vc.episodes) {
            assert_eq!(a.length, b.length);
            assert_eq!(a.ext_return.to_bits(), b.ext_return.to_bits());
            assert_eq!(b.composite_return.to_bits(), b.ext_return.to_bits());
        }
    }

    #[test]
    fn runs_are_deterministic_and_bounded() {
        let env = EnvConfig::Sidewalk(SidewalkConfig { max_steps: 40, ..SidewalkConfig::default() });
        let model = frozen(&env);
        let spec = RewardSpec {
            mode: IntrinsicMode::Gated,
            extrinsic: true,
            vc: VcConfig::default(),
        };
        let a = train_loop(&env, Some(&model), &spec, &small(), 6, 11).unwrap();
        let b = train_loop(&env, Some(&model), &spec, &small(), 6, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.episodes.iter().all(|e| e.length <= 40));
        assert!(a.episodes.iter().all(|e| e.termination != crate::envs::Termination::None));
    }

    #[test]
    fn unfrozen_classifier_rejected() {
        let env = EnvConfig::Sidewalk(SidewalkConfig::default());
        let model = SmannModel::new(SmannConfig::default(), 5, 0).unwrap();
        let spec = RewardSpec {
            mode: IntrinsicMode::Stimuli,
            extrinsic: true,
            vc: VcConfig::default(),
        };
        let err = train_loop(&env, Some(&model), &spec, &small(), 1, 0).unwrap_err();
        assert!(matches!(err, Error::NotFrozen));
    }
}
