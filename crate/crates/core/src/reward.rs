//! Gated vicarious reward, the composite reward, and the un-gated baseline.

use serde::{Deserialize, Serialize};

use crate::demos::Valence;
use crate::error::{Error, Result};

/// Value attached to each behaviour class at inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassValues {
    pub neg: f64,
    pub pos: f64,
}

impl Default for ClassValues {
    fn default() -> Self {
        Self { neg: -1.0, pos: 1.0 }
    }
}

impl ClassValues {
    pub fn get(&self, valence: Valence) -> f64 {
        match valence {
            Valence::Negative => self.neg,
            Valence::Positive => self.pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VcConfig {
    pub theta_thr: f64,
    pub alpha: f64,
    pub valences: Vec<Valence>,
    pub class_values: ClassValues,
}

impl Default for VcConfig {
    fn default() -> Self {
        Self {
            theta_thr: 0.6,
            alpha: 1.0,
            valences: vec![Valence::Negative],
            class_values: ClassValues::default(),
        }
    }
}

impl VcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta_thr) {
            return Err(Error::Config(format!("theta_thr {} outside [0, 1]", self.theta_thr)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha {} must be finite and non-negative", self.alpha)));
        }
        if self.valences.is_empty() {
            return Err(Error::Config("at least one valence must be enabled".into()));
        }
        if !(self.class_values.neg.is_finite() && self.class_values.pos.is_finite()) {
            return Err(Error::Config("class values must be finite".into()));
        }
        Ok(())
    }

    fn enabled(&self) -> impl Iterator<Item = Valence> + '_ {
        Valence::ALL.into_iter().filter(|v| self.valences.contains(v))
    }

    /// Largest `|v|` over enabled classes.
    pub fn max_abs_value(&self) -> f64 {
        self.enabled().map(|v| self.class_values.get(v).abs()).fold(0.0, f64::max)
    }
}

/// How the intrinsic term is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntrinsicMode {
    None,
    Stimuli,
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub r_ext: f64,
    pub r_vic: f64,
    pub composite: f64,
    /// Gate state per class, indexed like [`Valence::index`].
    pub gates: [bool; 2],
    pub p: [f64; 2],
}

/// Gates open where the class is enabled and `p > theta`.
pub fn gates(p: &[f64; 2], cfg: &VcConfig) -> [bool; 2] {
    let mut open = [false; 2];
    for v in cfg.enabled() {
        open[v.index()] = p[v.index()] > cfg.theta_thr;
    }
    open
}

/// `sum over enabled classes of 1[p > theta] * v * p`.
pub fn gated_intrinsic(p: &[f64; 2], cfg: &VcConfig) -> f64 {
    let open = gates(p, cfg);
    cfg.enabled()
        .filter(|v| open[v.index()])
        .map(|v| cfg.class_values.get(v) * p[v.index()])
        .fold(0.0, |acc, x| acc + x)
}

/// The gated sum with every gate forced open.
pub fn stimuli_baseline(p: &[f64; 2], cfg: &VcConfig) -> f64 {
    cfg.enabled().map(|v| cfg.class_values.get(v) * p[v.index()]).fold(0.0, |acc, x| acc + x)
}

pub fn composite(r_ext: f64, r_vic: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        r_ext
    } else {
        r_ext + alpha * r_vic
    }
}

/// Full per-step reward record. `p` is ignored when `mode` is `None`.
pub fn breakdown(r_ext: f64, p: [f64; 2], cfg: &VcConfig, mode: IntrinsicMode) -> RewardBreakdown {
    let (r_vic, open) = match mode {
        IntrinsicMode::None => (0.0, [false; 2]),
        IntrinsicMode::Stimuli => {
            let mut open = [false; 2];
            for v in cfg.enabled() {
                open[v.index()] = true;
            }
            (stimuli_baseline(&p, cfg), open)
        }
        IntrinsicMode::Gated => (gated_intrinsic(&p, cfg), gates(&p, cfg)),
    };
    let alpha = if mode == IntrinsicMode::None { 0.0 } else { cfg.alpha };
    RewardBreakdown {
        r_ext,
        r_vic,
        composite: composite(r_ext, r_vic, alpha),
        gates: open,
        p,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dominance {
    Ok,
    Warning(String),
}

/// Warns when the scaled intrinsic reward can match the largest extrinsic
/// step reward. Pass `0.0` when extrinsic reward is disabled.
pub fn dominance_check(cfg: &VcConfig, env_max_abs_ext: f64) -> Dominance {
    let vic = cfg.alpha * cfg.max_abs_value();
    if vic >= env_max_abs_ext {
        let msg = format!("alpha * max|v| = {vic} is not below the largest extrinsic step reward {env_max_abs_ext}");
        log::warn!("{msg}");
        Dominance::Warning(msg)
    } else {
        Dominance::Ok
    }
}
