//! Seedable gridworlds with egocentric partial observations.
//!
//! Both worlds end an episode on a hazard cell with exactly zero reward, so
//! the terminal condition carries no learning signal of its own.

mod obs;
mod ring;
mod sidewalk;

use serde::{Deserialize, Serialize};

pub use obs::{egocentric_window, CellCode, EgoObservation, CHANNELS};
pub use ring::{RingConfig, RingTrack};
pub use sidewalk::{SidewalkConfig, SidewalkGrid};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub fn left(self) -> Self {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    pub fn right(self) -> Self {
        match self {
            Heading::N => Heading::E,
            Heading::E => Heading::S,
            Heading::S => Heading::W,
            Heading::W => Heading::N,
        }
    }

    /// `(d_row, d_col)` of one step forward. Row 0 is the top of the map.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::N => (-1, 0),
            Heading::E => (0, 1),
            Heading::S => (1, 0),
            Heading::W => (0, -1),
        }
    }

    pub fn glyph(self) -> char {
        match self {
            Heading::N => '^',
            Heading::E => '>',
            Heading::S => 'v',
            Heading::W => '<',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub row: i64,
    pub col: i64,
    pub heading: Heading,
}

impl Pose {
    pub fn ahead(&self) -> (i64, i64) {
        let (dr, dc) = self.heading.delta();
        (self.row + dr, self.col + dc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Forward, Action::TurnLeft, Action::TurnRight];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Action::Forward => 0,
            Action::TurnLeft => 1,
            Action::TurnRight => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    None,
    Hazard,
    Goal,
    Timeout,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::None => "none",
            Termination::Hazard => "hazard",
            Termination::Goal => "goal",
            Termination::Timeout => "timeout",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Termination {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Termination::None),
            "hazard" => Ok(Termination::Hazard),
            "goal" => Ok(Termination::Goal),
            "timeout" => Ok(Termination::Timeout),
            other => Err(format!("unknown termination cause {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: EgoObservation,
    pub reward: f64,
    pub done: bool,
    pub cause: Termination,
}

/// Common surface of the gridworlds.
pub trait Environment {
    fn env_id(&self) -> &'static str;
    fn reset(&mut self, seed: u64) -> EgoObservation;
    fn step(&mut self, action: Action) -> Result<StepResult>;
    fn observe(&self) -> EgoObservation;
    fn render_ascii(&self) -> String;
    fn max_steps(&self) -> usize;
    /// Largest single-step extrinsic reward magnitude.
    fn max_abs_extrinsic(&self) -> f64;
    fn view(&self) -> usize;
    fn pose(&self) -> Pose;
    fn steps_taken(&self) -> usize;

    fn feature_count(&self) -> usize {
        self.view() * self.view() * CHANNELS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Sidewalk(SidewalkConfig),
    Ring(RingConfig),
}

impl EnvConfig {
    pub fn env_id(&self) -> &'static str {
        match self {
            EnvConfig::Sidewalk(_) => sidewalk::ENV_ID,
            EnvConfig::Ring(_) => ring::ENV_ID,
        }
    }

    pub fn view(&self) -> usize {
        match self {
            EnvConfig::Sidewalk(c) => c.view,
            EnvConfig::Ring(c) => c.view,
        }
    }

    pub fn build(&self) -> Result<Env> {
        Ok(match self {
            EnvConfig::Sidewalk(c) => Env::Sidewalk(SidewalkGrid::new(c.clone())?),
            EnvConfig::Ring(c) => Env::Ring(RingTrack::new(c.clone())?),
        })
    }
}

/// Closed set of environments, dispatched statically.
#[derive(Debug, Clone)]
pub enum Env {
    Sidewalk(SidewalkGrid),
    Ring(RingTrack),
}

macro_rules! dispatch {
    ($self:expr, $env:ident => $body:expr) => {
        match $self {
            Env::Sidewalk($env) => $body,
            Env::Ring($env) => $body,
        }
    };
}

impl Environment for Env {
    fn env_id(&self) -> &'static str {
        dispatch!(self, e => e.env_id())
    }
    fn reset(&mut self, seed: u64) -> EgoObservation {
        dispatch!(self, e => e.reset(seed))
    }
    fn step(&mut self, action: Action) -> Result<StepResult> {
        dispatch!(self, e => e.step(action))
    }
    fn observe(&self) -> EgoObservation {
        dispatch!(self, e => e.observe())
    }
    fn render_ascii(&self) -> String {
        dispatch!(self, e => e.render_ascii())
    }
    fn max_steps(&self) -> usize {
        dispatch!(self, e => e.max_steps())
    }
    fn max_abs_extrinsic(&self) -> f64 {
        dispatch!(self, e => e.max_abs_extrinsic())
    }
    fn view(&self) -> usize {
        dispatch!(self, e => e.view())
    }
    fn pose(&self) -> Pose {
        dispatch!(self, e => e.pose())
    }
    fn steps_taken(&self) -> usize {
        dispatch!(self, e => e.steps_taken())
    }
}

impl Env {
    /// Puts the agent at `pose` mid-episode without touching counters.
    /// Scripted demonstrators use this to choose their start.
    pub(crate) fn place(&mut self, pose: Pose) {
        dispatch!(self, e => e.place(pose))
    }
}
