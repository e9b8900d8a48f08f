use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{egocentric_window, Action, CellCode, EgoObservation, Environment, Heading, Pose, StepResult, Termination};
use crate::error::{Error, Result};

pub(crate) const ENV_ID: &str = "ring";

/// Square loop of track on grass. Every track cell is one tile; driving onto an
/// unvisited tile pays `tile_reward`. Touching grass ends the episode with no
/// reward. `step_cost` is charged on every non-terminal step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingConfig {
    pub size: usize,
    pub margin: usize,
    pub track_width: usize,
    pub view: usize,
    pub max_steps: usize,
    pub tile_reward: f64,
    pub step_cost: f64,
    /// Start anywhere on the centre lane instead of the middle of the bottom straight.
    pub random_start: bool,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self {
            size: 20,
            margin: 3,
            track_width: 3,
            view: 5,
            max_steps: 350,
            tile_reward: 0.5,
            step_cost: 0.0,
            random_start: false,
        }
    }
}

impl RingConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("ring: {msg}")));
        if self.margin == 0 {
            return bad("margin must be at least one grass cell");
        }
        if self.track_width == 0 {
            return bad("track_width must be positive");
        }
        if self.size < 2 * (self.margin + self.track_width) + 1 {
            return bad("ring is not closed around a grass infield");
        }
        if self.view == 0 || self.max_steps == 0 {
            return bad("view and max_steps must be positive");
        }
        if !(self.tile_reward.is_finite() && self.tile_reward > 0.0) {
            return bad("tile_reward must be positive");
        }
        if !(self.step_cost.is_finite() && self.step_cost >= 0.0) {
            return bad("step_cost must be non-negative");
        }
        Ok(())
    }

    fn outer_lo(&self) -> i64 {
        self.margin as i64
    }

    fn outer_hi(&self) -> i64 {
        (self.size - self.margin) as i64 - 1
    }

    fn lane(&self) -> i64 {
        (self.track_width / 2) as i64
    }
}

#[derive(Debug, Clone)]
pub struct RingTrack {
    config: RingConfig,
    pose: Pose,
    steps: usize,
    done: bool,
    visited: Vec<bool>,
    rng: ChaCha8Rng,
}

impl RingTrack {
    pub fn new(config: RingConfig) -> Result<Self> {
        config.validate()?;
        let n = config.size * config.size;
        let mut env = Self {
            pose: Pose { row: 0, col: 0, heading: Heading::E },
            config,
            steps: 0,
            done: false,
            visited: vec![false; n],
            rng: ChaCha8Rng::seed_from_u64(0),
        };
        env.pose = env.default_start();
        Ok(env)
    }

    pub fn config(&self) -> &RingConfig {
        &self.config
    }

    fn default_start(&self) -> Pose {
        Pose {
            row: self.config.outer_hi() - self.config.lane(),
            col: (self.config.size / 2) as i64,
            heading: Heading::E,
        }
    }

    pub fn is_track(&self, row: i64, col: i64) -> bool {
        self.cell(row, col) == CellCode::Track
    }

    pub fn cell(&self, row: i64, col: i64) -> CellCode {
        let c = &self.config;
        let size = c.size as i64;
        if row < 0 || col < 0 || row >= size || col >= size {
            return CellCode::OutOfBounds;
        }
        let (lo, hi, w) = (c.outer_lo(), c.outer_hi(), c.track_width as i64);
        let in_outer = (lo..=hi).contains(&row) && (lo..=hi).contains(&col);
        let in_inner = (lo + w..=hi - w).contains(&row) && (lo + w..=hi - w).contains(&col);
        if in_outer && !in_inner {
            CellCode::Track
        } else {
            CellCode::Grass
        }
    }

    /// Number of tiles (track cells).
    pub fn tile_count(&self) -> usize {
        let s = self.config.size as i64;
        (0..s)
            .flat_map(|r| (0..s).map(move |c| (r, c)))
            .filter(|&(r, c)| self.is_track(r, c))
            .count()
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|&&v| v).count()
    }

    /// Counter-clockwise driving direction for a track cell.
    pub fn track_heading(&self, row: i64, col: i64) -> Option<Heading> {
        if !self.is_track(row, col) {
            return None;
        }
        let c = &self.config;
        let (lo, hi, w) = (c.outer_lo(), c.outer_hi(), c.track_width as i64);
        let bottom = row > hi - w;
        let right = col > hi - w;
        let top = row < lo + w;
        let left = col < lo + w;
        Some(if bottom && !right {
            Heading::E
        } else if right && !top {
            Heading::N
        } else if top && !left {
            Heading::W
        } else {
            debug_assert!(left);
            Heading::S
        })
    }

    /// Centre-lane cells in driving order, starting at the bottom-left corner.
    pub fn centre_lane(&self) -> Vec<(i64, i64)> {
        let c = &self.config;
        let lo = c.outer_lo() + c.lane();
        let hi = c.outer_hi() - c.lane();
        let mut cells = Vec::new();
        for col in lo..hi {
            cells.push((hi, col));
        }
        for row in (lo + 1..=hi).rev() {
            cells.push((row, hi));
        }
        for col in (lo + 1..=hi).rev() {
            cells.push((lo, col));
        }
        for row in lo..hi {
            cells.push((row, lo));
        }
        cells
    }

    /// Distance in cells from `(row, col)` to the nearest grass cell along `heading`.
    pub fn distance_to_grass(&self, row: i64, col: i64, heading: Heading) -> usize {
        let (dr, dc) = heading.delta();
        let mut d = 0;
        let (mut r, mut c) = (row, col);
        while self.is_track(r, c) {
            r += dr;
            c += dc;
            d += 1;
        }
        d
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub(crate) fn place(&mut self, pose: Pose) {
        self.pose = pose;
        if let Some(i) = self.index(pose.row, pose.col) {
            self.visited[i] = true;
        }
    }

    fn index(&self, row: i64, col: i64) -> Option<usize> {
        self.is_track(row, col)
            .then(|| row as usize * self.config.size + col as usize)
    }
}

impl Environment for RingTrack {
    fn env_id(&self) -> &'static str {
        ENV_ID
    }

    fn reset(&mut self, seed: u64) -> EgoObservation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.pose = if self.config.random_start {
            let lane = self.centre_lane();
            let (row, col) = lane[self.rng.random_range(0..lane.len())];
            let heading = self.track_heading(row, col).expect("centre lane is track");
            Pose { row, col, heading }
        } else {
            self.default_start()
        };
        self.steps = 0;
        self.done = false;
        self.visited.iter_mut().for_each(|v| *v = false);
        let start = self.index(self.pose.row, self.pose.col).expect("start on track");
        self.visited[start] = true;
        self.observe()
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.steps += 1;
        let mut reward = 0.0 - self.config.step_cost;
        let mut cause = Termination::None;
        match action {
            Action::TurnLeft => self.pose.heading = self.pose.heading.left(),
            Action::TurnRight => self.pose.heading = self.pose.heading.right(),
            Action::Forward => {
                let (row, col) = self.pose.ahead();
                match self.cell(row, col) {
                    CellCode::Track => {
                        self.pose.row = row;
                        self.pose.col = col;
                        let i = self.index(row, col).expect("track cell");
                        if !self.visited[i] {
                            self.visited[i] = true;
                            reward += self.config.tile_reward;
                        }
                    }
                    CellCode::OutOfBounds => {}
                    _ => {
                        self.pose.row = row;
                        self.pose.col = col;
                        cause = Termination::Hazard;
                        reward = 0.0;
                    }
                }
            }
        }
        if cause == Termination::None && self.steps >= self.config.max_steps {
            cause = Termination::Timeout;
        }
        self.done = cause != Termination::None;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            cause,
        })
    }

    fn observe(&self) -> EgoObservation {
        egocentric_window(self.config.view, self.pose, |r, c| self.cell(r, c))
    }

    fn render_ascii(&self) -> String {
        let s = self.config.size as i64;
        let mut out = String::new();
        for r in 0..s {
            for c in 0..s {
                if r == self.pose.row && c == self.pose.col {
                    out.push(self.pose.heading.glyph());
                } else if self.index(r, c).is_some_and(|i| self.visited[i]) {
                    out.push('*');
                } else {
                    out.push(self.cell(r, c).glyph());
                }
            }
            out.push('\n');
        }
        out
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn max_abs_extrinsic(&self) -> f64 {
        (self.config.tile_reward - self.config.step_cost)
            .abs()
            .max(self.config.step_cost)
    }

    fn view(&self) -> usize {
        self.config.view
    }

    fn pose(&self) -> Pose {
        self.pose
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }
}
