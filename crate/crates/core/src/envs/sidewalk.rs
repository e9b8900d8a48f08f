use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{egocentric_window, Action, CellCode, EgoObservation, Environment, Heading, Pose, StepResult, Termination};
use crate::error::{Error, Result};

pub(crate) const ENV_ID: &str = "sidewalk";

/// Walkway with a street on its right flank and the goal at the far end.
///
/// Columns `0..walkway_width` are walkway, the next `street_width` columns are
/// street. The map edge on the left behaves as a wall. Row 0 is the goal row;
/// the agent starts on the last row facing north.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SidewalkConfig {
    pub walkway_width: usize,
    pub street_width: usize,
    pub length: usize,
    pub view: usize,
    pub max_steps: usize,
    pub goal_reward: f64,
    /// Start column drawn uniformly over the walkway; otherwise its centre.
    pub random_start: bool,
}

impl Default for SidewalkConfig {
    fn default() -> Self {
        Self {
            walkway_width: 6,
            street_width: 4,
            length: 40,
            view: 5,
            max_steps: 150,
            goal_reward: 1.0,
            random_start: true,
        }
    }
}

impl SidewalkConfig {
    pub fn width(&self) -> usize {
        self.walkway_width + self.street_width
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("sidewalk: {msg}")));
        if self.walkway_width == 0 {
            return bad("walkway must be non-empty");
        }
        if self.length < 2 {
            return bad("length must be at least 2 rows");
        }
        if self.view == 0 {
            return bad("view must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if !(self.goal_reward.is_finite() && self.goal_reward >= 0.0) {
            return bad("goal_reward must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SidewalkGrid {
    config: SidewalkConfig,
    pose: Pose,
    steps: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl SidewalkGrid {
    pub fn new(config: SidewalkConfig) -> Result<Self> {
        config.validate()?;
        let pose = Pose {
            row: config.length as i64 - 1,
            col: (config.walkway_width / 2) as i64,
            heading: Heading::N,
        };
        Ok(Self {
            config,
            pose,
            steps: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn config(&self) -> &SidewalkConfig {
        &self.config
    }

    pub fn cell(&self, row: i64, col: i64) -> CellCode {
        let c = &self.config;
        if row < 0 || col < 0 || row >= c.length as i64 || col >= c.width() as i64 {
            CellCode::OutOfBounds
        } else if col >= c.walkway_width as i64 {
            CellCode::Street
        } else if row == 0 {
            CellCode::Goal
        } else {
            CellCode::Walkway
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub(crate) fn place(&mut self, pose: Pose) {
        self.pose = pose;
    }
}

impl Environment for SidewalkGrid {
    fn env_id(&self) -> &'static str {
        ENV_ID
    }

    fn reset(&mut self, seed: u64) -> EgoObservation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let col = if self.config.random_start {
            self.rng.random_range(0..self.config.walkway_width)
        } else {
            self.config.walkway_width / 2
        };
        self.pose = Pose {
            row: self.config.length as i64 - 1,
            col: col as i64,
            heading: Heading::N,
        };
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.steps += 1;
        let mut reward = 0.0;
        let mut cause = Termination::None;
        match action {
            Action::TurnLeft => self.pose.heading = self.pose.heading.left(),
            Action::TurnRight => self.pose.heading = self.pose.heading.right(),
            Action::Forward => {
                let (row, col) = self.pose.ahead();
                match self.cell(row, col) {
                    CellCode::OutOfBounds => {}
                    CellCode::Street => {
                        self.pose.row = row;
                        self.pose.col = col;
                        cause = Termination::Hazard;
                    }
                    CellCode::Goal => {
                        self.pose.row = row;
                        self.pose.col = col;
                        reward = self.config.goal_reward;
                        cause = Termination::Goal;
                    }
                    _ => {
                        self.pose.row = row;
                        self.pose.col = col;
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
        let c = &self.config;
        let mut out = String::new();
        for r in 0..c.length as i64 {
            for col in 0..c.width() as i64 {
                if r == self.pose.row && col == self.pose.col {
                    out.push(self.pose.heading.glyph());
                } else {
                    out.push(self.cell(r, col).glyph());
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
        self.config.goal_reward
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

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SidewalkGrid {
        SidewalkGrid::new(SidewalkConfig::default()).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = grid();
        let mut b = grid();
        assert_eq!(a.reset(17), b.reset(17));
        assert_eq!(a.pose(), b.pose());
    }

    #[test]
    fn start_is_on_walkway_without_goal_in_view() {
        let mut env = grid();
        for seed in 0..20 {
            let obs = env.reset(seed);
            let p = env.pose();
            assert_eq!(env.cell(p.row, p.col), CellCode::Walkway);
            assert_eq!(obs.count(CellCode::Goal), 0);
        }
    }

    #[test]
    fn entering_street_is_a_silent_terminal() {
        let mut env = grid();
        env.reset(0);
        env.place(Pose { row: 10, col: 5, heading: Heading::E });
        let step = env.step(Action::Forward).unwrap();
        assert!(step.done);
        assert_eq!(step.reward, 0.0);
        assert_eq!(step.cause, Termination::Hazard);
        assert!(matches!(env.step(Action::Forward), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn reaching_goal_row_pays_once() {
        let mut env = grid();
        env.reset(0);
        env.place(Pose { row: 1, col: 2, heading: Heading::N });
        let step = env.step(Action::Forward).unwrap();
        assert_eq!(step.reward, 1.0);
        assert!(step.done);
        assert_eq!(step.cause, Termination::Goal);
    }

    #[test]
    fn wall_blocks_and_timeout_ends() {
        let cfg = SidewalkConfig { max_steps: 3, ..SidewalkConfig::default() };
        let mut env = SidewalkGrid::new(cfg).unwrap();
        env.reset(0);
        env.place(Pose { row: 20, col: 0, heading: Heading::W });
        let s1 = env.step(Action::Forward).unwrap();
        assert_eq!(env.pose().col, 0);
        assert!(!s1.done);
        env.step(Action::TurnLeft).unwrap();
        let s3 = env.step(Action::TurnLeft).unwrap();
        assert!(s3.done);
        assert_eq!(s3.cause, Termination::Timeout);
    }

    #[test]
    fn render_marks_agent_and_hazard() {
        let cfg = SidewalkConfig {
            walkway_width: 2,
            street_width: 1,
            length: 3,
            random_start: false,
            ..SidewalkConfig::default()
        };
        let mut env = SidewalkGrid::new(cfg).unwrap();
        env.reset(0);
        let text = env.render_ascii();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text, "GG#\n..#\n.^#\n");
    }

    #[test]
    fn malformed_geometry_rejected() {
        let cfg = SidewalkConfig { walkway_width: 0, ..SidewalkConfig::default() };
        assert!(SidewalkGrid::new(cfg).is_err());
    }

    #[test]
    fn observe_is_pure() {
        let mut env = grid();
        env.reset(3);
        assert_eq!(env.observe(), env.observe());
    }
}
