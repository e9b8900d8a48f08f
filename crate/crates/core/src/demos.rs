//! Scripted demonstrators and observation-only demonstration sets.
//!
//! A demonstration carries nothing but what the learner saw and the single
//! value the demonstrator communicated afterwards.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, EgoObservation, Env, EnvConfig, Environment, Heading, Pose};
use crate::error::{Error, Result};

/// Behaviour class of a demonstration: avoid (negative) or approach (positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Valence {
    #[serde(rename = "neg")]
    Negative,
    #[serde(rename = "pos")]
    Positive,
}

impl Valence {
    pub const ALL: [Valence; 2] = [Valence::Negative, Valence::Positive];
    pub const COUNT: usize = 2;

    /// Output index in the classifier.
    pub fn index(self) -> usize {
        match self {
            Valence::Negative => 0,
            Valence::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Communicated value used by the scripted demonstrators.
    pub fn scripted_value(self) -> f64 {
        match self {
            Valence::Negative => -1.0,
            Valence::Positive => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Valence::Negative => "neg",
            Valence::Positive => "pos",
        }
    }
}

impl std::fmt::Display for Valence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sign of a communicated value; zero has no valence.
pub fn discretize(value: f64) -> Result<Valence> {
    if value < 0.0 {
        Ok(Valence::Negative)
    } else if value > 0.0 {
        Ok(Valence::Positive)
    } else {
        Err(Error::ZeroValue)
    }
}

/// Observed demonstrator behaviour plus its communicated value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(rename = "obs")]
    pub observations: Vec<EgoObservation>,
    #[serde(rename = "v")]
    pub value: f64,
}

impl Trajectory {
    pub fn valence(&self) -> Result<Valence> {
        discretize(self.value)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValuedStep {
    /// 1-based position in the trajectory.
    pub step: usize,
    pub value: f64,
    pub trust: f64,
    pub discount: f64,
}

/// Backward-discounted value of every observation: `k * gamma^(T - t) * v`.
pub fn attribute_values(traj: &Trajectory, trust: f64, discount: f64) -> Vec<ValuedStep> {
    let t_end = traj.len();
    (1..=t_end)
        .map(|t| ValuedStep {
            step: t,
            value: trust * discount.powi((t_end - t) as i32) * traj.value,
            trust,
            discount,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub env_id: String,
    pub seed: u64,
    pub window_len: usize,
    pub trajectories: Vec<Trajectory>,
}

impl DemoSet {
    pub fn empty(env_id: impl Into<String>, seed: u64, window_len: usize) -> Self {
        Self {
            env_id: env_id.into(),
            seed,
            window_len,
            trajectories: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Trajectory counts indexed by [`Valence::index`].
    pub fn class_counts(&self) -> [usize; Valence::COUNT] {
        let mut counts = [0; Valence::COUNT];
        for t in &self.trajectories {
            if let Ok(v) = t.valence() {
                counts[v.index()] += 1;
            }
        }
        counts
    }

    pub fn merge(mut self, other: DemoSet) -> Result<DemoSet> {
        if other.env_id != self.env_id {
            return Err(Error::EnvMismatch {
                expected: self.env_id,
                found: other.env_id,
            });
        }
        if other.window_len != self.window_len && !other.is_empty() && !self.is_empty() {
            return Err(Error::Config(format!(
                "cannot merge window lengths {} and {}",
                self.window_len, other.window_len
            )));
        }
        if self.is_empty() {
            self.window_len = other.window_len;
        }
        self.trajectories.extend(other.trajectories);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut k = None;
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.value == 0.0 || !t.value.is_finite() {
                return Err(Error::Config(format!("trajectory {i} has value {}", t.value)));
            }
            if t.len() != self.window_len || t.is_empty() {
                return Err(Error::Config(format!(
                    "trajectory {i} has {} observations, expected {}",
                    t.len(),
                    self.window_len
                )));
            }
            for o in &t.observations {
                if *k.get_or_insert(o.k()) != o.k() {
                    return Err(Error::Config(format!("trajectory {i} mixes window sizes")));
                }
            }
        }
        Ok(())
    }
}

pub fn save_demos(set: &DemoSet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(set)?)?;
    Ok(())
}

/// Reads a demo archive; with `expected_env` set, an archive recorded in a
/// different environment is rejected.
pub fn load_demos(path: &Path, expected_env: Option<&str>) -> Result<DemoSet> {
    let bytes = fs::read(path)?;
    let set: DemoSet = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    set.validate().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if let Some(expected) = expected_env {
        if set.env_id != expected {
            return Err(Error::EnvMismatch {
                expected: expected.to_string(),
                found: set.env_id,
            });
        }
    }
    Ok(set)
}

/// Longest gap of unrecorded steps between two recorded observations.
const MAX_GAP: usize = 1;

/// Picks `len` observations ending at the last one, skipping up to
/// [`MAX_GAP`] steps between picks. Short paths repeat their first frame.
fn sample_window(path: &[EgoObservation], len: usize, rng: &mut ChaCha8Rng) -> Vec<EgoObservation> {
    let mut picks = Vec::with_capacity(len);
    let mut idx = path.len() as i64 - 1;
    for _ in 0..len {
        picks.push(path[idx.max(0) as usize].clone());
        idx -= 1 + rng.random_range(0..=MAX_GAP) as i64;
    }
    picks.reverse();
    picks
}

/// Generates `count` demonstrations of one valence in the configured world.
///
/// Sidewalk: negative walks toward the street until it fills the view;
/// positive wanders the walkway well clear of the street. Ring: negative veers
/// off the centre lane toward the grass; positive follows the centre lane.
pub fn script_demos(env_config: &EnvConfig, valence: Valence, count: usize, window_len: usize, seed: u64) -> Result<DemoSet> {
    if window_len == 0 {
        return Err(Error::Config("window_len must be positive".into()));
    }
    let mut env = env_config.build()?;
    let mut set = DemoSet::empty(env.env_id(), seed, window_len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (valence.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for i in 0..count {
        env.reset(seed.wrapping_add(i as u64));
        let path = match &mut env {
            Env::Sidewalk(_) => sidewalk_path(&mut env, valence, &mut rng)?,
            Env::Ring(_) => ring_path(&mut env, valence, &mut rng)?,
        };
        set.trajectories.push(Trajectory {
            observations: sample_window(&path, window_len, &mut rng),
            value: valence.scripted_value(),
        });
    }
    Ok(set)
}

/// Both valences, `count_per_class` each, negatives first.
pub fn script_both(env_config: &EnvConfig, count_per_class: usize, window_len: usize, seed: u64) -> Result<DemoSet> {
    let neg = script_demos(env_config, Valence::Negative, count_per_class, window_len, seed)?;
    let pos = script_demos(env_config, Valence::Positive, count_per_class, window_len, seed)?;
    neg.merge(pos)
}

fn drive(env: &mut Env, actions: &[Action], path: &mut Vec<EgoObservation>) -> Result<()> {
    for &a in actions {
        let step = env.step(a)?;
        path.push(step.observation);
        if step.done {
            break;
        }
    }
    Ok(())
}

fn sidewalk_path(env: &mut Env, valence: Valence, rng: &mut ChaCha8Rng) -> Result<Vec<EgoObservation>> {
    let Env::Sidewalk(grid) = env else { unreachable!() };
    let cfg = grid.config().clone();
    let unscriptable = || Error::Unscriptable {
        env: "sidewalk".into(),
        valence: valence.to_string(),
    };
    let row_lo = cfg.view.min(cfg.length - 1) as i64;
    let row_hi = cfg.length as i64 - 1;
    let mut path = Vec::new();
    match valence {
        Valence::Negative => {
            if cfg.street_width == 0 || cfg.walkway_width < 2 {
                return Err(unscriptable());
            }
            let edge = cfg.walkway_width as i64 - 1;
            let col = rng.random_range(0..edge);
            let row = rng.random_range(row_lo.max(1)..=row_hi);
            let (heading, turn) = match rng.random_range(0..3) {
                0 => (Heading::N, Some(Action::TurnRight)),
                1 => (Heading::S, Some(Action::TurnLeft)),
                _ => (Heading::E, None),
            };
            env.place(Pose { row, col, heading });
            path.push(env.observe());
            let mut actions: Vec<Action> = turn.into_iter().collect();
            actions.extend(std::iter::repeat_n(Action::Forward, (edge - col) as usize));
            drive(env, &actions, &mut path)?;
        }
        Valence::Positive => {
            if cfg.walkway_width < 3 {
                return Err(unscriptable());
            }
            let safe_max = (cfg.walkway_width - 3) as i64;
            let col = rng.random_range(0..=safe_max);
            let row = rng.random_range(row_lo.max(1)..=row_hi);
            let heading = [Heading::N, Heading::E, Heading::S, Heading::W][rng.random_range(0..4)];
            env.place(Pose { row, col, heading });
            path.push(env.observe());
            for _ in 0..rng.random_range(3..=6) {
                let pose = env.pose();
                let (r, c) = pose.ahead();
                let open = (0..=safe_max).contains(&c) && (row_lo.max(1)..=row_hi).contains(&r);
                let action = if open && rng.random_bool(0.6) {
                    Action::Forward
                } else if rng.random_bool(0.5) {
                    Action::TurnLeft
                } else {
                    Action::TurnRight
                };
                drive(env, &[action], &mut path)?;
            }
        }
    }
    Ok(path)
}

fn ring_path(env: &mut Env, valence: Valence, rng: &mut ChaCha8Rng) -> Result<Vec<EgoObservation>> {
    let Env::Ring(track) = env else { unreachable!() };
    let lane = track.centre_lane();
    let n = lane.len();
    let dir = |i: usize| {
        let ((r, c), (nr, nc)) = (lane[i % n], lane[(i + 1) % n]);
        heading_towards(r, c, nr, nc)
    };
    let straights: Vec<usize> = (0..n).filter(|&i| dir(i + n - 1) == dir(i) && dir(i) == dir(i + 1)).collect();
    let mut path = Vec::new();
    match valence {
        Valence::Negative => {
            let start = straights[rng.random_range(0..straights.len())];
            let (row, col) = lane[start];
            let heading = dir(start);
            let toward_outer = rng.random_bool(0.5);
            let turned = if toward_outer { heading.right() } else { heading.left() };
            let reach = track.distance_to_grass(row, col, turned);
            env.place(Pose { row, col, heading });
            path.push(env.observe());
            let turn = if toward_outer { Action::TurnRight } else { Action::TurnLeft };
            let mut actions = vec![turn];
            actions.extend(std::iter::repeat_n(Action::Forward, reach.saturating_sub(1)));
            drive(env, &actions, &mut path)?;
        }
        Valence::Positive => {
            let start = straights[rng.random_range(0..straights.len())];
            let (row, col) = lane[start];
            env.place(Pose { row, col, heading: dir(start) });
            path.push(env.observe());
            let moves = rng.random_range(3..=5usize);
            let mut target = start;
            for _ in 0..moves {
                target = (target + 1) % n;
                let (tr, tc) = lane[target];
                let pose = env.pose();
                let want = heading_towards(pose.row, pose.col, tr, tc);
                if want == pose.heading.left() {
                    drive(env, &[Action::TurnLeft], &mut path)?;
                } else if want == pose.heading.right() {
                    drive(env, &[Action::TurnRight], &mut path)?;
                }
                drive(env, &[Action::Forward], &mut path)?;
            }
        }
    }
    Ok(path)
}

fn heading_towards(row: i64, col: i64, tr: i64, tc: i64) -> Heading {
    match (tr - row, tc - col) {
        (-1, 0) => Heading::N,
        (1, 0) => Heading::S,
        (0, 1) => Heading::E,
        _ => Heading::W,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CellCode, RingConfig, SidewalkConfig};

    fn sidewalk() -> EnvConfig {
        EnvConfig::Sidewalk(SidewalkConfig::default())
    }

    fn ring() -> EnvConfig {
        EnvConfig::Ring(RingConfig::default())
    }

    #[test]
    fn discretize_uses_sign_only() {
        assert_eq!(discretize(-1.0).unwrap(), Valence::Negative);
        assert_eq!(discretize(1.0).unwrap(), Valence::Positive);
        assert_eq!(discretize(-0.2).unwrap(), Valence::Negative);
        assert!(matches!(discretize(0.0), Err(Error::ZeroValue)));
    }

    #[test]
    fn attribution_discounts_backwards() {
        let obs = EgoObservation::from_cells(1, vec![CellCode::Walkway]);
        let traj = Trajectory {
            observations: vec![obs; 3],
            value: -1.0,
        };
        let vals = attribute_values(&traj, 1.0, 0.99);
        assert_eq!(vals[2].value, -1.0);
        assert!((vals[0].value + 0.9801).abs() < 1e-12);
        assert!(attribute_values(&traj, 0.0, 0.99).iter().all(|v| v.value == 0.0));
        for w in vals.windows(2) {
            assert!(w[0].value.abs() <= w[1].value.abs());
        }
    }

    #[test]
    fn sidewalk_negative_ends_facing_street() {
        let set = script_demos(&sidewalk(), Valence::Negative, 26, 3, 5).unwrap();
        assert_eq!(set.len(), 26);
        assert_eq!(set.class_counts(), [26, 0]);
        for t in &set.trajectories {
            assert_eq!(t.len(), 3);
            assert_eq!(t.value, -1.0);
            let last = t.observations.last().unwrap();
            assert!(last.count(CellCode::Street) > last.count(CellCode::Walkway), "{}", last.render());
        }
    }

    #[test]
    fn ring_positive_holds_centre() {
        let set = script_demos(&ring(), Valence::Positive, 26, 3, 5).unwrap();
        assert_eq!(set.len(), 26);
        for t in &set.trajectories {
            assert_eq!(t.value, 1.0);
            for o in &t.observations {
                assert_eq!(o.cell(o.k() - 1, o.k() / 2), CellCode::Track);
            }
        }
    }

    #[test]
    fn ring_negative_approaches_grass() {
        let set = script_demos(&ring(), Valence::Negative, 26, 3, 9).unwrap();
        for t in &set.trajectories {
            let first = &t.observations[0];
            let last = t.observations.last().unwrap();
            assert!(last.count(CellCode::Grass) >= first.count(CellCode::Grass));
            assert!(last.count(CellCode::Grass) > last.count(CellCode::Track) / 2);
        }
    }

    #[test]
    fn zero_count_is_empty() {
        let set = script_demos(&sidewalk(), Valence::Positive, 0, 3, 1).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn generation_is_reproducible() {
        let a = script_both(&sidewalk(), 5, 3, 11).unwrap();
        let b = script_both(&sidewalk(), 5, 3, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), [5, 5]);
    }

    #[test]
    fn streetless_sidewalk_cannot_script_negative() {
        let cfg = EnvConfig::Sidewalk(SidewalkConfig { street_width: 0, ..SidewalkConfig::default() });
        assert!(matches!(
            script_demos(&cfg, Valence::Negative, 1, 3, 0),
            Err(Error::Unscriptable { .. })
        ));
    }

    #[test]
    fn archive_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.json");
        let set = script_both(&ring(), 3, 3, 2).unwrap();
        save_demos(&set, &path).unwrap();
        assert_eq!(load_demos(&path, Some("ring")).unwrap(), set);
        assert!(matches!(load_demos(&path, Some("sidewalk")), Err(Error::EnvMismatch { .. })));

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_demos(&path, None) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ring_demos_script_for_many_seeds() {
        for seed in 0..20 {
            let set = script_both(&ring(), 26, 3, seed).unwrap();
            assert_eq!(set.class_counts(), [26, 26]);
        }
    }
}
