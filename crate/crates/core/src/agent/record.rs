use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::Termination;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_index: usize,
    pub length: usize,
    pub ext_return: f64,
    pub intr_return: f64,
    pub composite_return: f64,
    #[serde(rename = "termination_cause")]
    pub termination: Termination,
}

impl EpisodeRecord {
    pub fn new(episode_index: usize) -> Self {
        Self {
            episode_index,
            length: 0,
            ext_return: 0.0,
            intr_return: 0.0,
            composite_return: 0.0,
            termination: Termination::None,
        }
    }
}

/// Per-episode series of one seeded run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub episodes: Vec<EpisodeRecord>,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// The last `n` episodes (all of them when fewer exist).
    pub fn tail(&self, n: usize) -> &[EpisodeRecord] {
        &self.episodes[self.episodes.len().saturating_sub(n)..]
    }

    pub fn mean_length(&self, last: usize) -> f64 {
        mean(self.tail(last).iter().map(|e| e.length as f64))
    }

    pub fn mean_ext_return(&self, last: usize) -> f64 {
        mean(self.tail(last).iter().map(|e| e.ext_return))
    }

    pub fn mean_intr_return(&self, last: usize) -> f64 {
        mean(self.tail(last).iter().map(|e| e.intr_return))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.episodes {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let episodes = r
            .deserialize()
            .collect::<Result<Vec<EpisodeRecord>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
        if episodes.is_empty() {
            return Err(Error::Empty(format!("no episodes in {}", path.display())));
        }
        Ok(Self { episodes })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
