use serde::{Deserialize, Serialize};

use super::Pose;

/// Number of one-hot channels per cell.
pub const CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellCode {
    Walkway,
    Street,
    Goal,
    Track,
    Grass,
    OutOfBounds,
}

impl CellCode {
    pub const ALL: [CellCode; CHANNELS] = [
        CellCode::Walkway,
        CellCode::Street,
        CellCode::Goal,
        CellCode::Track,
        CellCode::Grass,
        CellCode::OutOfBounds,
    ];

    pub fn channel(self) -> usize {
        self as usize
    }

    pub fn from_channel(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn glyph(self) -> char {
        match self {
            CellCode::Walkway => '.',
            CellCode::Street => '#',
            CellCode::Goal => 'G',
            CellCode::Track => 'o',
            CellCode::Grass => '"',
            CellCode::OutOfBounds => ' ',
        }
    }
}

/// `k x k` window of cell codes in the agent's frame.
///
/// Row 0 is the farthest row ahead; the agent occupies the centre of the
/// last row and always faces up.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct EgoObservation {
    k: usize,
    cells: Vec<CellCode>,
}

impl EgoObservation {
    pub fn from_cells(k: usize, cells: Vec<CellCode>) -> Self {
        assert_eq!(cells.len(), k * k, "window must hold k*k cells");
        Self { k, cells }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cell(&self, row: usize, col: usize) -> CellCode {
        self.cells[row * self.k + col]
    }

    pub fn cells(&self) -> &[CellCode] {
        &self.cells
    }

    pub fn count(&self, code: CellCode) -> usize {
        self.cells.iter().filter(|&&c| c == code).count()
    }

    /// Indices of the set entries of the flattened one-hot encoding
    /// (`cell * CHANNELS + channel`), one per cell.
    pub fn active_features(&self) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, c)| i * CHANNELS + c.channel())
            .collect()
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.cells.len() * CHANNELS];
        for idx in self.active_features() {
            v[idx] = 1.0;
        }
        v
    }

    pub fn feature_count(&self) -> usize {
        self.cells.len() * CHANNELS
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in 0..self.k {
            for c in 0..self.k {
                out.push(self.cell(r, c).glyph());
            }
            out.push('\n');
        }
        out
    }
}

impl From<EgoObservation> for Vec<Vec<u8>> {
    fn from(obs: EgoObservation) -> Self {
        obs.cells
            .chunks(obs.k)
            .map(|row| row.iter().map(|c| c.channel() as u8).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for EgoObservation {
    type Error = String;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self, String> {
        let k = rows.len();
        if k == 0 {
            return Err("observation window is empty".into());
        }
        let mut cells = Vec::with_capacity(k * k);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(format!("observation row {r} has {} cells, expected {k}", row.len()));
            }
            for &code in row {
                cells.push(CellCode::from_channel(code).ok_or_else(|| format!("unknown cell code {code}"))?);
            }
        }
        Ok(Self { k, cells })
    }
}

/// Extracts the forward-biased `k x k` window around `pose`, rotated so the
/// heading points up. `cell_at(row, col)` must return `OutOfBounds` off-map.
pub fn egocentric_window(k: usize, pose: Pose, cell_at: impl Fn(i64, i64) -> CellCode) -> EgoObservation {
    let half = (k / 2) as i64;
    let (fr, fc) = pose.heading.delta();
    // right-hand direction is the heading turned clockwise
    let (rr, rc) = pose.heading.right().delta();
    let mut cells = Vec::with_capacity(k * k);
    for i in 0..k {
        let ahead = (k - 1 - i) as i64;
        for j in 0..k {
            let side = j as i64 - half;
            let row = pose.row + ahead * fr + side * rr;
            let col = pose.col + ahead * fc + side * rc;
            cells.push(cell_at(row, col));
        }
    }
    EgoObservation { k, cells }
}
