use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

/// Logit offset that removes unwritten slots from a softmax.
pub(crate) const MASKED: f64 = -1e9;

/// External memory: `N x d` matrix, usage, and the last read and write weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    pub matrix: Tensor,
    pub usage: Vec<f64>,
    pub read_weights: Tensor,
    pub write_weights: Tensor,
}

impl Memory {
    pub fn new(slots: usize, width: usize, read_heads: usize, write_heads: usize) -> Self {
        Self {
            matrix: Tensor::zeros(&[slots, width]),
            usage: vec![0.0; slots],
            read_weights: Tensor::zeros(&[read_heads, slots]),
            write_weights: Tensor::zeros(&[write_heads, slots]),
        }
    }

    pub fn slots(&self) -> usize {
        self.matrix.rows()
    }

    pub fn width(&self) -> usize {
        self.matrix.cols()
    }

    /// Slots holding a non-zero row.
    pub fn occupied(&self) -> Vec<bool> {
        (0..self.slots())
            .map(|i| self.matrix.row_slice(i).iter().any(|&v| v != 0.0))
            .collect()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied().iter().filter(|&&o| o).count()
    }

    /// The `n` least-used slots, ties broken by index.
    pub fn least_used(&self, n: usize) -> Vec<usize> {
        least_used(&self.usage, n)
    }

    /// `M(i) += sum_h w_h(i) * e` for every slot.
    pub fn add_weighted(&mut self, e: &[f64], weights: &Tensor) -> Result<()> {
        if e.len() != self.width() || weights.cols() != self.slots() {
            return shape_err(
                "Memory::add_weighted",
                format!("e of {} with weights {:?} into {:?}", e.len(), weights.shape(), self.matrix.shape()),
            );
        }
        let d = self.width();
        for h in 0..weights.rows() {
            for (i, &w) in weights.row_slice(h).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let row = &mut self.matrix.data_mut()[i * d..(i + 1) * d];
                for (m, &x) in row.iter_mut().zip(e) {
                    *m += w * x;
                }
            }
        }
        Ok(())
    }
}

/// Additive mask keeping only written slots, one row per head.
pub(crate) fn mask(occupied: &[bool], heads: usize) -> Tensor {
    let row: Vec<f64> = occupied.iter().map(|&o| if o { 0.0 } else { MASKED }).collect();
    let data = row.iter().copied().cycle().take(heads * row.len()).collect();
    Tensor::matrix(heads, row.len(), data).expect("positive extents")
}

fn least_used(usage: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..usage.len()).collect();
    order.sort_by(|&a, &b| usage[a].total_cmp(&usage[b]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Row `h` is the one-hot of the `h`-th least-used slot.
pub(crate) fn lru_onehots(usage: &[f64], heads: usize) -> Tensor {
    let n = usage.len();
    let order = least_used(usage, n);
    let mut t = Tensor::zeros(&[heads, n]);
    for h in 0..heads {
        t.data_mut()[h * n + order[h % n]] = 1.0;
    }
    t
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Softmax of cosine similarity between `key` and every written row of
/// `memory`; unwritten rows get weight 0.
pub fn kernel_weights(key: &[f64], memory: &Tensor) -> Result<Vec<f64>> {
    if key.len() != memory.cols() {
        return shape_err("kernel_weights", format!("key of {} vs memory {:?}", key.len(), memory.shape()));
    }
    let rows: Vec<Option<f64>> = (0..memory.rows())
        .map(|i| {
            let row = memory.row_slice(i);
            row.iter().any(|&v| v != 0.0).then(|| cosine(key, row))
        })
        .collect();
    let max = rows.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(crate::Error::EmptyMemory);
    }
    let exps: Vec<f64> = rows.iter().map(|c| c.map_or(0.0, |c| (c - max).exp())).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|x| x / total).collect())
}

/// `sum_i w(i) M(i)`.
pub fn retrieve(weights: &[f64], memory: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; memory.cols()];
    for (i, &w) in weights.iter().enumerate() {
        for (o, &m) in out.iter_mut().zip(memory.row_slice(i)) {
            *o += w * m;
        }
    }
    out
}

/// `softmax(W [e; m] + b)` for a single feature row.
pub fn classify(features: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    if features.len() != w.rows() || b.len() != w.cols() {
        return shape_err(
            "classify",
            format!("features {} with W {:?} and b {}", features.len(), w.shape(), b.len()),
        );
    }
    let mut logits = b.to_vec();
    for (i, &x) in features.iter().enumerate() {
        for (l, &wv) in logits.iter_mut().zip(w.row_slice(i)) {
            *l += x * wv;
        }
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|x| x / total).collect())
}
