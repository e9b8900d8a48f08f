//! Siamese memory-augmented classifier.
//!
//! One shared gate network computes every LSTM gate from the current
//! observation, the previous hidden state and the previous memory reads.
//! The final hidden state of a window is its embedding; content reads against
//! an additive LRU-written memory and a softmax output layer classify it.

mod memory;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use memory::{classify, kernel_weights, retrieve, Memory};

use crate::demos::{DemoSet, Trajectory, Valence};
use crate::envs::{EgoObservation, CHANNELS};
use crate::error::{Error, Result};
use crate::numerics::{clip_grad_norm, Adam, AdamConfig, Bound, ParamId, Params, Tape, Tensor, Var};

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmannConfig {
    /// Embedding and memory width `d`.
    pub embed_dim: usize,
    /// Memory slots `N`.
    pub memory_slots: usize,
    pub read_heads: usize,
    pub write_heads: usize,
    /// Affine layers in the gate network, input and gate projection included.
    pub depth: usize,
    pub hidden: usize,
    pub window_len: usize,
    pub usage_decay: f64,
}

impl Default for SmannConfig {
    fn default() -> Self {
        Self {
            embed_dim: 40,
            memory_slots: 128,
            read_heads: 10,
            write_heads: 10,
            depth: 7,
            hidden: 64,
            window_len: 3,
            usage_decay: 0.95,
        }
    }
}

impl SmannConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("smann: {msg}")));
        if self.embed_dim == 0 || self.memory_slots == 0 || self.hidden == 0 || self.window_len == 0 {
            return bad("embed_dim, memory_slots, hidden and window_len must be positive");
        }
        if self.read_heads == 0 || self.write_heads == 0 {
            return bad("at least one read and one write head");
        }
        if self.depth < 2 {
            return bad("depth must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.usage_decay) {
            return bad("usage_decay must lie in [0, 1]");
        }
        Ok(())
    }

    fn read_width(&self) -> usize {
        self.read_heads * self.embed_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Trajectories per optimisation step; memory writes within a batch stay on the tape.
    pub batch_size: usize,
    pub max_grad_norm: f64,
    /// Classes whose demonstrations are written to memory.
    pub memory_classes: Vec<Valence>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            lr: 1e-5,
            batch_size: 4,
            max_grad_norm: 5.0,
            memory_classes: Valence::ALL.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
    /// Accuracy of the finished model over the training set, memory read-only.
    pub final_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Ids {
    obs_in: ParamId,
    state_in: ParamId,
    in_bias: ParamId,
    hidden: Vec<(ParamId, ParamId)>,
    gates_w: ParamId,
    gates_b: ParamId,
    key_w: ParamId,
    key_b: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// Tape-side state of one pass: bound parameters and the current memory.
struct Pass<'a> {
    tape: Tape,
    bound: Bound,
    memory: Var,
    occupied: Vec<bool>,
    usage: Vec<f64>,
    last_reads_value: Option<Tensor>,
    last_writes_value: Option<Tensor>,
    model: &'a SmannModel,
}

struct ReadOut {
    weights: Var,
    vectors: Var,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SmannModel {
    config: SmannConfig,
    view: usize,
    params: Params,
    ids: Ids,
    memory: Memory,
    frozen: bool,
    #[serde(skip)]
    cache: Mutex<HashMap<Vec<EgoObservation>, [f64; 2]>>,
}

impl Clone for SmannModel {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            view: self.view,
            params: self.params.clone(),
            ids: self.ids.clone(),
            memory: self.memory.clone(),
            frozen: self.frozen,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl PartialEq for SmannModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.view == other.view
            && self.params == other.params
            && self.memory == other.memory
            && self.frozen == other.frozen
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: SmannModel,
}

impl SmannModel {
    /// Fresh model for `view x view` observations.
    pub fn new(config: SmannConfig, view: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if view == 0 {
            return Err(Error::Config("smann: view must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h) = (config.embed_dim, config.hidden);
        let features = view * view * CHANNELS;
        let mut p = Params::new();
        let obs_in = p.push_glorot("gate.in.obs", features, h, 1.0, &mut rng);
        let state_in = p.push_glorot("gate.in.state", d + config.read_width(), h, 1.0, &mut rng);
        let in_bias = p.push_zeros("gate.in.b", &[1, h]);
        let hidden = (1..config.depth - 1)
            .map(|i| {
                let w = p.push_glorot(format!("gate.h{i}.w"), h, h, 1.0, &mut rng);
                let b = p.push_zeros(format!("gate.h{i}.b"), &[1, h]);
                (w, b)
            })
            .collect();
        let gates_w = p.push_glorot("gate.out.w", h, 4 * d, 1.0, &mut rng);
        // forget gate starts open
        let mut gb = vec![0.0; 4 * d];
        gb[..d].fill(1.0);
        let gates_b = p.push("gate.out.b", Tensor::row(gb));
        let key_w = p.push_glorot("read.key.w", d, config.read_width(), 1.0, &mut rng);
        let key_b = p.push_zeros("read.key.b", &[1, config.read_width()]);
        let gate_w = p.push_glorot("write.gate.w", d, config.write_heads, 1.0, &mut rng);
        let gate_b = p.push_zeros("write.gate.b", &[1, config.write_heads]);
        let out_w = p.push_glorot("out.w", d + config.read_width(), Valence::COUNT, 1.0, &mut rng);
        let out_b = p.push_zeros("out.b", &[1, Valence::COUNT]);
        let memory = Memory::new(config.memory_slots, d, config.read_heads, config.write_heads);
        Ok(Self {
            config,
            view,
            params: p,
            ids: Ids {
                obs_in,
                state_in,
                in_bias,
                hidden,
                gates_w,
                gates_b,
                key_w,
                key_b,
                gate_w,
                gate_b,
                out_w,
                out_b,
            },
            memory,
            frozen: false,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &SmannConfig {
        &self.config
    }

    pub fn view(&self) -> usize {
        self.view
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable parameters; errors once frozen.
    pub fn params_mut(&mut self) -> Result<&mut Params> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(&mut self.params)
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn set_memory(&mut self, memory: Memory) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        if memory.matrix.shape() != self.memory.matrix.shape() {
            return Err(Error::Config(format!(
                "memory {:?} does not fit model {:?}",
                memory.matrix.shape(),
                self.memory.matrix.shape()
            )));
        }
        self.memory = memory;
        Ok(())
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    fn check_window(&self, window: &[EgoObservation]) -> Result<()> {
        if window.len() != self.config.window_len {
            return Err(Error::WindowLength {
                expected: self.config.window_len,
                got: window.len(),
            });
        }
        if let Some(o) = window.iter().find(|o| o.k() != self.view) {
            return Err(Error::Config(format!("observation view {} does not match model view {}", o.k(), self.view)));
        }
        Ok(())
    }

    fn pass(&self) -> Pass<'_> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let memory = tape.leaf(self.memory.matrix.clone());
        Pass {
            tape,
            bound,
            memory,
            occupied: self.memory.occupied(),
            usage: self.memory.usage.clone(),
            last_reads_value: None,
            last_writes_value: None,
            model: self,
        }
    }

    /// Embedding of a window: the final hidden state of the controller.
    pub fn encode(&self, window: &[EgoObservation]) -> Result<Vec<f64>> {
        self.check_window(window)?;
        let mut pass = self.pass();
        let e = pass.encode(window)?;
        Ok(pass.tape.value(e).data().to_vec())
    }

    /// Class probabilities `[p(neg), p(pos)]` without touching memory.
    pub fn predict(&self, window: &[EgoObservation]) -> Result<[f64; 2]> {
        self.check_window(window)?;
        let mut pass = self.pass();
        let (logits, _, _) = pass.classify_window(window)?;
        let p = pass.tape.softmax_rows(logits);
        let v = pass.tape.value(p).data();
        Ok([v[0], v[1]])
    }

    /// Frozen forward pass. Results are memoised per window, which is exact
    /// because a frozen model is a pure function of its input.
    pub fn infer(&self, window: &[EgoObservation]) -> Result<[f64; 2]> {
        if !self.frozen {
            return Err(Error::NotFrozen);
        }
        if let Some(p) = self.cache.lock().expect("cache lock").get(window) {
            return Ok(*p);
        }
        let p = self.predict(window)?;
        self.cache.lock().expect("cache lock").insert(window.to_vec(), p);
        Ok(p)
    }

    /// Fraction of trajectories whose argmax class matches their valence.
    pub fn accuracy(&self, demos: &DemoSet) -> Result<f64> {
        if demos.is_empty() {
            return Err(Error::Empty("demo set".into()));
        }
        let mut correct = 0;
        for traj in &demos.trajectories {
            let p = self.predict(&traj.observations)?;
            let guess = if p[1] > p[0] { Valence::Positive } else { Valence::Negative };
            correct += usize::from(guess == traj.valence()?);
        }
        Ok(correct as f64 / demos.len() as f64)
    }

    /// Cross-entropy training over `demos`; memory is cleared at the start of
    /// every epoch and rebuilt by that epoch's writes.
    pub fn train(&mut self, demos: &DemoSet, cfg: &TrainConfig) -> Result<TrainReport> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        if demos.is_empty() {
            return Err(Error::Empty("demo set".into()));
        }
        if cfg.batch_size == 0 {
            return Err(Error::Config("smann: batch_size must be positive".into()));
        }
        for traj in &demos.trajectories {
            self.check_window(&traj.observations)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut adam = Adam::new(&self.params, AdamConfig::with_lr(cfg.lr));
        let mut order: Vec<usize> = (0..demos.len()).collect();
        let mut report = TrainReport {
            epoch_loss: Vec::with_capacity(cfg.epochs),
            epoch_accuracy: Vec::with_capacity(cfg.epochs),
            final_accuracy: 0.0,
        };
        for epoch in 0..cfg.epochs {
            self.memory = Memory::new(self.config.memory_slots, self.config.embed_dim, self.config.read_heads, self.config.write_heads);
            order.shuffle(&mut rng);
            let (mut loss_sum, mut correct) = (0.0, 0);
            for batch in order.chunks(cfg.batch_size) {
                let trajs: Vec<&Trajectory> = batch.iter().map(|&i| &demos.trajectories[i]).collect();
                let step = self.batch_step(&trajs, cfg)?;
                loss_sum += step.loss * trajs.len() as f64;
                correct += step.correct;
                let mut grads = step.grads;
                clip_grad_norm(&mut grads, cfg.max_grad_norm);
                adam.step(&mut self.params, &grads)?;
            }
            let n = demos.len() as f64;
            report.epoch_loss.push(loss_sum / n);
            report.epoch_accuracy.push(correct as f64 / n);
            log::debug!("smann epoch {epoch}: loss {:.4} acc {:.3}", loss_sum / n, correct as f64 / n);
        }
        report.final_accuracy = self.accuracy(demos)?;
        Ok(report)
    }

    fn batch_step(&mut self, trajs: &[&Trajectory], cfg: &TrainConfig) -> Result<BatchStep> {
        let mut pass = self.pass();
        let mut losses = Vec::with_capacity(trajs.len());
        let mut correct = 0;
        for traj in trajs {
            let class = traj.valence()?;
            let (logits, e, read) = pass.classify_window(&traj.observations)?;
            let lp = pass.tape.log_softmax_rows(logits);
            let picked = pass.tape.pick(lp, &[class.index()])?;
            losses.push(picked);
            let probs = pass.tape.value(logits).data();
            let guess = if probs[1] > probs[0] { Valence::Positive } else { Valence::Negative };
            correct += usize::from(guess == class);
            if cfg.memory_classes.contains(&class) {
                pass.write(e, read.as_ref())?;
            }
        }
        let stacked = pass.tape.concat_cols(&losses)?;
        let mean = pass.tape.mean(stacked);
        let loss = pass.tape.scale(mean, -1.0);
        let loss_value = pass.tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::NonFinite("smann training loss".into()));
        }
        let grads = pass.tape.backward(loss)?.collect(pass.bound.vars());
        let matrix = pass.tape.value(pass.memory).clone();
        let usage = pass.usage;
        let reads = pass.last_reads_value.take().unwrap_or_else(|| self.memory.read_weights.clone());
        let writes = pass.last_writes_value.take().unwrap_or_else(|| self.memory.write_weights.clone());
        self.memory = Memory {
            matrix,
            usage,
            read_weights: reads,
            write_weights: writes,
        };
        Ok(BatchStep {
            loss: loss_value,
            correct,
            grads,
        })
    }

    /// Loss and gradients of a batch against the current memory, without
    /// changing the model. Used for gradient checks.
    pub fn loss_and_gradients(&self, trajs: &[&Trajectory], write: bool) -> Result<(f64, Vec<Tensor>)> {
        let mut pass = self.pass();
        let mut losses = Vec::new();
        for traj in trajs {
            self.check_window(&traj.observations)?;
            let (logits, e, read) = pass.classify_window(&traj.observations)?;
            let lp = pass.tape.log_softmax_rows(logits);
            losses.push(pass.tape.pick(lp, &[traj.valence()?.index()])?);
            if write {
                pass.write(e, read.as_ref())?;
            }
        }
        let stacked = pass.tape.concat_cols(&losses)?;
        let mean = pass.tape.mean(stacked);
        let loss = pass.tape.scale(mean, -1.0);
        let value = pass.tape.value(loss).item();
        let grads = pass.tape.backward(loss)?.collect(pass.bound.vars());
        Ok((value, grads))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = CheckpointRef {
            version: CHECKPOINT_VERSION,
            model: self,
        };
        fs::write(path, serde_json::to_vec(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: format!("unsupported checkpoint version {}", ckpt.version),
            });
        }
        ckpt.model.config.validate()?;
        Ok(ckpt.model)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    version: u32,
    model: &'a SmannModel,
}

struct BatchStep {
    loss: f64,
    correct: usize,
    grads: Vec<Tensor>,
}

impl Pass<'_> {
    fn p(&self, id: ParamId) -> Var {
        self.bound.var(id)
    }

    fn zeros(&mut self, cols: usize) -> Var {
        self.tape.leaf(Tensor::zeros(&[1, cols]))
    }

    fn encode(&mut self, window: &[EgoObservation]) -> Result<Var> {
        let cfg = &self.model.config;
        let (d, rw) = (cfg.embed_dim, cfg.read_width());
        let mut h = self.zeros(d);
        let mut c = self.zeros(d);
        let mut r = self.zeros(rw);
        for (t, obs) in window.iter().enumerate() {
            if t > 0 {
                r = match self.read(h)? {
                    Some(read) => read.vectors,
                    None => self.zeros(rw),
                };
            }
            (h, c) = self.cell(obs, h, c, r)?;
        }
        Ok(h)
    }

    fn cell(&mut self, obs: &EgoObservation, h: Var, c: Var, r: Var) -> Result<(Var, Var)> {
        let ids = &self.model.ids;
        let d = self.model.config.embed_dim;
        let x = self.tape.embed_sum(self.p(ids.obs_in), &[obs.active_features()])?;
        let hr = self.tape.concat_cols(&[h, r])?;
        let s = self.tape.matmul(hr, self.p(ids.state_in))?;
        let z = self.tape.add(x, s)?;
        let z = self.tape.add_row(z, self.p(ids.in_bias))?;
        let mut z = self.tape.tanh(z);
        for &(w, b) in &ids.hidden {
            let a = self.tape.affine(z, self.p(w), self.p(b))?;
            z = self.tape.tanh(a);
        }
        let g = self.tape.affine(z, self.p(ids.gates_w), self.p(ids.gates_b))?;
        let f = self.tape.slice_cols(g, 0, d)?;
        let f = self.tape.sigmoid(f);
        let i = self.tape.slice_cols(g, d, d)?;
        let i = self.tape.sigmoid(i);
        let cand = self.tape.slice_cols(g, 2 * d, d)?;
        let cand = self.tape.tanh(cand);
        let o = self.tape.slice_cols(g, 3 * d, d)?;
        let o = self.tape.sigmoid(o);
        let keep = self.tape.mul(f, c)?;
        let add = self.tape.mul(i, cand)?;
        let c_new = self.tape.add(keep, add)?;
        let squashed = self.tape.tanh(c_new);
        let h_new = self.tape.mul(o, squashed)?;
        Ok((h_new, c_new))
    }

    /// Content read with per-head learned keys; `None` while memory is empty.
    fn read(&mut self, query: Var) -> Result<Option<ReadOut>> {
        if !self.occupied.iter().any(|&o| o) {
            return Ok(None);
        }
        let ids = &self.model.ids;
        let cfg = &self.model.config;
        let (heads, d) = (cfg.read_heads, cfg.embed_dim);
        let keys = self.tape.affine(query, self.p(ids.key_w), self.p(ids.key_b))?;
        let keys = self.tape.reshape(keys, &[heads, d])?;
        let cos = self.tape.cosine_rows(keys, self.memory)?;
        let mask = self.tape.leaf(memory::mask(&self.occupied, heads));
        let logits = self.tape.add(cos, mask)?;
        let weights = self.tape.softmax_rows(logits);
        let vectors = self.tape.matmul(weights, self.memory)?;
        let vectors = self.tape.reshape(vectors, &[1, heads * d])?;
        Ok(Some(ReadOut { weights, vectors }))
    }

    /// Returns (logits, embedding, read of the embedding).
    fn classify_window(&mut self, window: &[EgoObservation]) -> Result<(Var, Var, Option<ReadOut>)> {
        let e = self.encode(window)?;
        let read = self.read(e)?;
        let r = match &read {
            Some(read) => read.vectors,
            None => self.zeros(self.model.config.read_width()),
        };
        let feats = self.tape.concat_cols(&[e, r])?;
        let ids = &self.model.ids;
        let logits = self.tape.affine(feats, self.p(ids.out_w), self.p(ids.out_b))?;
        if let Some(read) = &read {
            self.last_reads_value = Some(self.tape.value(read.weights).clone());
        }
        Ok((logits, e, read))
    }

    /// LRU write of `e`: each head blends its most recent read weights with
    /// the one-hot of a least-used slot through a learned gate.
    fn write(&mut self, e: Var, read: Option<&ReadOut>) -> Result<()> {
        let ids = &self.model.ids;
        let cfg = &self.model.config;
        let (heads, n) = (cfg.write_heads, cfg.memory_slots);
        let gate = self.tape.affine(e, self.p(ids.gate_w), self.p(ids.gate_b))?;
        let gate = self.tape.sigmoid(gate);
        let gate_col = self.tape.transpose(gate);
        let ones_n = self.tape.leaf(Tensor::filled(&[1, n], 1.0));
        let g = self.tape.matmul(gate_col, ones_n)?;
        let least = memory::lru_onehots(&self.usage, heads);
        let lu = self.tape.leaf(least);
        let one_minus = self.tape.scale(g, -1.0);
        let one_minus = self.tape.add_scalar(one_minus, 1.0);
        let fresh = self.tape.mul(one_minus, lu)?;
        let weights = match read {
            Some(read) => {
                let idx: Vec<usize> = (0..heads).map(|h| h % cfg.read_heads).collect();
                let prev = self.tape.gather_rows(read.weights, &idx)?;
                let reuse = self.tape.mul(g, prev)?;
                self.tape.add(reuse, fresh)?
            }
            None => fresh,
        };
        let ones_h = self.tape.leaf(Tensor::filled(&[1, heads], 1.0));
        let total = self.tape.matmul(ones_h, weights)?;
        let total_col = self.tape.transpose(total);
        let delta = self.tape.matmul(total_col, e)?;
        self.memory = self.tape.add(self.memory, delta)?;

        let wv = self.tape.value(weights).clone();
        let rv = match read {
            Some(read) => self.tape.value(read.weights).clone(),
            None => Tensor::zeros(&[cfg.read_heads, n]),
        };
        for u in &mut self.usage {
            *u *= cfg.usage_decay;
        }
        for t in [&rv, &wv] {
            for h in 0..t.rows() {
                for (u, w) in self.usage.iter_mut().zip(t.row_slice(h)) {
                    *u += w;
                }
            }
        }
        let mv = self.tape.value(self.memory);
        self.occupied = (0..n).map(|i| mv.row_slice(i).iter().any(|&v| v != 0.0)).collect();
        self.last_writes_value = Some(wv);
        Ok(())
    }
}
