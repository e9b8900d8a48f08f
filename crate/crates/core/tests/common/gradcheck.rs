//! Reverse-mode gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vicarious::agent::{loss_and_gradients, ActorCritic, Batch, PpoConfig};
use vicarious::demos::{script_both, Trajectory};
use vicarious::envs::{EnvConfig, SidewalkConfig};
use vicarious::numerics::{Tape, Tensor, Var};
use vicarious::smann::{SmannConfig, SmannModel, TrainConfig};

pub const TRIALS: u64 = 100;
pub const TOL: f64 = 1e-4;
const H: f64 = 1e-6;

/// `|a - n| / max(|a| + |n|, floor)` over the whole gradient vector.
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-7)
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
fn off_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m: f64 = rng.random_range(0.1..1.5);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn check<F>(worst: &mut f64, inputs: &[Tensor], build: F)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out).unwrap().collect(&vars);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut xs = inputs.to_vec();
    for (k, g) in grads.iter().enumerate() {
        for i in 0..xs[k].len() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + H;
            let up = eval(&xs);
            xs[k].data_mut()[i] = orig - H;
            let down = eval(&xs);
            xs[k].data_mut()[i] = orig;
            analytic.push(g.data()[i]);
            numeric.push((up - down) / (2.0 * H));
        }
    }
    *worst = worst.max(rel_error(&analytic, &numeric));
}

fn each_trial(mut f: impl FnMut(&mut ChaCha8Rng)) {
    for seed in 0..TRIALS {
        f(&mut ChaCha8Rng::seed_from_u64(seed));
    }
}

/// Worst relative error over all trials.
pub fn elementwise_primitives() -> f64 {
    let mut worst: f64 = 0.0;
    each_trial(|rng| {
        let (r, c) = (rng.random_range(1..4), rng.random_range(1..5));
        let a = random_tensor(rng, r, c, -1.5, 1.5);
        let b = random_tensor(rng, r, c, -1.5, 1.5);
        let p = random_tensor(rng, r, c, 0.2, 2.0);
        check(&mut worst, &[a.clone(), b.clone()], |t, v| {
            let s = t.add(v[0], v[1]).unwrap();
            let d = t.sub(v[0], v[1]).unwrap();
            let m = t.mul(s, d).unwrap();
            t.sum(m)
        });
        check(&mut worst, std::slice::from_ref(&a), |t, v| {
            let x = t.tanh(v[0]);
            let y = t.sigmoid(x);
            let z = t.exp(y);
            let w = t.scale(z, 0.7);
            let w = t.add_scalar(w, -0.3);
            t.mean(w)
        });
        check(&mut worst, &[p], |t, v| {
            let l = t.ln(v[0]);
            t.sum(l)
        });
        let k = off_zero(rng, r, c);
        check(&mut worst, std::slice::from_ref(&k), |t, v| {
            let x = t.relu(v[0]);
            let x = t.mul(x, v[0]).unwrap();
            t.sum(x)
        });
        let shifted = off_zero(rng, r, c);
        check(&mut worst, &[k.clone(), shifted], |t, v| {
            let m = t.minimum(v[0], v[1]).unwrap();
            let m = t.mul(m, m).unwrap();
            t.sum(m)
        });
        let inner = k.map(|x| if x.abs() < 0.75 { x * 0.3 } else { x * 0.5 });
        check(&mut worst, &[inner], |t, v| {
            let c = t.clamp(v[0], -0.3, 0.3);
            let e = t.exp(c);
            t.sum(e)
        });
    });
    worst
}

/// Worst relative error over all trials.
pub fn matrix_primitives() -> f64 {
    let mut worst: f64 = 0.0;
    each_trial(|rng| {
        let (m, k, n) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..4));
        let a = random_tensor(rng, m, k, -1.0, 1.0);
        let w = random_tensor(rng, k, n, -1.0, 1.0);
        let b = random_tensor(rng, 1, n, -1.0, 1.0);
        check(&mut worst, &[a.clone(), w.clone(), b.clone()], |t, v| {
            let x = t.matmul(v[0], v[1]).unwrap();
            let x = t.add_row(x, v[2]).unwrap();
            let x = t.transpose(x);
            let x = t.tanh(x);
            t.sum(x)
        });
        check(&mut worst, &[a.clone(), w.clone(), b.clone()], |t, v| {
            let x = t.affine(v[0], v[1], v[2]).unwrap();
            let s = t.softmax_rows(x);
            let l = t.log_softmax_rows(x);
            let p = t.pick(l, &vec![0; m]).unwrap();
            let q = t.mul(s, s).unwrap();
            let q = t.sum(q);
            let p = t.sum(p);
            t.add(p, q).unwrap()
        });
        check(&mut worst, &[a.clone(), a.map(|x| x * 2.0 - 0.1)], |t, v| {
            let c = t.concat_cols(&[v[0], v[1]]).unwrap();
            let s = t.slice_cols(c, 1, k).unwrap();
            let r = t.reshape(s, &[1, m * k]).unwrap();
            let r = t.sigmoid(r);
            t.sum(r)
        });
        let keys = random_tensor(rng, n + 1, k, -1.0, 1.0);
        check(&mut worst, &[a.clone(), keys], |t, v| {
            let c = t.cosine_rows(v[0], v[1]).unwrap();
            let s = t.softmax_rows(c);
            let s = t.mul(s, c).unwrap();
            t.sum(s)
        });
        let rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
        check(&mut worst, std::slice::from_ref(&a), |t, v| {
            let g = t.gather_rows(v[0], &rows).unwrap();
            let g = t.tanh(g);
            t.sum(g)
        });
        let features = rng.random_range(2..7);
        let table = random_tensor(rng, features, n, -1.0, 1.0);
        let ids: Vec<Vec<usize>> = (0..m)
            .map(|_| (0..rng.random_range(1..4)).map(|_| rng.random_range(0..features)).collect())
            .collect();
        check(&mut worst, &[table], |t, v| {
            let e = t.embed_sum(v[0], &ids).unwrap();
            let e = t.tanh(e);
            t.sum(e)
        });
    });
    worst
}

fn tiny_smann(seed: u64) -> (SmannModel, Vec<Trajectory>) {
    let env = EnvConfig::Sidewalk(SidewalkConfig { view: 3, ..SidewalkConfig::default() });
    let demos = script_both(&env, 2, 2, seed).unwrap();
    let cfg = SmannConfig {
        embed_dim: 3,
        memory_slots: 4,
        read_heads: 2,
        write_heads: 2,
        depth: 3,
        hidden: 4,
        window_len: 2,
        ..SmannConfig::default()
    };
    let mut model = SmannModel::new(cfg, env.view(), seed).unwrap();
    // A short training run fills memory and moves weights off their init.
    model.train(&demos, &TrainConfig { epochs: 1, lr: 1e-3, seed, ..TrainConfig::default() }).unwrap();
    (model, demos.trajectories)
}

/// A model whose loss can be re-evaluated after nudging one parameter.
trait Probe {
    fn param(&mut self, tensor: usize, index: usize) -> &mut f64;
    fn loss(&self) -> f64;
}

struct SmannProbe<'a> {
    model: SmannModel,
    batch: Vec<&'a Trajectory>,
    write: bool,
}

impl Probe for SmannProbe<'_> {
    fn param(&mut self, tensor: usize, index: usize) -> &mut f64 {
        let t = self.model.params_mut().unwrap().tensors_mut().nth(tensor).unwrap();
        &mut t.data_mut()[index]
    }

    fn loss(&self) -> f64 {
        self.model.loss_and_gradients(&self.batch, self.write).unwrap().0
    }
}

struct PolicyProbe {
    net: ActorCritic,
    batch: Batch,
    cfg: PpoConfig,
}

impl Probe for PolicyProbe {
    fn param(&mut self, tensor: usize, index: usize) -> &mut f64 {
        &mut self.net.params_mut().tensors_mut().nth(tensor).unwrap().data_mut()[index]
    }

    fn loss(&self) -> f64 {
        loss_and_gradients(&self.net, &self.batch, &self.cfg).unwrap().0.total
    }
}

/// Finite differences on a random subset of parameter coordinates.
fn check_params(worst: &mut f64, rng: &mut ChaCha8Rng, grads: &[Tensor], probe: &mut impl Probe) {
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for _ in 0..30 {
        let k = rng.random_range(0..grads.len());
        let i = rng.random_range(0..grads[k].len());
        let orig = *probe.param(k, i);
        *probe.param(k, i) = orig + H;
        let up = probe.loss();
        *probe.param(k, i) = orig - H;
        let down = probe.loss();
        *probe.param(k, i) = orig;
        analytic.push(grads[k].data()[i]);
        numeric.push((up - down) / (2.0 * H));
    }
    *worst = worst.max(rel_error(&analytic, &numeric));
}

/// Worst relative error over all trials.
pub fn smann_encode_read_classify() -> f64 {
    let mut worst: f64 = 0.0;
    each_trial(|rng| {
        let seed = rng.random_range(0..u64::MAX / 2);
        let (model, trajs) = tiny_smann(seed);
        let batch: Vec<&Trajectory> = (0..3).map(|_| &trajs[rng.random_range(0..trajs.len())]).collect();
        let write = rng.random_bool(0.5);
        let (_, grads) = model.loss_and_gradients(&batch, write).unwrap();
        let mut probe = SmannProbe { model, batch, write };
        check_params(&mut worst, rng, &grads, &mut probe);
    });
    worst
}

/// Worst relative error over all trials.
pub fn actor_critic_losses() -> f64 {
    let mut worst: f64 = 0.0;
    each_trial(|rng| {
        let net = ActorCritic::new(3, 5, rng.random()).unwrap();
        let features = 3 * 3 * vicarious::envs::CHANNELS;
        let n = rng.random_range(2..7);
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut r: Vec<usize> = (0..9).map(|c| c * vicarious::envs::CHANNELS + rng.random_range(0..vicarious::envs::CHANNELS)).collect();
                r.retain(|&f| f < features);
                r
            })
            .collect();
        let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        // Place each ratio clearly inside or outside the clip range so no
        // sample sits on a kink.
        let mut tape = Tape::new();
        let bound = net.params().bind(&mut tape);
        let f = net.forward(&mut tape, bound.vars(), &rows).unwrap();
        let lp = tape.log_softmax_rows(f.logits);
        let current: Vec<f64> = (0..n).map(|r| tape.value(lp).at(r, actions[r])).collect();
        let old_log_probs = current
            .iter()
            .map(|c| {
                let shift = match rng.random_range(0..3) {
                    0 => rng.random_range(-0.1..0.1),
                    1 => rng.random_range(0.4..0.8),
                    _ => -rng.random_range(0.4..0.8),
                };
                c - shift
            })
            .collect();
        let batch = Batch {
            features: rows,
            actions,
            old_log_probs,
            advantages: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            returns: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let cfg = PpoConfig::default();
        let (_, grads) = loss_and_gradients(&net, &batch, &cfg).unwrap();
        let mut probe = PolicyProbe { net, batch, cfg };
        check_params(&mut worst, rng, &grads, &mut probe);
    });
    worst
}

/// Every suite with its worst relative error.
pub fn all() -> Vec<(&'static str, f64)> {
    vec![
        ("elementwise primitives", elementwise_primitives()),
        ("matrix primitives", matrix_primitives()),
        ("smann encode/read/classify", smann_encode_read_classify()),
        ("actor-critic losses", actor_critic_losses()),
    ]
}
