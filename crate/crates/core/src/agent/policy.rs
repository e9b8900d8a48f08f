use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, EgoObservation, CHANNELS};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, Params, Tape, Tensor, Var};

/// Feed-forward actor-critic over one egocentric observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    params: Params,
    hidden: usize,
    features: usize,
    ids: [ParamId; 8],
}

/// Result of sampling the policy at one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActOutput {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
}

/// Tape handles for a batch forward pass.
pub struct Forward {
    pub logits: Var,
    pub values: Var,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

impl ActorCritic {
    pub fn new(view: usize, hidden: usize, seed: u64) -> Result<Self> {
        if view == 0 || hidden == 0 {
            return Err(Error::Config("actor-critic: view and hidden must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = view * view * CHANNELS;
        let mut p = Params::new();
        let ids = [
            p.push_glorot("in.w", features, hidden, 1.0, &mut rng),
            p.push_zeros("in.b", &[1, hidden]),
            p.push_glorot("h.w", hidden, hidden, 1.0, &mut rng),
            p.push_zeros("h.b", &[1, hidden]),
            p.push_glorot("pi.w", hidden, Action::COUNT, 0.01, &mut rng),
            p.push_zeros("pi.b", &[1, Action::COUNT]),
            p.push_glorot("v.w", hidden, 1, 1.0, &mut rng),
            p.push_zeros("v.b", &[1, 1]),
        ];
        Ok(Self {
            params: p,
            hidden,
            features,
            ids,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn feature_count(&self) -> usize {
        self.features
    }

    fn check(&self, obs: &EgoObservation) -> Result<()> {
        if obs.feature_count() != self.features {
            return Err(Error::Config(format!(
                "observation has {} features, policy expects {}",
                obs.feature_count(),
                self.features
            )));
        }
        Ok(())
    }

    /// Logits and value for one observation, off the tape.
    pub fn evaluate(&self, obs: &EgoObservation) -> Result<([f64; 3], f64)> {
        self.check(obs)?;
        let t = |i: usize| self.params.get(self.ids[i]);
        let dense = |x: &[f64], w: &Tensor, b: &Tensor| -> Vec<f64> {
            let mut out = vec![0.0; w.cols()];
            for (p, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (o, &wv) in out.iter_mut().zip(w.row_slice(p)) {
                    *o += xv * wv;
                }
            }
            out.iter().zip(b.data()).map(|(o, b)| o + b).collect()
        };
        let mut z = vec![0.0; self.hidden];
        for j in obs.active_features() {
            for (o, &w) in z.iter_mut().zip(t(0).row_slice(j)) {
                *o += w;
            }
        }
        let z: Vec<f64> = z.iter().zip(t(1).data()).map(|(o, b)| (o + b).tanh()).collect();
        let z: Vec<f64> = dense(&z, t(2), t(3)).into_iter().map(f64::tanh).collect();
        let logits = dense(&z, t(4), t(5));
        let value = dense(&z, t(6), t(7))[0];
        Ok(([logits[0], logits[1], logits[2]], value))
    }

    /// Samples an action with its log-probability and the value estimate.
    pub fn act(&self, obs: &EgoObservation, rng: &mut impl Rng) -> Result<ActOutput> {
        let (logits, value) = self.evaluate(obs)?;
        let logp = log_softmax(&logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut choice = Action::COUNT - 1;
        for (i, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                choice = i;
                break;
            }
        }
        Ok(ActOutput {
            action: Action::from_index(choice).expect("index below action count"),
            log_prob: logp[choice],
            value,
        })
    }

    pub fn value(&self, obs: &EgoObservation) -> Result<f64> {
        Ok(self.evaluate(obs)?.1)
    }

    /// Batch forward on `tape` given active feature indices per row.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], rows: &[Vec<usize>]) -> Result<Forward> {
        let v = |i: usize| vars[self.ids[i].0];
        let x = tape.embed_sum(v(0), rows)?;
        let x = tape.add_row(x, v(1))?;
        let z = tape.tanh(x);
        let z = tape.affine(z, v(2), v(3))?;
        let z = tape.tanh(z);
        let logits = tape.affine(z, v(4), v(5))?;
        let values = tape.affine(z, v(6), v(7))?;
        Ok(Forward { logits, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::CellCode;

    fn obs() -> EgoObservation {
        let mut cells = vec![CellCode::Walkway; 9];
        cells[0] = CellCode::Street;
        EgoObservation::from_cells(3, cells)
    }

    fn set_logits(net: &mut ActorCritic, logits: [f64; 3]) {
        let (w, b) = (net.ids[4], net.ids[5]);
        net.params.get_mut(w).data_mut().fill(0.0);
        net.params.get_mut(b).data_mut().copy_from_slice(&logits);
    }

    #[test]
    fn uniform_logits_give_uniform_policy() {
        let mut net = ActorCritic::new(3, 8, 0).unwrap();
        set_logits(&mut net, [0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = net.act(&obs(), &mut rng).unwrap();
        assert!((out.log_prob - (1.0f64 / 3.0).ln()).abs() < 1e-12);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[net.act(&obs(), &mut rng).unwrap().action.index()] += 1;
        }
        assert!(counts.iter().all(|&c| (900..1100).contains(&c)), "{counts:?}");
    }

    #[test]
    fn saturated_logits_pick_first_action() {
        let mut net = ActorCritic::new(3, 8, 0).unwrap();
        set_logits(&mut net, [10.0, -10.0, -10.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = net.act(&obs(), &mut rng).unwrap();
        assert_eq!(out.action, Action::Forward);
        assert!(out.log_prob.exp() > 1.0 - 1e-8);
    }

    #[test]
    fn sampling_is_reproducible() {
        let net = ActorCritic::new(3, 8, 4).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| net.act(&obs(), &mut rng).unwrap().action).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn tape_and_direct_forward_agree() {
        let net = ActorCritic::new(3, 8, 5).unwrap();
        let (logits, value) = net.evaluate(&obs()).unwrap();
        let mut tape = Tape::new();
        let bound = net.params.bind(&mut tape);
        let f = net.forward(&mut tape, bound.vars(), &[obs().active_features()]).unwrap();
        for (a, b) in tape.value(f.logits).data().iter().zip(logits) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((tape.value(f.values).item() - value).abs() < 1e-12);
    }
}
