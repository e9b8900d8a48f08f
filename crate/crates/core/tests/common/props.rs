//! Addressing and gating properties, each checked over `CASES` random inputs.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use vicarious::demos::Valence;
use vicarious::harness::{summarize, welch_compare};
use vicarious::numerics::{Tape, Tensor};
use vicarious::reward::{breakdown, composite, gated_intrinsic, gates, stimuli_baseline, IntrinsicMode, VcConfig};
use vicarious::smann::kernel_weights;

pub const CASES: u32 = 1000;

type Outcome = Result<(), String>;

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// A two-class probability vector.
fn simplex() -> impl Strategy<Value = [f64; 2]> {
    (0.0f64..=1.0).prop_map(|a| [a, 1.0 - a])
}

fn valences() -> impl Strategy<Value = Vec<Valence>> {
    prop_oneof![
        Just(vec![Valence::Negative]),
        Just(vec![Valence::Positive]),
        Just(vec![Valence::Negative, Valence::Positive]),
    ]
}

fn vc(theta: f64, alpha: f64, valences: Vec<Valence>) -> VcConfig {
    VcConfig {
        theta_thr: theta,
        alpha,
        valences,
        ..VcConfig::default()
    }
}

/// A key and a memory whose rows are either unwritten (zero) or random,
/// with at least one written row.
fn memory() -> impl Strategy<Value = (Vec<f64>, Tensor)> {
    (1usize..12, 1usize..6).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-2.0f64..2.0, d),
            prop::collection::vec((any::<bool>(), prop::collection::vec(-3.0f64..3.0, d)), n),
            0..n,
        )
            .prop_map(move |(key, rows, forced)| {
                let mut data = Vec::with_capacity(n * d);
                for (i, (written, mut row)) in rows.into_iter().enumerate() {
                    if written || i == forced {
                        if row.iter().all(|&v| v == 0.0) {
                            row[0] = 1.0;
                        }
                        data.extend(row);
                    } else {
                        data.extend(std::iter::repeat_n(0.0, d));
                    }
                }
                (key, Tensor::matrix(n, d, data).unwrap())
            })
    })
}

pub fn read_weights_are_normalised() -> Outcome {
    run(memory(), |(key, mem)| {
        let w = kernel_weights(&key, &mem).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (i, &wi) in w.iter().enumerate() {
            prop_assert!(wi >= 0.0);
            if mem.row_slice(i).iter().all(|&v| v == 0.0) {
                prop_assert_eq!(wi, 0.0);
            }
        }
        Ok(())
    })
}

pub fn masked_softmax_rows_are_normalised() -> Outcome {
    let strategy = (prop::collection::vec(-30.0f64..30.0, 2..20), prop::collection::vec(any::<bool>(), 20));
    run(strategy, |(logits, mask)| {
        let n = logits.len();
        // The first entry always stays unmasked.
        let masked: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(i, &l)| if mask[i] && i > 0 { l - 1e9 } else { l })
            .collect();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, n, masked).unwrap());
        let s = tape.softmax_rows(x);
        prop_assert!((tape.value(s).sum() - 1.0).abs() < 1e-9);
        Ok(())
    })
}

pub fn gate_counts_fall_as_threshold_rises() -> Outcome {
    let strategy = (prop::collection::vec(simplex(), 1..50), 0.0f64..=1.0, 0.0f64..=1.0, valences());
    run(strategy, |(ps, a, b, valences)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let count = |theta: f64| {
            let cfg = vc(theta, 1.0, valences.clone());
            ps.iter().map(|p| gates(p, &cfg).iter().filter(|&&g| g).count()).sum::<usize>()
        };
        prop_assert!(count(hi) <= count(lo));
        Ok(())
    })
}

pub fn all_gates_open_matches_ungated() -> Outcome {
    run((simplex(), 0.0f64..=1.0, valences()), |(p, theta, valences)| {
        let cfg = vc(theta, 1.0, valences.clone());
        let open = gates(&p, &cfg);
        if valences.iter().all(|v| open[v.index()]) {
            prop_assert_eq!(gated_intrinsic(&p, &cfg), stimuli_baseline(&p, &cfg));
        }
        let wide = vc(0.0, 1.0, valences);
        if p.iter().all(|&x| x > 0.0) {
            prop_assert_eq!(gated_intrinsic(&p, &wide), stimuli_baseline(&p, &wide));
        }
        Ok(())
    })
}

pub fn high_threshold_opens_at_most_one_gate() -> Outcome {
    run((simplex(), 0.5f64..=1.0), |(p, theta)| {
        let cfg = vc(theta, 1.0, vec![Valence::Negative, Valence::Positive]);
        prop_assert!(gates(&p, &cfg).iter().filter(|&&g| g).count() <= 1);
        Ok(())
    })
}

pub fn zero_alpha_keeps_extrinsic_bits() -> Outcome {
    let r_ext = prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), Just(-0.0), Just(0.0)];
    let mode = prop_oneof![Just(IntrinsicMode::None), Just(IntrinsicMode::Stimuli), Just(IntrinsicMode::Gated)];
    run((r_ext, simplex(), 0.0f64..=1.0, valences(), mode), |(r_ext, p, theta, valences, mode)| {
        let cfg = vc(theta, 0.0, valences);
        let r_vic = gated_intrinsic(&p, &cfg);
        prop_assert_eq!(composite(r_ext, r_vic, 0.0).to_bits(), r_ext.to_bits());
        prop_assert_eq!(breakdown(r_ext, p, &cfg, mode).composite.to_bits(), r_ext.to_bits());
        Ok(())
    })
}

pub fn statistics_ignore_sample_order() -> Outcome {
    let strategy = (
        prop::collection::vec(-1e3f64..1e3, 2..12),
        prop::collection::vec(-1e3f64..1e3, 2..12),
        0usize..12,
    );
    run(strategy, |(mut a, b, rot)| {
        let (sa, sb) = (summarize(&a, 0.95).unwrap(), summarize(&b, 0.95).unwrap());
        let k = rot % a.len();
        a.rotate_left(k);
        a.reverse();
        let sa2 = summarize(&a, 0.95).unwrap();
        prop_assert!((sa.mean - sa2.mean).abs() <= 1e-9 * (1.0 + sa.mean.abs()));
        prop_assert!((sa.sd - sa2.sd).abs() <= 1e-9 * (1.0 + sa.sd));
        prop_assert!(sa.ci_low <= sa.mean && sa.mean <= sa.ci_high);
        if let (Ok(c), Ok(c2)) = (welch_compare(&sa, &sb), welch_compare(&sa2, &sb)) {
            prop_assert!((c.t - c2.t).abs() <= 1e-6 * (1.0 + c.t.abs()));
            prop_assert!(c.df > 0.0);
            prop_assert_eq!(c.t > 0.0, sa.mean > sb.mean);
        }
        Ok(())
    })
}

pub fn all() -> Vec<(&'static str, Outcome)> {
    vec![
        ("read weights sum to one", read_weights_are_normalised()),
        ("masked softmax sums to one", masked_softmax_rows_are_normalised()),
        ("gate counts monotone in threshold", gate_counts_fall_as_threshold_rises()),
        ("open gates equal ungated reward", all_gates_open_matches_ungated()),
        ("threshold >= 0.5 opens at most one gate", high_threshold_opens_at_most_one_gate()),
        ("alpha 0 keeps extrinsic bits", zero_alpha_keeps_extrinsic_bits()),
        ("statistics ignore sample order", statistics_ignore_sample_order()),
    ]
}
