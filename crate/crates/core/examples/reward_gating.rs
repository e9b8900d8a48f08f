//! How the inhibition threshold turns classifier confidence into reward.

use vicarious::demos::Valence;
use vicarious::reward::{breakdown, dominance_check, IntrinsicMode, VcConfig};

fn main() {
    let vc = VcConfig { theta_thr: 0.6, valences: vec![Valence::Negative], ..VcConfig::default() };
    println!("{:>8} {:>10} {:>10} {:>6}", "p(neg)", "stimuli", "gated", "gate");
    for i in 0..=10 {
        let p_neg = i as f64 / 10.0;
        let p = [p_neg, 1.0 - p_neg];
        let ungated = breakdown(0.0, p, &vc, IntrinsicMode::Stimuli);
        let gated = breakdown(0.0, p, &vc, IntrinsicMode::Gated);
        println!("{p_neg:>8.1} {:>10.2} {:>10.2} {:>6}", ungated.r_vic, gated.r_vic, gated.gates[0]);
    }

    // With alpha at zero the agent sees the extrinsic reward unchanged.
    let off = VcConfig { alpha: 0.0, ..vc.clone() };
    let r = breakdown(0.25, [0.9, 0.1], &off, IntrinsicMode::Gated);
    println!("alpha 0: extrinsic {} composite {}", r.r_ext, r.composite);

    println!("against a goal reward of 1.0: {:?}", dominance_check(&VcConfig { alpha: 0.5, ..vc.clone() }, 1.0));
    println!("against a step cost of 0.35: {:?}", dominance_check(&vc, 0.35));
}
