//! Trains the memory-augmented classifier on 26 demonstrations per class,
//! freezes it, and scores a few fresh windows.

use std::time::Instant;

use vicarious::demos::{script_both, Valence};
use vicarious::envs::{EnvConfig, RingConfig, SidewalkConfig};
use vicarious::smann::{SmannConfig, SmannModel, TrainConfig};

fn main() -> vicarious::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(150);
    let worlds = [EnvConfig::Sidewalk(SidewalkConfig::default()), EnvConfig::Ring(RingConfig::default())];
    for env in worlds {
        let demos = script_both(&env, 26, 3, 7)?;
        let mut model = SmannModel::new(SmannConfig::default(), env.view(), 7)?;
        let start = Instant::now();
        let report = model.train(&demos, &TrainConfig { epochs, ..TrainConfig::default() })?;
        model.freeze();
        println!(
            "{}: accuracy {:.3} after {epochs} epochs ({} memory rows, {:.1}s)",
            env.env_id(),
            report.final_accuracy,
            model.memory().occupied_count(),
            start.elapsed().as_secs_f64()
        );

        // Demonstrations from a different seed were never stored.
        let fresh = script_both(&env, 2, 3, 1234)?;
        for traj in &fresh.trajectories {
            let p = model.infer(&traj.observations)?;
            let label = traj.valence()?;
            println!(
                "  {label}: p(neg) {:.3} p(pos) {:.3}",
                p[Valence::Negative.index()],
                p[Valence::Positive.index()]
            );
        }
    }
    Ok(())
}
