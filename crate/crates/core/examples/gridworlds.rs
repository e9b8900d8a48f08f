//! Drives both gridworlds with a fixed action script and prints what the
//! agent sees.

use vicarious::envs::{Action, EnvConfig, Environment, RingConfig, SidewalkConfig};

fn main() -> vicarious::Result<()> {
    let worlds = [
        EnvConfig::Sidewalk(SidewalkConfig::default()),
        EnvConfig::Ring(RingConfig { step_cost: 0.35, ..RingConfig::default() }),
    ];
    let script = [Action::Forward, Action::Forward, Action::TurnLeft, Action::Forward, Action::Forward, Action::Forward];
    for cfg in worlds {
        let mut env = cfg.build()?;
        let obs = env.reset(1);
        println!("== {} ({}x{} view)", env.env_id(), obs.k(), obs.k());
        println!("{}", env.render_ascii());
        for &action in script.iter().cycle().take(40) {
            let step = env.step(action)?;
            if step.done {
                println!("{action:?} ended the episode after {} steps: {}", env.steps_taken(), step.cause);
                println!("{}", step.observation.render());
                break;
            }
            if step.reward != 0.0 {
                println!("{action:?} -> reward {:+.2}", step.reward);
            }
        }
    }
    Ok(())
}
