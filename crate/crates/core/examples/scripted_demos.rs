//! Scripts a few demonstrations, shows how a communicated value is spread
//! back over the observed steps, and round-trips the archive.

use vicarious::demos::{attribute_values, load_demos, save_demos, script_both};
use vicarious::envs::{EnvConfig, SidewalkConfig};

fn main() -> vicarious::Result<()> {
    let env = EnvConfig::Sidewalk(SidewalkConfig::default());
    let demos = script_both(&env, 3, 3, 42)?;
    let [neg, pos] = demos.class_counts();
    println!("{neg} negative and {pos} positive demonstrations");

    for traj in demos.trajectories.iter().step_by(3) {
        println!("value {:+.1} ({})", traj.value, traj.valence()?);
        println!("{}", traj.observations.last().expect("non-empty window").render());
        for step in attribute_values(traj, 1.0, 0.9) {
            println!("  step {} -> {:+.3}", step.step, step.value);
        }
    }

    let dir = std::env::temp_dir().join("vicarious-demos-example");
    let path = dir.join("sidewalk.json");
    save_demos(&demos, &path)?;
    let back = load_demos(&path, Some(env.env_id()))?;
    assert_eq!(back, demos);
    println!("archive round-trips through {}", path.display());
    Ok(())
}
