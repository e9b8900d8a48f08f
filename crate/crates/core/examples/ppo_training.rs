//! Trains a PPO agent on the ring track with extrinsic reward only and
//! prints a coarse learning curve.

use vicarious::agent::{train_loop, AgentConfig, PpoConfig, RewardSpec};
use vicarious::envs::{EnvConfig, RingConfig};

fn main() -> vicarious::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let env = EnvConfig::Ring(RingConfig { step_cost: 0.1, ..RingConfig::default() });
    let cfg = AgentConfig {
        ppo: PpoConfig { lr: 1e-4, ..PpoConfig::default() },
        ..AgentConfig::default()
    };
    let run = train_loop(&env, None, &RewardSpec::extrinsic_only(), &cfg, episodes, 0)?;
    for chunk in run.episodes.chunks(episodes.div_ceil(10).max(1)) {
        let n = chunk.len() as f64;
        let len = chunk.iter().map(|e| e.length as f64).sum::<f64>() / n;
        let ret = chunk.iter().map(|e| e.ext_return).sum::<f64>() / n;
        println!("episodes {:>4}..{:<4} length {len:7.2} return {ret:7.3}", chunk[0].episode_index, chunk[chunk.len() - 1].episode_index);
    }
    let out = std::env::temp_dir().join("vicarious-ppo-example.csv");
    run.write_csv(&out)?;
    println!("episode log written to {}", out.display());
    Ok(())
}
