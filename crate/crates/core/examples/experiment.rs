//! A miniature end-to-end experiment: classifier per seed, three reward
//! conditions, summary statistics and plots, written under a temp dir.

use vicarious::harness::{run_experiment, ExperimentConfig, RunOptions};

const CONFIG: &str = r#"{
  "name": "mini-sidewalk",
  "env": { "kind": "sidewalk", "max_steps": 60 },
  "demos": { "per_class": 8 },
  "smann": { "embed_dim": 16, "memory_slots": 32, "read_heads": 4, "write_heads": 4, "depth": 3, "hidden": 32 },
  "smann_train": { "epochs": 20, "lr": 1e-4 },
  "agent": { "ppo": { "update_steps": 128, "epochs": 4, "lr": 1e-4 } },
  "conditions": [
    { "name": "base", "mode": "none" },
    { "name": "stimuli", "mode": "stimuli", "vc": { "valences": ["neg"] } },
    { "name": "vc", "mode": "gated", "vc": { "theta_thr": 0.6, "valences": ["neg"] } }
  ],
  "n_runs": 2,
  "episodes": 40,
  "final_window": 10
}"#;

fn main() -> vicarious::Result<()> {
    let cfg = ExperimentConfig::from_json(CONFIG, &[])?;
    let root = std::env::temp_dir().join("vicarious-experiment-example");
    let report = run_experiment(&cfg, &root, &RunOptions { force: true, threads: Some(1) })?;
    println!("{} ({} runs, {} reused)", report.dir.display(), report.executed, report.skipped);
    for m in &report.manifest.models {
        println!("seed {}: classifier accuracy {:.3}", m.seed, m.accuracy.unwrap_or(f64::NAN));
    }
    for c in &report.summary.conditions {
        println!("{:>8}: final length {:.1}", c.condition, c.mean_length());
    }
    for cmp in &report.summary.comparisons {
        println!("{} vs {} on {}: d = {:.2}", cmp.condition, cmp.baseline, cmp.metric, cmp.comparison.cohens_d);
    }
    Ok(())
}
