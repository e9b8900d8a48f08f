use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vicarious::agent::{train_loop, RunRecord};
use vicarious::demos::{load_demos, save_demos, script_both, script_demos, Valence};
use vicarious::harness::{
    load_runs, output_root, plot_curves, run_experiment, summarize, welch_compare, ExperimentConfig, RunOptions, Series,
};
use vicarious::reward::IntrinsicMode;
use vicarious::smann::{SmannModel, TrainConfig};
use vicarious::{Error, Result};

#[derive(Parser)]
#[command(name = "vclab", version, about = "Vicarious conditioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config field, e.g. `agent.ppo.lr=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Negative,
    Positive,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatMetric {
    Length,
    Ext,
    Intr,
}

#[derive(Subcommand)]
enum Command {
    /// Script demonstrations for the configured environment.
    GenDemos {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "both")]
        valence: Which,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train and freeze the classifier, then save a checkpoint.
    TrainSmann {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Demo archive; scripted from the config when absent.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train one agent under one condition and write its episode CSV.
    TrainAgent {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        condition: String,
        /// Frozen classifier checkpoint, required for intrinsic conditions.
        #[arg(long)]
        smann: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run every condition across seeds and summarise.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output root; defaults to $VCLAB_OUT or ./vclab-out.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Validate the config and print the plan without running.
        #[arg(long)]
        dry_run: bool,
        /// Overwrite an output directory holding a different experiment.
        #[arg(long)]
        force: bool,
        /// Base seed override.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare final-window means of two sets of runs.
    Stats {
        /// Directory searched recursively for episodes.csv files.
        #[arg(long)]
        a: PathBuf,
        /// Comparison group, usually the baseline.
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "length")]
        metric: StatMetric,
        #[arg(long, default_value_t = 200)]
        window: usize,
    },
    /// Plot learning curves; each input directory is one series.
    Plot {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        smoothing: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenDemos { cfg, seed, valence, out } => {
            let cfg = cfg.load()?;
            let (n, l) = (cfg.demos.per_class, cfg.smann.window_len);
            let set = match valence {
                Which::Negative => script_demos(&cfg.env, Valence::Negative, n, l, seed)?,
                Which::Positive => script_demos(&cfg.env, Valence::Positive, n, l, seed)?,
                Which::Both => script_both(&cfg.env, n, l, seed)?,
            };
            save_demos(&set, &out)?;
            let [neg, pos] = set.class_counts();
            println!("wrote {} demos ({neg} negative, {pos} positive) to {}", set.len(), out.display());
        }
        Command::TrainSmann { cfg, demos, seed, out } => {
            let cfg = cfg.load()?;
            let set = match demos {
                Some(p) => load_demos(&p, Some(cfg.env.env_id()))?,
                None => script_both(&cfg.env, cfg.demos.per_class, cfg.smann.window_len, seed)?,
            };
            let mut model = SmannModel::new(cfg.smann.clone(), cfg.env.view(), seed)?;
            let report = model.train(&set, &TrainConfig { seed, ..cfg.smann_train.clone() })?;
            model.freeze();
            model.save(&out)?;
            println!("accuracy {:.4} after {} epochs; saved {}", report.final_accuracy, report.epoch_loss.len(), out.display());
        }
        Command::TrainAgent { cfg, condition, smann, seed, out } => {
            let cfg = cfg.load()?;
            let cond = cfg
                .expand()?
                .into_iter()
                .find(|c| c.name == condition)
                .ok_or_else(|| Error::Config(format!("no condition named {condition:?}")))?;
            let model = match smann {
                Some(p) => {
                    let mut m = SmannModel::load(&p)?;
                    m.freeze();
                    Some(m)
                }
                None if cond.reward.mode != IntrinsicMode::None => {
                    return Err(Error::Config(format!("condition {condition:?} needs --smann")))
                }
                None => None,
            };
            let run = train_loop(&cfg.env, model.as_ref(), &cond.reward, &cfg.agent, cfg.episodes, seed)?;
            run.write_csv(&out)?;
            let w = cfg.final_window;
            println!(
                "final-{w}: length {:.2}, extrinsic {:.3}, intrinsic {:.3}",
                run.mean_length(w),
                run.mean_ext_return(w),
                run.mean_intr_return(w)
            );
        }
        Command::Experiment { cfg, out, dry_run, force, seed, threads } => {
            let mut config = cfg.load()?;
            if let Some(s) = seed {
                config.base_seed = s;
            }
            let conditions = config.expand()?;
            if dry_run {
                println!("config ok: {} ({})", config.name, config.hash());
                println!("{} conditions x {} seeds, {} episodes each", conditions.len(), config.n_runs, config.episodes);
                for c in &conditions {
                    println!("  {}", c.name);
                }
                return Ok(ExitCode::SUCCESS);
            }
            let root = output_root(out.as_deref());
            let report = run_experiment(&config, &root, &RunOptions { force, threads })?;
            println!("{}: {} runs executed, {} reused", report.dir.display(), report.executed, report.skipped);
            for c in &report.summary.conditions {
                match (c.length, c.ext_return) {
                    (Some(l), Some(e)) => println!(
                        "{:>16}  length {:8.2} [{:.2}, {:.2}]  extrinsic {:8.3}",
                        c.condition, l.mean, l.ci_low, l.ci_high, e.mean
                    ),
                    _ => println!("{:>16}  {} completed runs", c.condition, c.runs.len()),
                }
            }
            for cmp in &report.summary.comparisons {
                let x = cmp.comparison;
                println!(
                    "{} vs {} ({}): t({:.1}) = {:.2}, p = {:.3e}, d = {:.2}",
                    cmp.condition, cmp.baseline, cmp.metric, x.df, x.t, x.p_value, x.cohens_d
                );
            }
            let failed = report.manifest.failed().count();
            if failed > 0 {
                eprintln!("{failed} runs failed; see manifest.json");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Stats { a, b, metric, window } => {
            let pick = |r: &RunRecord| match metric {
                StatMetric::Length => r.mean_length(window),
                StatMetric::Ext => r.mean_ext_return(window),
                StatMetric::Intr => r.mean_intr_return(window),
            };
            let sa = summarize(&load_runs(&a)?.iter().map(pick).collect::<Vec<_>>(), 0.95)?;
            let sb = summarize(&load_runs(&b)?.iter().map(pick).collect::<Vec<_>>(), 0.95)?;
            for (name, s) in [(&a, sa), (&b, sb)] {
                println!(
                    "{}: mean {:.3} sd {:.3} n {} ci [{:.3}, {:.3}]",
                    name.display(),
                    s.mean,
                    s.sd,
                    s.n,
                    s.ci_low,
                    s.ci_high
                );
            }
            let c = welch_compare(&sa, &sb)?;
            println!("t = {:.4}, df = {:.2}, p = {:.4e}, d = {:.4}", c.t, c.df, c.p_value, c.cohens_d);
        }
        Command::Plot { inputs, out, smoothing } => {
            let series = inputs
                .iter()
                .map(|p| Ok(Series { label: label(p), runs: load_runs(p)? }))
                .collect::<Result<Vec<_>>>()?;
            for p in plot_curves(&series, smoothing, &[], &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
