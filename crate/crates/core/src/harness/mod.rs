//! Experiment orchestration, summary statistics and plots.
//!
//! An experiment trains one classifier per seed and then one agent per
//! condition and seed. Output layout under the experiment directory:
//!
//! ```text
//! config.json
//! manifest.json
//! summary.json
//! models/<seed>/{demos.json, smann.json}
//! runs/<condition>/<seed>/episodes.csv
//! plots/*.svg
//! ```

mod plot;
mod stats;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use plot::{band, plot_curves, render_svg, Metric, Reference, Series};
pub use stats::{summarize, welch_compare, Comparison, SummaryStats};

use crate::agent::{train_loop, AgentConfig, RewardSpec, RunRecord};
use crate::demos::{load_demos, save_demos, script_both, DemoSet};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::reward::{IntrinsicMode, VcConfig};
use crate::smann::{SmannConfig, SmannModel, TrainConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "VCLAB_OUT";

/// Where demonstrations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoSpec {
    pub per_class: usize,
    /// Archive to load instead of scripting; shared by every seed.
    pub path: Option<PathBuf>,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self { per_class: 26, path: None }
    }
}

/// One reward condition. A non-empty `thresholds` list expands it into one
/// condition per threshold, named `<name>_t<theta>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub name: String,
    pub mode: IntrinsicMode,
    #[serde(default = "yes")]
    pub extrinsic: bool,
    #[serde(default)]
    pub vc: VcConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
}

fn yes() -> bool {
    true
}

/// A named reward condition after threshold expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub reward: RewardSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvConfig,
    pub demos: DemoSpec,
    pub smann: SmannConfig,
    pub smann_train: TrainConfig,
    pub agent: AgentConfig,
    pub conditions: Vec<ConditionSpec>,
    /// Condition the others are compared against; defaults to the first
    /// condition without an intrinsic term.
    pub baseline: Option<String>,
    pub n_runs: usize,
    pub episodes: usize,
    pub final_window: usize,
    pub base_seed: u64,
    pub plot_smoothing: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            env: EnvConfig::Sidewalk(Default::default()),
            demos: DemoSpec::default(),
            smann: SmannConfig::default(),
            smann_train: TrainConfig::default(),
            agent: AgentConfig::default(),
            conditions: vec![ConditionSpec {
                name: "base".into(),
                mode: IntrinsicMode::None,
                extrinsic: true,
                vc: VcConfig::default(),
                thresholds: Vec::new(),
            }],
            baseline: None,
            n_runs: 5,
            episodes: 1000,
            final_window: 200,
            base_seed: 0,
            plot_smoothing: 20,
        }
    }
}

fn safe_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && s != "." && s != ".."
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::from_json(&text, overrides).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                path: path.to_path_buf(),
                msg: j.to_string(),
            },
            other => other,
        })
    }

    /// Parses a config and applies `key.path=value` overrides before
    /// deserialising. Values are read as JSON, falling back to a string.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !safe_name(&self.name) {
            return bad(format!("experiment name {:?} is not a plain file name", self.name));
        }
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1".into());
        }
        if self.episodes == 0 || self.final_window == 0 || self.final_window > self.episodes {
            return bad(format!("need 1 <= final_window ({}) <= episodes ({})", self.final_window, self.episodes));
        }
        if self.smann.window_len != self.agent.window_len {
            return Err(Error::WindowLength {
                expected: self.smann.window_len,
                got: self.agent.window_len,
            });
        }
        if self.demos.path.is_none() && self.demos.per_class == 0 {
            return bad("demos.per_class must be positive".into());
        }
        self.env.build()?;
        self.agent.ppo.validate()?;
        let conditions = self.expand()?;
        if conditions.is_empty() {
            return bad("no conditions".into());
        }
        let mut seen = BTreeSet::new();
        for c in &conditions {
            if !safe_name(&c.name) {
                return bad(format!("condition name {:?} is not a plain file name", c.name));
            }
            if !seen.insert(c.name.as_str()) {
                return bad(format!("duplicate condition {:?}", c.name));
            }
            c.reward.vc.validate()?;
        }
        if let Some(b) = &self.baseline {
            if !seen.contains(b.as_str()) {
                return bad(format!("baseline {b:?} is not a condition"));
            }
        }
        Ok(())
    }

    /// Conditions with threshold grids unrolled, in declaration order.
    pub fn expand(&self) -> Result<Vec<Condition>> {
        let mut out = Vec::new();
        for spec in &self.conditions {
            let reward = |vc: VcConfig| RewardSpec {
                mode: spec.mode,
                extrinsic: spec.extrinsic,
                vc,
            };
            if spec.thresholds.is_empty() {
                out.push(Condition {
                    name: spec.name.clone(),
                    reward: reward(spec.vc.clone()),
                });
                continue;
            }
            for &theta in &spec.thresholds {
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::Config(format!("threshold {theta} outside [0, 1]")));
                }
                out.push(Condition {
                    name: format!("{}_t{theta:.2}", spec.name),
                    reward: reward(VcConfig {
                        theta_thr: theta,
                        ..spec.vc.clone()
                    }),
                });
            }
        }
        Ok(out)
    }

    pub fn baseline_name(&self) -> Option<String> {
        self.baseline.clone().or_else(|| {
            self.expand()
                .ok()?
                .into_iter()
                .find(|c| c.reward.mode == IntrinsicMode::None)
                .map(|c| c.name)
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_runs as u64).map(|i| self.base_seed + i).collect()
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serialises"))
    }
}

/// Sets `path=value` inside a JSON document. Path segments are object keys
/// or array indices separated by dots.
pub fn apply_override(doc: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            serde_json::Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("override {path:?}: {key:?} is not an index")))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("override {path:?}: index {idx} out of range")))?
            }
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| serde_json::json!({}))
            }
            _ => return Err(Error::Config(format!("override {path:?}: {key:?} is not inside an object"))),
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    Err(Error::Config("empty override path".into()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output root: explicit path, else `$VCLAB_OUT`, else `vclab-out`.
pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("vclab-out")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub condition: String,
    pub seed: u64,
    pub status: RunStatus,
    pub episodes: usize,
    pub csv_sha256: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Everything needed to check that two executions agree. Holds no timings
/// or absolute paths so identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub models: Vec<ModelEntry>,
    pub runs: Vec<RunEntry>,
}

impl Manifest {
    pub fn failed(&self) -> impl Iterator<Item = &RunEntry> {
        self.runs.iter().filter(|r| r.status == RunStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeans {
    pub seed: u64,
    pub length: f64,
    pub ext_return: f64,
    pub intr_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub runs: Vec<RunMeans>,
    pub length: Option<SummaryStats>,
    pub ext_return: Option<SummaryStats>,
    pub intr_return: Option<SummaryStats>,
}

impl ConditionSummary {
    fn new(condition: &str, runs: Vec<RunMeans>) -> Self {
        let stat = |f: fn(&RunMeans) -> f64| summarize(&runs.iter().map(f).collect::<Vec<_>>(), 0.95).ok();
        Self {
            condition: condition.to_string(),
            length: stat(|r| r.length),
            ext_return: stat(|r| r.ext_return),
            intr_return: stat(|r| r.intr_return),
            runs,
        }
    }

    pub fn mean_length(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.length))
    }

    pub fn mean_ext_return(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.ext_return))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub condition: String,
    pub baseline: String,
    pub metric: String,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_window: usize,
    pub baseline: Option<String>,
    pub conditions: Vec<ConditionSummary>,
    pub comparisons: Vec<ComparisonEntry>,
}

impl Summary {
    pub fn condition(&self, name: &str) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub summary: Summary,
    pub executed: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Wipe an output directory that holds a different experiment.
    pub force: bool,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

fn run_dir(dir: &Path, condition: &str, seed: u64) -> PathBuf {
    dir.join("runs").join(condition).join(seed.to_string())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn completed_run(path: &Path, episodes: usize) -> Option<Vec<u8>> {
    let bytes = fs::read(path).ok()?;
    let run = RunRecord::read_csv(path).ok()?;
    (run.len() == episodes).then_some(bytes)
}

/// Claims `dir` for `cfg`, wiping it under `force` when it holds another
/// experiment.
fn prepare_dir(dir: &Path, cfg: &ExperimentConfig, force: bool) -> Result<()> {
    let config_path = dir.join("config.json");
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        let same = fs::read(&config_path)
            .ok()
            .and_then(|b| serde_json::from_slice::<ExperimentConfig>(&b).ok())
            .is_some_and(|old| old.hash() == cfg.hash());
        if !same {
            if !force {
                return Err(Error::OutputConflict(dir.to_path_buf()));
            }
            log::warn!("removing {} for a different experiment", dir.display());
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    fs::write(&config_path, serde_json::to_vec_pretty(cfg)?)?;
    Ok(())
}

fn demos_for(cfg: &ExperimentConfig, seed: u64) -> Result<DemoSet> {
    match &cfg.demos.path {
        Some(p) => load_demos(p, Some(cfg.env.env_id())),
        None => script_both(&cfg.env, cfg.demos.per_class, cfg.smann.window_len, seed),
    }
}

/// Loads the frozen classifier for `seed` or trains and stores it.
fn prepare_model(cfg: &ExperimentConfig, dir: &Path, seed: u64) -> Result<(SmannModel, f64)> {
    let mdir = dir.join("models").join(seed.to_string());
    fs::create_dir_all(&mdir)?;
    let demo_path = mdir.join("demos.json");
    let demos = match load_demos(&demo_path, Some(cfg.env.env_id())) {
        Ok(d) => d,
        Err(_) => {
            let d = demos_for(cfg, seed)?;
            save_demos(&d, &demo_path)?;
            d
        }
    };
    let model_path = mdir.join("smann.json");
    let mut model = match SmannModel::load(&model_path) {
        Ok(m) => m,
        Err(_) => {
            let mut m = SmannModel::new(cfg.smann.clone(), cfg.env.view(), seed)?;
            let train = TrainConfig { seed, ..cfg.smann_train.clone() };
            let report = m.train(&demos, &train)?;
            log::info!("seed {seed}: classifier accuracy {:.3}", report.final_accuracy);
            m.freeze();
            let tmp = model_path.with_extension("tmp");
            m.save(&tmp)?;
            fs::rename(&tmp, &model_path)?;
            m
        }
    };
    model.freeze();
    let acc = model.accuracy(&demos)?;
    Ok((model, acc))
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every condition for every seed under `root/<name>`, skipping runs
/// whose CSV is already complete. Failed runs are recorded in the manifest
/// rather than aborting the others.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path, opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dir = root.join(&cfg.name);
    prepare_dir(&dir, cfg, opts.force)?;
    let conditions = cfg.expand()?;
    let seeds = cfg.seeds();
    let needs_model = conditions.iter().any(|c| c.reward.mode != IntrinsicMode::None);
    let pool = pool(opts.threads)?;

    let models: Vec<Result<(SmannModel, f64)>> = if needs_model {
        pool.install(|| seeds.par_iter().map(|&s| prepare_model(cfg, &dir, s)).collect())
    } else {
        Vec::new()
    };

    let jobs: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..seeds.len()).map(move |s| (c, s)))
        .collect();
    let outcomes: Vec<(RunEntry, bool)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(ci, si)| {
                let (cond, seed) = (&conditions[ci], seeds[si]);
                let rdir = run_dir(&dir, &cond.name, seed);
                let csv = rdir.join("episodes.csv");
                if let Some(bytes) = completed_run(&csv, cfg.episodes) {
                    let entry = RunEntry {
                        condition: cond.name.clone(),
                        seed,
                        status: RunStatus::Complete,
                        episodes: cfg.episodes,
                        csv_sha256: Some(sha256_hex(&bytes)),
                        error: None,
                    };
                    return (entry, false);
                }
                let result = (|| -> Result<Vec<u8>> {
                    let model = match (cond.reward.mode, models.get(si)) {
                        (IntrinsicMode::None, _) | (_, None) => None,
                        (_, Some(Ok((m, _)))) => Some(m),
                        (_, Some(Err(e))) => return Err(Error::Config(format!("classifier unavailable: {e}"))),
                    };
                    let run = train_loop(&cfg.env, model, &cond.reward, &cfg.agent, cfg.episodes, seed)?;
                    fs::create_dir_all(&rdir)?;
                    let tmp = csv.with_extension("tmp");
                    run.write_csv(&tmp)?;
                    fs::rename(&tmp, &csv)?;
                    Ok(fs::read(&csv)?)
                })();
                let entry = match result {
                    Ok(bytes) => {
                        log::info!("{} seed {seed}: done", cond.name);
                        RunEntry {
                            condition: cond.name.clone(),
                            seed,
                            status: RunStatus::Complete,
                            episodes: cfg.episodes,
                            csv_sha256: Some(sha256_hex(&bytes)),
                            error: None,
                        }
                    }
                    Err(e) => {
                        log::error!("{} seed {seed}: {e}", cond.name);
                        RunEntry {
                            condition: cond.name.clone(),
                            seed,
                            status: RunStatus::Failed,
                            episodes: 0,
                            csv_sha256: None,
                            error: Some(e.to_string()),
                        }
                    }
                };
                (entry, true)
            })
            .collect()
    });

    let executed = outcomes.iter().filter(|(_, ran)| *ran).count();
    let manifest = Manifest {
        config_hash: cfg.hash(),
        models: seeds
            .iter()
            .zip(&models)
            .map(|(&seed, m)| match m {
                Ok((_, acc)) => ModelEntry { seed, accuracy: Some(*acc), error: None },
                Err(e) => ModelEntry { seed, accuracy: None, error: Some(e.to_string()) },
            })
            .collect(),
        runs: outcomes.into_iter().map(|(e, _)| e).collect(),
    };
    write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;

    let summary = summarize_runs(cfg, &dir, &conditions, &manifest)?;
    write_atomic(&dir.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;
    write_plots(cfg, &dir, &conditions, &manifest, &summary)?;

    Ok(ExperimentReport {
        dir,
        skipped: manifest.runs.len() - executed,
        executed,
        manifest,
        summary,
    })
}

fn completed_records(dir: &Path, condition: &str, manifest: &Manifest) -> Result<Vec<(u64, RunRecord)>> {
    manifest
        .runs
        .iter()
        .filter(|r| r.condition == condition && r.status == RunStatus::Complete)
        .map(|r| Ok((r.seed, RunRecord::read_csv(&run_dir(dir, condition, r.seed).join("episodes.csv"))?)))
        .collect()
}

fn summarize_runs(cfg: &ExperimentConfig, dir: &Path, conditions: &[Condition], manifest: &Manifest) -> Result<Summary> {
    let w = cfg.final_window;
    let mut out = Vec::new();
    for c in conditions {
        let runs = completed_records(dir, &c.name, manifest)?
            .into_iter()
            .map(|(seed, r)| RunMeans {
                seed,
                length: r.mean_length(w),
                ext_return: r.mean_ext_return(w),
                intr_return: r.mean_intr_return(w),
            })
            .collect();
        out.push(ConditionSummary::new(&c.name, runs));
    }
    let baseline = cfg.baseline_name();
    let mut comparisons = Vec::new();
    if let Some(base) = baseline.as_deref().and_then(|b| out.iter().find(|c| c.condition == b)) {
        for c in out.iter().filter(|c| c.condition != base.condition) {
            let pairs = [("length", c.length, base.length), ("ext_return", c.ext_return, base.ext_return)];
            for (metric, a, b) in pairs {
                if let (Some(a), Some(b)) = (a, b) {
                    comparisons.push(ComparisonEntry {
                        condition: c.condition.clone(),
                        baseline: base.condition.clone(),
                        metric: metric.into(),
                        comparison: welch_compare(&a, &b)?,
                    });
                }
            }
        }
    }
    Ok(Summary {
        final_window: w,
        baseline,
        conditions: out,
        comparisons,
    })
}

fn write_plots(cfg: &ExperimentConfig, dir: &Path, conditions: &[Condition], manifest: &Manifest, summary: &Summary) -> Result<()> {
    let mut series = Vec::new();
    for c in conditions {
        let runs: Vec<RunRecord> = completed_records(dir, &c.name, manifest)?.into_iter().map(|(_, r)| r).collect();
        if !runs.is_empty() {
            series.push(Series { label: c.name.clone(), runs });
        }
    }
    if series.is_empty() {
        return Ok(());
    }
    let mut refs = Vec::new();
    if let Some(base) = summary.baseline.as_deref().and_then(|b| summary.condition(b)) {
        if !base.runs.is_empty() {
            let label = format!("{} final mean", base.condition);
            refs.push(Reference { label: label.clone(), metric: Metric::Length, value: base.mean_length() });
            refs.push(Reference { label, metric: Metric::Extrinsic, value: base.mean_ext_return() });
        }
    }
    plot_curves(&series, cfg.plot_smoothing, &refs, &dir.join("plots"))?;
    Ok(())
}

/// Every `episodes.csv` below `dir`, in sorted path order.
pub fn load_runs(dir: &Path) -> Result<Vec<RunRecord>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.file_name().is_some_and(|n| n == "episodes.csv") {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    if dir.is_file() {
        paths.push(dir.to_path_buf());
    } else {
        walk(dir, &mut paths)?;
    }
    if paths.is_empty() {
        return Err(Error::Empty(format!("no episodes.csv under {}", dir.display())));
    }
    paths.iter().map(|p| RunRecord::read_csv(p)).collect()
}
