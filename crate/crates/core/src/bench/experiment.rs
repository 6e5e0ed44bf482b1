//! Config-driven experiment runner and report aggregation.
//!
//! A config lists suites; every suite expands into independent runs over
//! scenes and seeds. Runs execute in parallel on the current rayon pool,
//! each with its own seeded generator, and are written in a fixed order so
//! reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::affordance::{eval_estimate, DEFAULT_PROBES};
use crate::bench::baselines::{run_baseline, Policy};
use crate::bench::manipulation::{run_manipulation, ESTIMATION_INTERACTIONS, TOTAL_INTERACTIONS};
use crate::bench::scenes::{generate_scene, single_joint_suite, SceneSpec, Setting, PUZZLE_LEVELS};
use crate::error::{Error, Result};
use crate::estimator::{write_jsonl, Estimator, EstimatorConfig, Likelihood};
use crate::hypotheses::PriorWeights;
use crate::kinematics::JointClass;
use crate::puzzle::{solve_puzzle, PuzzleConfig};

/// Offsets that keep the generators of different run kinds apart.
const ESTIMATION_STREAM: u64 = 1000;
const MANIPULATION_STREAM: u64 = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub start: u64,
    pub count: u64,
}

impl Default for SeedRange {
    fn default() -> Self {
        Self { start: 0, count: 10 }
    }
}

impl SeedRange {
    pub fn range(&self) -> std::ops::Range<u64> {
        self.start..self.start + self.count
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationSuite {
    pub name: String,
    pub settings: Vec<Setting>,
    /// One variant per value; empty uses the estimator's own setting.
    pub noise_sigmas: Vec<f64>,
    pub likelihood: Option<Likelihood>,
    pub seeds: Option<SeedRange>,
}

impl Default for EstimationSuite {
    fn default() -> Self {
        Self {
            name: "estimation".into(),
            settings: vec![Setting::Closed, Setting::HalfOpened],
            noise_sigmas: Vec::new(),
            likelihood: None,
            seeds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffordanceSuite {
    pub name: String,
    pub settings: Vec<Setting>,
    pub probes: usize,
    pub seeds: Option<SeedRange>,
}

impl Default for AffordanceSuite {
    fn default() -> Self {
        Self { name: "affordance".into(), settings: vec![Setting::Closed], probes: DEFAULT_PROBES, seeds: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManipulationSuite {
    pub name: String,
    pub settings: Vec<Setting>,
    pub estimation: usize,
    pub total: usize,
    pub seeds: Option<SeedRange>,
}

impl Default for ManipulationSuite {
    fn default() -> Self {
        Self {
            name: "manipulation".into(),
            settings: vec![Setting::Closed],
            estimation: ESTIMATION_INTERACTIONS,
            total: TOTAL_INTERACTIONS,
            seeds: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hsaur,
    Random,
    Heuristic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Hsaur => "hsaur",
            Self::Random => "random",
            Self::Heuristic => "heuristic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuzzleSuite {
    pub name: String,
    pub levels: Vec<[usize; 2]>,
    pub methods: Vec<Method>,
    pub dummies: bool,
    pub budget: usize,
    pub seeds: Option<SeedRange>,
}

impl Default for PuzzleSuite {
    fn default() -> Self {
        Self {
            name: "puzzle".into(),
            levels: PUZZLE_LEVELS.iter().map(|&(c, l)| [c, l]).collect(),
            methods: vec![Method::Hsaur, Method::Random, Method::Heuristic],
            dummies: false,
            budget: 100,
            seeds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Suite {
    Estimation(EstimationSuite),
    Affordance(AffordanceSuite),
    Manipulation(ManipulationSuite),
    Puzzle(PuzzleSuite),
}

impl Suite {
    fn name(&self) -> &str {
        match self {
            Suite::Estimation(s) => &s.name,
            Suite::Affordance(s) => &s.name,
            Suite::Manipulation(s) => &s.name,
            Suite::Puzzle(s) => &s.name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: SeedRange,
    pub estimator: EstimatorConfig,
    /// Class or proposal prior file used by estimation runs.
    pub prior: Option<PathBuf>,
    /// Write one trajectory file per run under `runs/`.
    pub trajectory_logs: bool,
    #[serde(rename = "suite")]
    pub suites: Vec<Suite>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: SeedRange::default(),
            estimator: EstimatorConfig::default(),
            prior: None,
            trajectory_logs: false,
            suites: Vec::new(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a TOML document, or JSON when the text starts with `{`, with the
/// failing line in the error.
pub fn parse_document<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Config {
            field: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    } else {
        toml::from_str(text).map_err(|e| Error::Config {
            field: e.span().map_or("document".into(), |s| format!("line {}", line_of(text, s.start))),
            message: e.message().to_string(),
        })
    }
}

/// Reads a config file, naming it in the error.
pub fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config { field: path.display().to_string(), message: e.to_string() })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = parse_document(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_config(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        let bad = |field: String, message: &str| Err(Error::Config { field, message: message.into() });
        let mut names = std::collections::BTreeSet::new();
        for (i, suite) in self.suites.iter().enumerate() {
            if !names.insert(suite.name()) {
                return bad(format!("suite[{i}].name"), "suite names must be unique");
            }
            match suite {
                Suite::Estimation(s) if s.noise_sigmas.iter().any(|x| !(*x >= 0.0)) => {
                    return bad(format!("suite[{i}].noise_sigmas"), "must be non-negative");
                }
                Suite::Affordance(s) if s.probes < 2 => {
                    return bad(format!("suite[{i}].probes"), "need at least 2 probes");
                }
                Suite::Manipulation(s) if s.estimation > s.total => {
                    return bad(format!("suite[{i}].estimation"), "cannot exceed total");
                }
                Suite::Puzzle(s) => {
                    if let Some(l) = s.levels.iter().find(|l| !PUZZLE_LEVELS.contains(&(l[0], l[1]))) {
                        return bad(format!("suite[{i}].levels"), &format!("unsupported level {l:?}"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Metrics {
    Estimation { true_class: JointClass, best_class: JointClass, correct: bool, interactions_used: usize },
    Affordance { accuracy: f64, l1_error: f64, probes: usize },
    Manipulation { proportion_opened: f64, best_class: JointClass, estimation_interactions: usize },
    Puzzle { solved: bool, interactions_used: usize },
}

/// One line of `records.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub suite: String,
    /// Setting or puzzle level the run is aggregated under.
    pub group: String,
    pub variant: String,
    pub method: String,
    pub scene: String,
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub suite: String,
    pub group: String,
    pub variant: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// Aggregate value for one cell, if present.
    pub fn value(&self, suite: &str, group: &str, variant: &str, method: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.suite == suite && r.group == group && r.variant == variant && r.method == method && r.metric == metric)
            .map(|r| r.value)
    }
}

#[derive(Clone, Debug)]
enum Job {
    Estimation { suite: String, spec: SceneSpec, cfg: EstimatorConfig, variant: String },
    Affordance { suite: String, spec: SceneSpec, probes: usize },
    Manipulation { suite: String, spec: SceneSpec, estimation: usize, total: usize },
    Puzzle { suite: String, spec: SceneSpec, level: [usize; 2], method: Method, budget: usize },
}

fn setting_name(s: Setting) -> &'static str {
    match s {
        Setting::Closed => "closed",
        Setting::HalfOpened => "half_opened",
    }
}

fn movable_suite(setting: Setting, seeds: std::ops::Range<u64>) -> Vec<SceneSpec> {
    single_joint_suite(setting, seeds).into_iter().filter(|s| s.true_class != Some(JointClass::Fixed)).collect()
}

fn expand(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut jobs = Vec::new();
    for suite in &cfg.suites {
        match suite {
            Suite::Estimation(s) => {
                let seeds = s.seeds.unwrap_or(cfg.seeds).range();
                let sigmas = if s.noise_sigmas.is_empty() { vec![cfg.estimator.noise_sigma] } else { s.noise_sigmas.clone() };
                for &setting in &s.settings {
                    for &sigma in &sigmas {
                        let mut est = cfg.estimator.clone();
                        est.noise_sigma = sigma;
                        if let Some(l) = s.likelihood {
                            est.likelihood = l;
                        }
                        let variant = format!("{:?} sigma={sigma}", est.likelihood).to_lowercase();
                        for spec in single_joint_suite(setting, seeds.clone()) {
                            jobs.push(Job::Estimation { suite: s.name.clone(), spec, cfg: est.clone(), variant: variant.clone() });
                        }
                    }
                }
            }
            Suite::Affordance(s) => {
                let seeds = s.seeds.unwrap_or(cfg.seeds).range();
                for &setting in &s.settings {
                    for spec in movable_suite(setting, seeds.clone()) {
                        jobs.push(Job::Affordance { suite: s.name.clone(), spec, probes: s.probes });
                    }
                }
            }
            Suite::Manipulation(s) => {
                let seeds = s.seeds.unwrap_or(cfg.seeds).range();
                for &setting in &s.settings {
                    for spec in movable_suite(setting, seeds.clone()) {
                        jobs.push(Job::Manipulation { suite: s.name.clone(), spec, estimation: s.estimation, total: s.total });
                    }
                }
            }
            Suite::Puzzle(s) => {
                for &level in &s.levels {
                    for &method in &s.methods {
                        for seed in s.seeds.unwrap_or(cfg.seeds).range() {
                            let spec = SceneSpec::puzzle(level[0], level[1], s.dummies, seed);
                            jobs.push(Job::Puzzle { suite: s.name.clone(), spec, level, method, budget: s.budget });
                        }
                    }
                }
            }
        }
    }
    jobs
}

type Trajectory = Vec<String>;

fn lines<T: Serialize>(items: &[T]) -> Result<Trajectory> {
    items.iter().map(|t| serde_json::to_string(t).map_err(Error::from)).collect()
}

fn run_job(job: &Job, cfg: &ExperimentConfig, prior: Option<&PriorWeights>) -> Result<(RunRecord, Trajectory)> {
    match job {
        Job::Estimation { suite, spec, cfg: est_cfg, variant } => {
            let scene = generate_scene(spec)?;
            let part = scene.task().goal_part;
            let mut world = scene.world.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(ESTIMATION_STREAM + spec.seed);
            let r = crate::estimator::estimate_joint(&mut world, part, est_cfg, prior, &mut rng)?;
            let truth = spec.true_class.expect("single-joint scene");
            let record = RunRecord {
                suite: suite.clone(),
                group: setting_name(spec.setting).into(),
                variant: variant.clone(),
                method: Method::Hsaur.name().into(),
                scene: spec.label(),
                seed: spec.seed,
                metrics: Metrics::Estimation {
                    true_class: truth,
                    best_class: r.best_class,
                    correct: r.best_class == truth,
                    interactions_used: r.interactions_used,
                },
            };
            Ok((record, lines(&r.trajectory)?))
        }
        Job::Affordance { suite, spec, probes } => {
            let scene = generate_scene(spec)?;
            let part = scene.task().goal_part;
            let mut world = scene.world.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(ESTIMATION_STREAM + spec.seed);
            let mut est = Estimator::new(&world, part, cfg.estimator.clone(), prior, &mut rng)?;
            est.run(&mut world, cfg.estimator.max_interactions, &mut rng)?;
            let s = eval_estimate(&world, &est, *probes, &mut rng)?;
            let record = RunRecord {
                suite: suite.clone(),
                group: setting_name(spec.setting).into(),
                variant: String::new(),
                method: Method::Hsaur.name().into(),
                scene: spec.label(),
                seed: spec.seed,
                metrics: Metrics::Affordance { accuracy: s.accuracy, l1_error: s.l1_error, probes: s.probes },
            };
            Ok((record, lines(&est.trajectory)?))
        }
        Job::Manipulation { suite, spec, estimation, total } => {
            let scene = generate_scene(spec)?;
            let mut world = scene.world.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(MANIPULATION_STREAM + spec.seed);
            let r = run_manipulation(&mut world, scene.task(), &cfg.estimator, prior, *estimation, *total, &mut rng)?;
            let record = RunRecord {
                suite: suite.clone(),
                group: setting_name(spec.setting).into(),
                variant: format!("{estimation}+{}", total - estimation),
                method: Method::Hsaur.name().into(),
                scene: spec.label(),
                seed: spec.seed,
                metrics: Metrics::Manipulation {
                    proportion_opened: r.proportion_opened,
                    best_class: r.best_class,
                    estimation_interactions: r.estimation_interactions,
                },
            };
            Ok((record, lines(&r.trajectory)?))
        }
        Job::Puzzle { suite, spec, level, method, budget } => {
            let scene = generate_scene(spec)?;
            let mut world = scene.world.clone();
            let pcfg = PuzzleConfig { max_interactions: *budget, ..PuzzleConfig::for_task(scene.task()) };
            let r = match method {
                Method::Hsaur => solve_puzzle(&mut world, &pcfg, &cfg.estimator, spec.seed)?,
                Method::Random => run_baseline(&mut world, Policy::Random, &pcfg, spec.seed)?,
                Method::Heuristic => run_baseline(&mut world, Policy::Heuristic, &pcfg, spec.seed)?,
            };
            let record = RunRecord {
                suite: suite.clone(),
                group: format!("({},{})", level[0], level[1]),
                variant: String::new(),
                method: method.name().into(),
                scene: spec.label(),
                seed: spec.seed,
                metrics: Metrics::Puzzle { solved: r.solved(), interactions_used: r.interactions_used },
            };
            Ok((record, lines(&r.trajectory)?))
        }
    }
}

fn run_file_name(r: &RunRecord) -> String {
    let clean = |s: &str| s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect::<String>();
    let variant = if r.variant.is_empty() { String::new() } else { format!("-{}", clean(&r.variant)) };
    format!("{}-{}{}-{}-{}-s{}.jsonl", clean(&r.suite), clean(&r.group), variant, r.method, r.scene, r.seed)
}

/// Runs every suite. When `out` is given, writes `records.jsonl`,
/// `report.json`, `report.csv`, `report.txt` and, if enabled, per-run
/// trajectories under `runs/`.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let prior = cfg.prior.as_deref().map(PriorWeights::load).transpose()?;
    let jobs = expand(cfg);
    log::info!("{}: {} runs", cfg.name, jobs.len());
    let results: Vec<(RunRecord, Trajectory)> =
        jobs.par_iter().map(|j| run_job(j, cfg, prior.as_ref())).collect::<Result<_>>()?;
    let records: Vec<RunRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    let report = ExperimentReport { name: cfg.name.clone(), config: cfg.clone(), rows: aggregate(&records), records };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_jsonl(BufWriter::new(File::create(dir.join("records.jsonl"))?), &report.records)?;
        if cfg.trajectory_logs {
            let runs = dir.join("runs");
            fs::create_dir_all(&runs)?;
            for (record, traj) in &results {
                let mut f = BufWriter::new(File::create(runs.join(run_file_name(record)))?);
                for line in traj {
                    writeln!(f, "{line}")?;
                }
            }
        }
        write_report(&report, dir)?;
    }
    Ok(report)
}

/// Writes `report.json`, `report.csv` and `report.txt` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let summary = serde_json::json!({ "name": report.name, "config": report.config, "rows": report.rows });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    write_csv(&report.rows, File::create(dir.join("report.csv"))?)?;
    fs::write(dir.join("report.txt"), format_table(&report.rows))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Config {
            field: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Mean metrics per (suite, group, variant, method), in first-seen order.
pub fn aggregate(records: &[RunRecord]) -> Vec<ReportRow> {
    type Key = (String, String, String, String);
    let mut order: Vec<Key> = Vec::new();
    let mut sums: BTreeMap<Key, BTreeMap<&'static str, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let key = (r.suite.clone(), r.group.clone(), r.variant.clone(), r.method.clone());
        if !sums.contains_key(&key) {
            order.push(key.clone());
        }
        let cell = sums.entry(key).or_default();
        let mut add = |name: &'static str, v: f64| {
            let e = cell.entry(name).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        };
        match &r.metrics {
            Metrics::Estimation { correct, interactions_used, .. } => {
                add("accuracy", f64::from(u8::from(*correct)));
                add("mean_interactions", *interactions_used as f64);
            }
            Metrics::Affordance { accuracy, l1_error, .. } => {
                add("accuracy", *accuracy);
                add("l1_error", *l1_error);
            }
            Metrics::Manipulation { proportion_opened, .. } => add("proportion_opened", *proportion_opened),
            Metrics::Puzzle { solved, interactions_used } => {
                add("solve_rate", f64::from(u8::from(*solved)));
                add("mean_interactions", *interactions_used as f64);
            }
        }
    }
    let mut rows = Vec::new();
    for key in order {
        for (metric, (sum, n)) in &sums[&key] {
            rows.push(ReportRow {
                suite: key.0.clone(),
                group: key.1.clone(),
                variant: key.2.clone(),
                method: key.3.clone(),
                metric: (*metric).into(),
                value: sum / *n as f64,
                runs: *n,
            });
        }
    }
    rows
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn format_table(rows: &[ReportRow]) -> String {
    let header = ["suite", "group", "variant", "method", "metric", "value", "runs"];
    let cells: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.suite.clone(),
                r.group.clone(),
                r.variant.clone(),
                r.method.clone(),
                r.metric.clone(),
                format!("{:.4}", r.value),
                r.runs.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cols: &[&str]| {
        let parts: Vec<String> = cols.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &cells {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
