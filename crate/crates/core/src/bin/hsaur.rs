use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use hsaur::bench::baselines::{run_baseline, Policy};
use hsaur::bench::experiment::{
    aggregate, format_table, parse_document, read_config, read_records, run_experiment, write_report, ExperimentConfig,
    ExperimentReport,
};
use hsaur::bench::{generate_scene, SceneSpec};
use hsaur::estimator::{estimate_joint, write_jsonl, EstimatorConfig, Likelihood};
use hsaur::hypotheses::PriorWeights;
use hsaur::puzzle::{solve_puzzle, PuzzleConfig};
use hsaur::sim::{PartId, SceneFile, Task, World};
use hsaur::{Error, Result};

#[derive(Parser)]
#[command(name = "hsaur", version, about = "Interactive articulation estimation and puzzle solving")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark scene as JSON.
    Generate {
        /// `rev-left`, `pris-y@half-opened`, `puzzlebox-2x1`, `puzzlebox-1x2-dummy`, ...
        #[arg(long)]
        scene: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the joint of one part by interacting with it.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// Part to estimate (defaults to the scene's goal part).
        #[arg(long)]
        part: Option<PartId>,
    },
    /// Open the goal part of a scene, resolving whatever blocks it.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// `hsaur`, `random` or `heuristic`.
        #[arg(long, default_value = "hsaur")]
        method: String,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Run an experiment config and write records and reports.
    Bench {
        /// Experiment config (TOML or JSON).
        #[arg(long)]
        config: PathBuf,
        /// First seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        est: EstimatorOverrides,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Recompute the report tables from a records log.
    Report {
        /// `records.jsonl`, or a directory containing it.
        records: PathBuf,
        /// Experiment config to embed in `report.json`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report directory (defaults to the records' directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EstimatorOverrides {
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long, value_parser = ["chamfer", "cosine"])]
    likelihood: Option<String>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Class or proposal prior (JSON).
    #[arg(long)]
    prior: Option<PathBuf>,
}

impl EstimatorOverrides {
    fn apply(&self, cfg: &mut EstimatorConfig) -> Result<()> {
        if let Some(n) = self.particles {
            cfg.n_particles = n;
        }
        if let Some(l) = &self.likelihood {
            cfg.likelihood = l.parse::<Likelihood>()?;
        }
        if let Some(s) = self.noise_sigma {
            cfg.noise_sigma = s;
        }
        cfg.validate()
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scene JSON file or a generator name as accepted by `generate`.
    #[arg(long)]
    scene: String,
    /// Estimator config (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    est: EstimatorOverrides,
    /// Trajectory log (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn estimator(&self) -> Result<EstimatorConfig> {
        let mut cfg = match &self.config {
            Some(p) => parse_document(&read_config(p)?)?,
            None => EstimatorConfig::default(),
        };
        self.est.apply(&mut cfg)?;
        Ok(cfg)
    }

    fn prior(&self) -> Result<Option<PriorWeights>> {
        self.est.prior.as_deref().map(PriorWeights::load).transpose()
    }

    fn world(&self) -> Result<(World, Option<Task>)> {
        if Path::new(&self.scene).is_file() {
            let file = SceneFile::load(Path::new(&self.scene))?;
            Ok((file.build()?, file.task))
        } else {
            let scene = generate_scene(&SceneSpec::parse(&self.scene, self.seed)?)?;
            Ok((scene.world, scene.file.task))
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_log<T: Serialize>(path: Option<&Path>, records: &[T]) -> Result<()> {
    match path {
        Some(p) => write_jsonl(BufWriter::new(File::create(p)?), records),
        None => Ok(()),
    }
}

fn no_task() -> Error {
    Error::InvalidSpec("scene has no task; pass --part".into())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config { field: "jobs".into(), message: e.to_string() })?;
    }
    match cli.command {
        Command::Generate { scene, seed, out } => {
            let generated = generate_scene(&SceneSpec::parse(&scene, seed)?)?;
            match out {
                Some(p) => generated.file.save(&p)?,
                None => println!("{}", generated.file.to_json()?),
            }
        }
        Command::Estimate { run, part } => {
            let cfg = run.estimator()?;
            let (mut world, task) = run.world()?;
            let part = part.or(task.map(|t| t.goal_part)).ok_or_else(no_task)?;
            let prior = run.prior()?;
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            let result = estimate_joint(&mut world, part, &cfg, prior.as_ref(), &mut rng)?;
            write_log(run.out.as_deref(), &result.trajectory)?;
            print_json(&serde_json::json!({
                "part": part,
                "best_class": result.best_class,
                "posterior": result.posterior.to_map(),
                "interactions_used": result.interactions_used,
                "stop": result.stop,
                "contact_interrupt": result.contact_interrupt,
                "theta": world.theta(part)?,
            }))?;
        }
        Command::Solve { run, method, budget } => {
            let cfg = run.estimator()?;
            let (mut world, task) = run.world()?;
            let task = task.ok_or_else(|| Error::InvalidSpec("scene has no task".into()))?;
            let mut pcfg = PuzzleConfig::for_task(&task);
            if let Some(b) = budget {
                pcfg.max_interactions = b;
            }
            let result = match method.as_str() {
                "hsaur" => solve_puzzle(&mut world, &pcfg, &cfg, run.seed)?,
                other => run_baseline(&mut world, other.parse::<Policy>()?, &pcfg, run.seed)?,
            };
            write_log(run.out.as_deref(), &result.trajectory)?;
            print_json(&serde_json::json!({
                "method": method,
                "outcome": result.outcome,
                "solved": result.solved(),
                "interactions_used": result.interactions_used,
                "dependency_trace": result.dependency_trace,
            }))?;
        }
        Command::Bench { config, seed, est, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds.start = s;
            }
            est.apply(&mut cfg.estimator)?;
            if est.prior.is_some() {
                cfg.prior = est.prior.clone();
            }
            let report = run_experiment(&cfg, Some(&out))?;
            print!("{}", format_table(&report.rows));
            log::info!("wrote {}", out.display());
        }
        Command::Report { records, config, out } => {
            let path = if records.is_dir() { records.join("records.jsonl") } else { records };
            let records = read_records(&path)?;
            let config = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let dir = out.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            let report = ExperimentReport { name: config.name.clone(), rows: aggregate(&records), config, records };
            write_report(&report, &dir)?;
            print!("{}", format_table(&report.rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
