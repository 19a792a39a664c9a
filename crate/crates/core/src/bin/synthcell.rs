use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use synthcell::config::ExperimentConfig;
use synthcell::dynamics::Controller;
use synthcell::error::{Error, Result};
use synthcell::evaluation::{IdealBaseline, MpcController};
use synthcell::export;
use synthcell::pipeline::{self, RunDir};
use synthcell::projection::RegionPolicy;

#[derive(Parser)]
#[command(name = "synthcell", version, about = "Co-design of sensing and actuation for chemotactic cells")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Reference settings when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Run directory; overrides `output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Any config key, e.g. `--set evaluation.n_rollouts=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("output_dir={}", toml_string(out)));
        }
        match &self.config {
            Some(path) => ExperimentConfig::load_with_overrides(path, &overrides),
            None => ExperimentConfig::parse_with_overrides("", &overrides),
        }
    }
}

fn toml_string(p: &Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    /// MPC over the discrete sources.
    Discrete,
    /// MPC over a grid of free source positions.
    Continuous,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pipeline {
    ActuationFirst,
    SensingFirst,
}

#[derive(Subcommand)]
enum Command {
    /// Policy line search from the all-zero policy, plus the chattering baseline.
    Synthesize(Common),
    /// Project a perfect-sensing policy onto the configured sensor sets and evaluate.
    ProjectSensors {
        #[command(flatten)]
        common: Common,
        /// Policy CSV; defaults to `<out>/synthesis/final_policy.csv`.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Place one free source per region of the full comparator partition.
    SensingFirst(Common),
    /// Project a region policy onto the configured actuator subsets and evaluate.
    ProjectActuators {
        #[command(flatten)]
        common: Common,
        /// Region policy JSON; defaults to `<out>/sensing/region_policy.json`.
        #[arg(long)]
        region_policy: Option<PathBuf>,
    },
    /// Evaluate one policy file (grid CSV or region policy JSON) against an MPC baseline.
    Evaluate {
        #[command(flatten)]
        common: Common,
        policy: PathBuf,
        #[arg(long, default_value = "design")]
        label: String,
        #[arg(long, value_enum, default_value = "discrete")]
        baseline: Baseline,
    },
    /// Print the summary table of a run directory, optionally running a full pipeline first.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        run: Option<Pipeline>,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Synthesize(common) => {
            let cfg = common.load()?;
            let dir = RunDir::create(&cfg.output_dir)?;
            pipeline::write_manifest(&dir, &cfg, "synthesize")?;
            let out = pipeline::run_synthesis(&cfg, &dir)?;
            Ok(json!({ "run_dir": dir.root(), "synthesis": out.summary }))
        }
        Command::ProjectSensors { common, policy } => {
            let cfg = common.load()?;
            let dir = RunDir::create(&cfg.output_dir)?;
            pipeline::write_manifest(&dir, &cfg, "project-sensors")?;
            let path = policy.unwrap_or_else(|| dir.root().join("synthesis/final_policy.csv"));
            let grid = export::read_policy(&path, cfg.layout.workspace)?;
            grid.validate(&cfg.layout()?)?;
            let (_, reports) = pipeline::sensor_designs(&cfg, &dir, &grid, None)?;
            Ok(json!({ "run_dir": dir.root(), "reports": reports }))
        }
        Command::SensingFirst(common) => {
            let cfg = common.load()?;
            let dir = RunDir::create(&cfg.output_dir)?;
            pipeline::write_manifest(&dir, &cfg, "sensing-first")?;
            let placement = pipeline::run_source_placement(&cfg, &dir)?;
            Ok(json!({
                "run_dir": dir.root(),
                "sensors": placement.sensors,
                "region_count": placement.region_count,
            }))
        }
        Command::ProjectActuators { common, region_policy } => {
            let cfg = common.load()?;
            let dir = RunDir::create(&cfg.output_dir)?;
            pipeline::write_manifest(&dir, &cfg, "project-actuators")?;
            let path = region_policy.unwrap_or_else(|| dir.root().join("sensing/region_policy.json"));
            let rp: RegionPolicy = export::read_json(&path)?;
            let (_, reports) = pipeline::actuator_designs(&cfg, &dir, &rp)?;
            Ok(json!({ "run_dir": dir.root(), "reports": reports }))
        }
        Command::Evaluate { common, policy, label, baseline } => {
            let cfg = common.load()?;
            let dir = RunDir::create(&cfg.output_dir)?;
            pipeline::write_manifest(&dir, &cfg, "evaluate")?;
            let layout = cfg.layout()?;
            let settings = cfg.eval_settings();
            let ideal = match baseline {
                Baseline::Discrete => MpcController::new(layout.discrete_modes(), &layout, &cfg.cost)?,
                Baseline::Continuous => pipeline::continuous_baseline_controller(&cfg, &layout)?,
            };
            let base = IdealBaseline::compute(&ideal, &layout, &cfg.cost, &settings)?;
            let is_json = policy.extension().is_some_and(|e| e == "json");
            let grid;
            let rp: RegionPolicy;
            let rc;
            let controller: &dyn Controller = if is_json {
                rp = export::read_json(&policy)?;
                rc = rp.controller(&layout);
                &rc
            } else {
                grid = export::read_policy(&policy, cfg.layout.workspace)?;
                grid.validate(&layout)?;
                &grid
            };
            let reports = pipeline::evaluate_all(&dir, &base, &[(label, controller)], &layout, &cfg.cost, &settings)?;
            Ok(json!({ "run_dir": dir.root(), "reports": reports }))
        }
        Command::Report { common, run } => {
            let cfg = common.load()?;
            match run {
                Some(Pipeline::ActuationFirst) => drop(pipeline::run_actuation_first(&cfg)?),
                Some(Pipeline::SensingFirst) => drop(pipeline::run_sensing_first(&cfg)?),
                None => {}
            }
            let reports = export::read_summary(&cfg.output_dir.join("summary.csv"))?;
            eprintln!("{:<18} {:>9} {:>9} {:>11} {:>8}", "design", "entropy", "kl", "final_dist", "arrived");
            for r in &reports {
                eprintln!(
                    "{:<18} {:>9.4} {:>9.4} {:>11.4} {:>8.3}",
                    r.label, r.entropy, r.kl, r.mean_final_distance, r.arrival_rate
                );
            }
            Ok(json!({ "run_dir": cfg.output_dir, "reports": reports }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut body = json!({ "error": e.kind(), "message": e.to_string() });
            if let Error::Config { line, .. } = &e {
                body["line"] = json!(line);
            }
            println!("{body}");
            ExitCode::from(2)
        }
    }
}
