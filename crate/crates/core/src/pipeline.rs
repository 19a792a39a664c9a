//! The two end-to-end design flows and their on-disk artifacts.
//!
//! Actuation first: synthesize a perfect-sensing policy over the discrete
//! sources, then project it onto each configured sensor set. Sensing first:
//! place a free source per region of the full comparator partition, then
//! project onto each configured actuator subset. Both evaluate every design
//! against an MPC baseline from a shared start set.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Stage};
use crate::dynamics::{ControlMode, Controller, CostParams, SourceLayout};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_design, DesignReport, EvalSettings, Evaluation, IdealBaseline, MpcController};
use crate::export;
use crate::gradient::mig_field;
use crate::policy::PolicyGrid;
use crate::projection::{
    best_source_per_region, project_to_actuators, project_to_sensors, source_grid, ProjectionResult, RegionPolicy,
    REGION_PROBE_RESOLUTION,
};
use crate::sensors::{distinct_sensors, enumerate_regions, SensorSet};
use crate::synthesis::{chattering_policy, entropy, extract_fsm, synthesize, PolicyIterationTrace, Termination};

/// Output directory of one experiment.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of an artifact, creating its parent directories.
    pub fn file(&self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub seed: u64,
    pub config: ExperimentConfig,
}

/// Writes `<stage>.manifest.json` and a TOML snapshot of the config.
pub fn write_manifest(dir: &RunDir, cfg: &ExperimentConfig, stage: &str) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        stage: stage.into(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    export::write_json(&dir.file(format!("{stage}.manifest.json"))?, &manifest)?;
    export::write_text(&dir.file(format!("{stage}.config.toml"))?, &cfg.to_toml())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub termination: Termination,
    pub accepted_iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub final_entropy: f64,
    pub chattering_entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub trace: PolicyIterationTrace,
    pub chattering: PolicyGrid,
    pub summary: SynthesisSummary,
}

impl SynthesisOutcome {
    pub fn policy(&self) -> &PolicyGrid {
        self.trace.final_policy()
    }
}

/// Runs the policy line search from the all-zero policy, computes the
/// chattering baseline, and writes both under `synthesis/`.
pub fn run_synthesis(cfg: &ExperimentConfig, dir: &RunDir) -> Result<SynthesisOutcome> {
    let layout = cfg.layout()?;
    let params = &cfg.cost;
    let [nx, ny] = cfg.synthesis.grid;
    let opts = cfg.synthesis_options();
    let null = PolicyGrid::uniform(nx, ny, *layout.workspace(), ControlMode::ZERO);
    let trace = synthesize(&null, cfg.synthesis.eps_h, cfg.synthesis.eps_j, &layout, params, &opts)?;
    let chattering = chattering_policy(nx, ny, &layout, params);
    let chattering_entropy = entropy(&extract_fsm(&chattering, &layout, params, opts.fsm_samples, opts.fsm_seed)?)?;
    let result = trace.result();
    let summary = SynthesisSummary {
        termination: trace.termination,
        accepted_iterations: trace.accepted().count() - 1,
        initial_cost: trace.records[0].cost,
        final_cost: result.cost,
        final_entropy: result.entropy,
        chattering_entropy,
    };

    export::write_trace(&dir.file("synthesis/trace.csv")?, &trace)?;
    for r in &trace.records {
        export::write_policy(&dir.file(format!("synthesis/policy_k{:02}.csv", r.k))?, &r.policy)?;
    }
    export::write_policy(&dir.file("synthesis/final_policy.csv")?, trace.final_policy())?;
    export::write_policy(&dir.file("synthesis/chattering_policy.csv")?, &chattering)?;
    export::write_mig_field(&dir.file("synthesis/mig_final.csv")?, &mig_field(trace.final_policy(), &layout, params))?;
    export::write_json(&dir.file("synthesis/summary.json")?, &summary)?;
    Ok(SynthesisOutcome { trace, chattering, summary })
}

/// Writes the region map, policy JSON and logic table of a region policy.
pub fn write_region_policy(dir: &RunDir, prefix: &str, policy: &RegionPolicy, layout: &SourceLayout) -> Result<()> {
    let map = export::region_map(&policy.sensors, layout, REGION_PROBE_RESOLUTION);
    export::write_region_map(&dir.file(format!("{prefix}/region_map.csv"))?, &map)?;
    export::write_json(&dir.file(format!("{prefix}/region_policy.json"))?, policy)?;
    export::write_text(&dir.file(format!("{prefix}/logic_table.txt"))?, &export::logic_table(policy))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CostMatrix {
    candidates: Vec<ControlMode>,
    regions: Vec<String>,
    visits: Vec<usize>,
    mean_cost: Vec<Vec<Option<f64>>>,
}

fn write_projection(dir: &RunDir, prefix: &str, result: &ProjectionResult, layout: &SourceLayout) -> Result<()> {
    write_region_policy(dir, prefix, &result.policy, layout)?;
    let matrix = CostMatrix {
        candidates: result.candidates.clone(),
        regions: result.regions.iter().map(|r| r.to_string()).collect(),
        visits: result.visits.clone(),
        mean_cost: result.mean_cost.clone(),
    };
    export::write_json(&dir.file(format!("{prefix}/cost_matrix.json"))?, &matrix)
}

/// Named projection results, in config order.
pub type Designs = Vec<(String, ProjectionResult)>;

/// Projects a perfect-sensing policy onto every configured sensor set and
/// writes each under `designs/<name>/`.
pub fn project_sensor_sets(cfg: &ExperimentConfig, policy: &PolicyGrid, dir: &RunDir) -> Result<Designs> {
    let layout = cfg.layout()?;
    let budget = cfg.rollout_budget();
    let mut out = Vec::new();
    for named in &cfg.sensor_sets {
        let set = named.resolve(&layout)?;
        let result = project_to_sensors(policy, &set, &layout, &cfg.cost, &budget, cfg.stage_seed(Stage::Projection))?;
        write_projection(dir, &format!("designs/{}", named.name), &result, &layout)?;
        out.push((named.name.clone(), result));
    }
    Ok(out)
}

/// Evaluates labelled controllers against one baseline, writing each
/// design's report, endpoints and occupancy under `reports/<label>/`, and
/// the combined `summary.csv`.
pub fn evaluate_all(
    dir: &RunDir,
    baseline: &IdealBaseline,
    designs: &[(String, &dyn Controller)],
    layout: &SourceLayout,
    params: &CostParams,
    settings: &EvalSettings,
) -> Result<Vec<DesignReport>> {
    export::write_endpoints(&dir.file("reports/baseline_endpoints.csv")?, &baseline.runs)?;
    let mut reports = Vec::new();
    for (label, controller) in designs {
        let Evaluation { report, runs, occupancy } =
            evaluate_design(label, *controller, baseline, layout, params, settings)?;
        export::write_json(&dir.file(format!("reports/{label}/report.json"))?, &report)?;
        export::write_endpoints(&dir.file(format!("reports/{label}/endpoints.csv"))?, &runs)?;
        export::write_occupancy(&dir.file(format!("reports/{label}/occupancy.csv"))?, &baseline.occupancy, &occupancy)?;
        reports.push(report);
    }
    export::write_summary(&dir.file("summary.csv")?, &reports)?;
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct ActuationFirst {
    pub synthesis: SynthesisOutcome,
    pub designs: Designs,
    pub reports: Vec<DesignReport>,
}

impl ActuationFirst {
    pub fn report(&self, label: &str) -> Option<&DesignReport> {
        self.reports.iter().find(|r| r.label == label)
    }
}

/// Projects `policy` onto the configured sensor sets and evaluates the
/// results against the discrete-source MPC baseline. Reports are labelled
/// `ideal`, `perfect-sensing`, `chattering` (when given), then one per
/// sensor set.
pub fn sensor_designs(
    cfg: &ExperimentConfig,
    dir: &RunDir,
    policy: &PolicyGrid,
    chattering: Option<&PolicyGrid>,
) -> Result<(Designs, Vec<DesignReport>)> {
    let layout = cfg.layout()?;
    let designs = project_sensor_sets(cfg, policy, dir)?;
    let settings = cfg.eval_settings();
    let ideal = MpcController::new(layout.discrete_modes(), &layout, &cfg.cost)?;
    let baseline = IdealBaseline::compute(&ideal, &layout, &cfg.cost, &settings)?;
    let controllers: Vec<_> = designs.iter().map(|(n, r)| (n.clone(), r.policy.controller(&layout))).collect();
    let mut labelled: Vec<(String, &dyn Controller)> =
        vec![("ideal".into(), &ideal), ("perfect-sensing".into(), policy)];
    if let Some(c) = chattering {
        labelled.push(("chattering".into(), c));
    }
    labelled.extend(controllers.iter().map(|(n, c)| (n.clone(), c as &dyn Controller)));
    let reports = evaluate_all(dir, &baseline, &labelled, &layout, &cfg.cost, &settings)?;
    Ok((designs, reports))
}

/// Synthesis, chattering baseline, sensor projections and evaluation.
pub fn run_actuation_first(cfg: &ExperimentConfig) -> Result<ActuationFirst> {
    cfg.validate()?;
    let dir = RunDir::create(&cfg.output_dir)?;
    write_manifest(&dir, cfg, "actuation-first")?;
    let synthesis = run_synthesis(cfg, &dir)?;
    let (designs, reports) = sensor_designs(cfg, &dir, synthesis.policy(), Some(&synthesis.chattering))?;
    Ok(ActuationFirst { synthesis, designs, reports })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourcePlacement {
    pub sensors: SensorSet,
    pub region_count: usize,
    pub policy: RegionPolicy,
}

/// Per-region source placement over the full comparator library, written
/// under `sensing/`.
pub fn run_source_placement(cfg: &ExperimentConfig, dir: &RunDir) -> Result<SourcePlacement> {
    let layout = cfg.layout()?;
    let sensors = distinct_sensors(&layout);
    let region_count = enumerate_regions(&sensors, &layout, REGION_PROBE_RESOLUTION)?.len();
    let grid = cfg.sensing_first.candidate_grid;
    let policy = best_source_per_region(
        &sensors,
        &source_grid(&layout, grid, grid),
        &layout,
        &cfg.cost,
        &cfg.region_budget(),
        cfg.stage_seed(Stage::SourcePlacement),
        cfg.sensing_first.passes,
    )?;
    write_region_policy(dir, "sensing", &policy, &layout)?;
    Ok(SourcePlacement { sensors, region_count, policy })
}

/// Projects a continuous-actuation region policy onto every configured
/// actuator subset, written under `designs/<name>/`.
pub fn project_actuator_sets(cfg: &ExperimentConfig, policy: &RegionPolicy, dir: &RunDir) -> Result<Designs> {
    let layout = cfg.layout()?;
    let budget = cfg.rollout_budget();
    let mut out = Vec::new();
    for named in &cfg.actuator_sets {
        let result =
            project_to_actuators(policy, &named.modes, &layout, &cfg.cost, &budget, cfg.stage_seed(Stage::Projection))?;
        write_projection(dir, &format!("designs/{}", named.name), &result, &layout)?;
        out.push((named.name.clone(), result));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SensingFirst {
    pub placement: SourcePlacement,
    pub designs: Designs,
    pub reports: Vec<DesignReport>,
}

impl SensingFirst {
    pub fn report(&self, label: &str) -> Option<&DesignReport> {
        self.reports.iter().find(|r| r.label == label)
    }
}

/// Projects a continuous-actuation region policy onto the configured
/// actuator subsets and evaluates everything against the free-source MPC
/// baseline. Reports are labelled `ideal`, `continuous`, then one per
/// subset.
pub fn actuator_designs(
    cfg: &ExperimentConfig,
    dir: &RunDir,
    policy: &RegionPolicy,
) -> Result<(Designs, Vec<DesignReport>)> {
    let layout = cfg.layout()?;
    let designs = project_actuator_sets(cfg, policy, dir)?;
    let settings = cfg.eval_settings();
    let ideal = continuous_baseline_controller(cfg, &layout)?;
    let baseline = IdealBaseline::compute(&ideal, &layout, &cfg.cost, &settings)?;
    let continuous = policy.controller(&layout);
    let controllers: Vec<_> = designs.iter().map(|(n, r)| (n.clone(), r.policy.controller(&layout))).collect();
    let mut labelled: Vec<(String, &dyn Controller)> =
        vec![("ideal".into(), &ideal), ("continuous".into(), &continuous)];
    labelled.extend(controllers.iter().map(|(n, c)| (n.clone(), c as &dyn Controller)));
    let reports = evaluate_all(dir, &baseline, &labelled, &layout, &cfg.cost, &settings)?;
    Ok((designs, reports))
}

/// MPC over zero control and a grid of free source positions.
pub fn continuous_baseline_controller<'a>(
    cfg: &'a ExperimentConfig,
    layout: &'a SourceLayout,
) -> Result<MpcController<'a>> {
    let g = cfg.sensing_first.mpc_grid;
    MpcController::new(source_grid(layout, g, g), layout, &cfg.cost)
}

/// Source placement, actuator projections and evaluation.
pub fn run_sensing_first(cfg: &ExperimentConfig) -> Result<SensingFirst> {
    cfg.validate()?;
    let dir = RunDir::create(&cfg.output_dir)?;
    write_manifest(&dir, cfg, "sensing-first")?;
    let placement = run_source_placement(cfg, &dir)?;
    let (designs, reports) = actuator_designs(cfg, &dir, &placement.policy)?;
    Ok(SensingFirst { placement, designs, reports })
}

/// Outcome of comparing two adjacent designs on one metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// The richer design is better by at least the margin.
    Holds,
    /// The two are within the margin of each other.
    Tie,
    /// The richer design is worse by more than the margin.
    Violated,
}

/// Compares a richer design's metric (`better`, lower is better) with a
/// poorer one's, using a relative margin.
pub fn compare(better: f64, worse: f64, margin: f64) -> Ordering {
    let scale = better.abs().max(worse.abs());
    if scale == 0.0 || (worse - better).abs() < margin * scale {
        Ordering::Tie
    } else if better < worse {
        Ordering::Holds
    } else {
        Ordering::Violated
    }
}
