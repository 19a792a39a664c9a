//! Experiment configuration, loaded from TOML.
//!
//! Every section is optional and falls back to the reference settings.
//! Validation errors carry the line of the offending key (line 0 for values
//! that came from a command-line override).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{CostParams, SourceLayout, Workspace};
use crate::error::{Error, Result};
use crate::evaluation::{BinSpec, EvalSettings};
use crate::projection::RolloutBudget;
use crate::sensors::{distinct_sensors, source_one_sensors, SensorSet};
use crate::synthesis::SynthesisOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub layout: LayoutConfig,
    pub cost: CostParams,
    pub synthesis: SynthesisConfig,
    pub projection: ProjectionConfig,
    pub sensing_first: SensingFirstConfig,
    pub evaluation: EvaluationConfig,
    pub sensor_sets: Vec<NamedSensorSet>,
    pub actuator_sets: Vec<NamedActuatorSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub sources: Vec<[f64; 2]>,
    pub epsilon: f64,
    pub v_max: f64,
    pub workspace: Workspace,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        let l = SourceLayout::reference();
        Self { sources: l.sources().to_vec(), epsilon: l.epsilon(), v_max: l.v_max(), workspace: *l.workspace() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Policy grid cells along x and y.
    pub grid: [usize; 2],
    pub eps_h: f64,
    pub eps_j: f64,
    pub gamma_init: f64,
    pub gamma_growth: f64,
    pub gamma_max: f64,
    pub cost_rollouts: usize,
    pub fsm_samples: usize,
    pub max_iterations: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let o = SynthesisOptions::default();
        Self {
            grid: [50, 50],
            eps_h: 1.25,
            eps_j: 10.0,
            gamma_init: o.gamma_init,
            gamma_growth: o.gamma_growth,
            gamma_max: o.gamma_max,
            cost_rollouts: o.cost_rollouts,
            fsm_samples: o.fsm_samples,
            max_iterations: o.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub n_rollouts: usize,
    pub i_max: usize,
    pub goal_radius: f64,
    /// Defaults to `2 * i_max * t_s`.
    pub j_penalty: Option<f64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { n_rollouts: 1000, i_max: 2500, goal_radius: 0.1, j_penalty: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingFirstConfig {
    pub starts_per_region: usize,
    /// Candidate sources sit at the centers of a `candidate_grid` square grid.
    pub candidate_grid: usize,
    pub passes: usize,
    /// Source grid of the continuous-actuation MPC baseline.
    pub mpc_grid: usize,
}

impl Default for SensingFirstConfig {
    fn default() -> Self {
        Self { starts_per_region: 10, candidate_grid: 20, passes: 3, mpc_grid: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_rollouts: usize,
    pub bins: [usize; 2],
    pub smoothing: f64,
    pub goal_radius: f64,
    pub fsm_samples: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { n_rollouts: 1000, bins: [25, 25], smoothing: 1e-9, goal_radius: 0.1, fsm_samples: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorPreset {
    /// One comparator per distinct bisector.
    Distinct,
    /// Source 1 against every other source.
    SourceOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSensorSet {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<SensorPreset>,
}

impl NamedSensorSet {
    pub fn resolve(&self, layout: &SourceLayout) -> Result<SensorSet> {
        match (self.preset, self.pairs.is_empty()) {
            (Some(SensorPreset::Distinct), true) => Ok(distinct_sensors(layout)),
            (Some(SensorPreset::SourceOne), true) => Ok(source_one_sensors(layout)),
            (None, false) => {
                let pairs: Vec<(usize, usize)> = self.pairs.iter().map(|p| (p[0], p[1])).collect();
                let set = SensorSet::from_pairs(&pairs)?;
                set.validate(layout)?;
                Ok(set)
            }
            _ => Err(Error::InvalidParameter(format!(
                "sensor set `{}` needs exactly one of `pairs` or `preset`",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedActuatorSet {
    pub name: String,
    /// Source indices (1-based); zero control is always added.
    pub modes: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl ExperimentConfig {
    pub fn reference() -> Self {
        let sensor = |name: &str, pairs: Vec<[usize; 2]>, preset| NamedSensorSet { name: name.into(), pairs, preset };
        let actuator = |name: &str, modes: &[usize]| NamedActuatorSet { name: name.into(), modes: modes.to_vec() };
        Self {
            seed: 1,
            output_dir: PathBuf::from("runs/reference"),
            layout: LayoutConfig::default(),
            cost: CostParams::reference(),
            synthesis: SynthesisConfig::default(),
            projection: ProjectionConfig::default(),
            sensing_first: SensingFirstConfig::default(),
            evaluation: EvaluationConfig::default(),
            sensor_sets: vec![
                sensor("high", vec![], Some(SensorPreset::Distinct)),
                sensor("medium", vec![], Some(SensorPreset::SourceOne)),
                sensor("low", vec![[1, 2], [1, 5]], None),
            ],
            actuator_sets: vec![
                actuator("high", &[1, 2, 3, 4, 5, 6]),
                actuator("medium", &[1, 2, 3]),
                actuator("low", &[1, 4]),
            ],
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Loads a config file, applying `key.path=value` overrides before
    /// validation. Values are TOML literals; bare words are taken as strings.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_with_overrides(&src, overrides)
    }

    pub fn parse(src: &str) -> Result<Self> {
        Self::parse_with_overrides(src, &[])
    }

    pub fn parse_with_overrides(src: &str, overrides: &[String]) -> Result<Self> {
        let cfg: Self = if overrides.is_empty() {
            toml::from_str(src).map_err(|e| syntax_error(src, &e))?
        } else {
            let mut doc: toml::Table = toml::from_str(src).map_err(|e| syntax_error(src, &e))?;
            for o in overrides {
                apply_override(&mut doc, o)?;
            }
            doc.try_into().map_err(|e: toml::de::Error| Error::Config { line: 0, message: e.message().to_string() })?
        };
        let overridden: Vec<&str> = overrides.iter().filter_map(|o| o.split_once('=')).map(|(k, _)| k.trim()).collect();
        cfg.validate_with(|section, key| {
            let path = match section {
                Section::Table(name) => format!("{name}.{key}"),
                Section::ArrayItem(..) => String::new(),
            };
            if overridden.iter().any(|o| *o == path || path.starts_with(&format!("{o}."))) {
                0
            } else {
                locate(src, section, key)
            }
        })?;
        Ok(cfg)
    }

    /// Checks every value an experiment depends on. Line numbers are
    /// unavailable here; use [`ExperimentConfig::parse`] for located errors.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(|_, _| 0)
    }

    fn validate_with(&self, line: impl Fn(Section<'_>, &str) -> usize) -> Result<()> {
        let fail =
            |section: Section<'_>, key: &str, message: String| Error::Config { line: line(section, key), message };
        let top = Section::Table("layout");
        let layout = self.layout().map_err(|e| fail(top, "sources", e.to_string()))?;

        let cost = Section::Table("cost");
        self.cost.validate().map_err(|e| fail(cost, "time_step", e.to_string()))?;
        if (self.cost.final_time / self.cost.time_step - self.cost.steps() as f64).abs() > 1e-6 {
            return Err(fail(cost, "final_time", "final_time must be a whole number of time steps".into()));
        }

        let syn = Section::Table("synthesis");
        if self.synthesis.grid[0] == 0 || self.synthesis.grid[1] == 0 {
            return Err(fail(syn, "grid", "grid needs at least one cell per axis".into()));
        }
        if !(self.synthesis.eps_h > 0.0) {
            return Err(fail(syn, "eps_h", "eps_h must be positive".into()));
        }
        if !(self.synthesis.eps_j > 0.0) {
            return Err(fail(syn, "eps_j", "eps_j must be positive".into()));
        }
        if !(self.synthesis.gamma_init > 0.0
            && self.synthesis.gamma_growth > 1.0
            && self.synthesis.gamma_max >= self.synthesis.gamma_init)
        {
            return Err(fail(
                syn,
                "gamma_init",
                "need gamma_init > 0, gamma_growth > 1, gamma_max >= gamma_init".into(),
            ));
        }
        if self.synthesis.cost_rollouts == 0 || self.synthesis.fsm_samples == 0 {
            return Err(fail(syn, "cost_rollouts", "rollout and sample counts must be positive".into()));
        }

        let proj = Section::Table("projection");
        self.rollout_budget().validate(&self.cost).map_err(|e| fail(proj, "i_max", e.to_string()))?;

        let sf = Section::Table("sensing_first");
        let s = &self.sensing_first;
        if s.starts_per_region == 0 || s.candidate_grid == 0 || s.passes == 0 || s.mpc_grid == 0 {
            return Err(fail(sf, "starts_per_region", "sensing-first counts must be positive".into()));
        }

        let ev = Section::Table("evaluation");
        let e = &self.evaluation;
        if e.n_rollouts == 0 || e.fsm_samples == 0 {
            return Err(fail(ev, "n_rollouts", "evaluation counts must be positive".into()));
        }
        if e.bins[0] == 0 || e.bins[1] == 0 {
            return Err(fail(ev, "bins", "bin grid must be non-empty".into()));
        }
        if !(e.smoothing >= 0.0) || !(e.goal_radius > 0.0) {
            return Err(fail(ev, "smoothing", "smoothing must be >= 0 and goal_radius > 0".into()));
        }

        for (i, set) in self.sensor_sets.iter().enumerate() {
            let here = Section::ArrayItem("sensor_sets", i);
            if self.sensor_sets[..i].iter().any(|s| s.name == set.name) {
                return Err(fail(here, "name", format!("duplicate sensor set name `{}`", set.name)));
            }
            let key = if set.preset.is_some() { "preset" } else { "pairs" };
            set.resolve(&layout).map_err(|e| fail(here, key, e.to_string()))?;
        }
        for (i, set) in self.actuator_sets.iter().enumerate() {
            let here = Section::ArrayItem("actuator_sets", i);
            if self.actuator_sets[..i].iter().any(|s| s.name == set.name) {
                return Err(fail(here, "name", format!("duplicate actuator set name `{}`", set.name)));
            }
            if set.modes.is_empty() {
                return Err(fail(here, "modes", format!("actuator set `{}` is empty", set.name)));
            }
            if let Some(m) = set.modes.iter().find(|&&m| m >= layout.mode_count()) {
                return Err(fail(
                    here,
                    "modes",
                    format!(
                        "actuator set `{}` names mode {m}, layout has modes 0..{}",
                        set.name,
                        layout.mode_count() - 1
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<SourceLayout> {
        SourceLayout::new(self.layout.sources.clone(), self.layout.epsilon, self.layout.v_max, self.layout.workspace)
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        let s = &self.synthesis;
        SynthesisOptions {
            gamma_init: s.gamma_init,
            gamma_growth: s.gamma_growth,
            gamma_max: s.gamma_max,
            cost_rollouts: s.cost_rollouts,
            cost_seed: self.stage_seed(Stage::SynthesisCost),
            fsm_samples: s.fsm_samples,
            fsm_seed: self.stage_seed(Stage::Complexity),
            max_iterations: s.max_iterations,
        }
    }

    pub fn rollout_budget(&self) -> RolloutBudget {
        let p = &self.projection;
        RolloutBudget {
            n_rollouts: p.n_rollouts,
            i_max: p.i_max,
            goal_radius: p.goal_radius,
            j_penalty: p.j_penalty.unwrap_or(2.0 * p.i_max as f64 * self.cost.time_step),
        }
    }

    pub fn region_budget(&self) -> RolloutBudget {
        RolloutBudget { n_rollouts: self.sensing_first.starts_per_region, ..self.rollout_budget() }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        let e = &self.evaluation;
        EvalSettings {
            n_rollouts: e.n_rollouts,
            seed: self.stage_seed(Stage::Evaluation),
            bins: BinSpec { nx: e.bins[0], ny: e.bins[1], workspace: self.layout.workspace },
            smoothing: e.smoothing,
            goal_radius: e.goal_radius,
            fsm_samples: e.fsm_samples,
            fsm_seed: self.stage_seed(Stage::Complexity),
        }
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stage as u64)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}

/// Independent random streams used by the pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    SynthesisCost = 1,
    Complexity = 2,
    Projection = 3,
    Evaluation = 4,
    SourcePlacement = 5,
}

#[derive(Debug, Clone, Copy)]
enum Section<'a> {
    Table(&'a str),
    ArrayItem(&'a str, usize),
}

fn syntax_error(src: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map(|s| line_at(src, s.start)).unwrap_or(0);
    Error::Config { line, message: e.message().to_string() }
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key` inside the given section, falling back to the section
/// header, then to line 1.
fn locate(src: &str, section: Section<'_>, key: &str) -> usize {
    let lines: Vec<&str> = src.lines().collect();
    let header = match section {
        Section::Table(name) => lines.iter().position(|l| l.trim() == format!("[{name}]")),
        Section::ArrayItem(name, i) => {
            lines.iter().enumerate().filter(|(_, l)| l.trim() == format!("[[{name}]]")).nth(i).map(|(n, _)| n)
        }
    };
    let Some(h) = header else {
        return 1;
    };
    for (n, l) in lines.iter().enumerate().skip(h + 1) {
        let t = l.trim_start();
        if t.starts_with('[') {
            break;
        }
        if let Some(rest) = t.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return n + 1;
            }
        }
    }
    h + 1
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let bad = |message: String| Error::Config { line: 0, message };
    let (path, raw) = spec.split_once('=').ok_or_else(|| bad(format!("override `{spec}` is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one item");
    let mut table = doc;
    for k in parents {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| bad(format!("override `{path}`: `{k}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
