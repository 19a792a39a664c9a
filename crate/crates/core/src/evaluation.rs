//! Monte Carlo evaluation of designs against an MPC baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    mode_acceleration, rollout, running_cost, sample_starts, step, terminal_cost, trajectory_cost, CellState,
    ControlMode, Controller, CostParams, SourceLayout, Trajectory, Workspace,
};
use crate::error::{Error, Result};
use crate::synthesis::{entropy, extract_fsm};

/// Receding-horizon controller: every call simulates each candidate held
/// constant over the horizon and returns the cheapest one.
#[derive(Debug, Clone)]
pub struct MpcController<'a> {
    candidates: Vec<ControlMode>,
    layout: &'a SourceLayout,
    params: &'a CostParams,
}

impl<'a> MpcController<'a> {
    pub fn new(candidates: Vec<ControlMode>, layout: &'a SourceLayout, params: &'a CostParams) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("MPC needs at least one candidate".into()));
        }
        candidates.iter().try_for_each(|c| layout.validate_mode(c))?;
        Ok(Self { candidates, layout, params })
    }

    pub fn candidates(&self) -> &[ControlMode] {
        &self.candidates
    }

    /// Left-rectangle running cost over the horizon plus the terminal cost
    /// at its end.
    pub fn horizon_cost(&self, s: &CellState, mode: &ControlMode) -> f64 {
        let mut x = *s;
        let mut cost = 0.0;
        for _ in 0..self.params.horizon_steps() {
            cost += running_cost(&x, mode_acceleration(&x, mode, self.layout), self.params) * self.params.time_step;
            x = step(&x, mode, self.layout, self.params);
        }
        cost + terminal_cost(&x, self.params)
    }
}

impl Controller for MpcController<'_> {
    fn control(&self, s: &CellState) -> ControlMode {
        let mut best = self.candidates[0];
        let mut best_cost = self.horizon_cost(s, &best);
        for c in &self.candidates[1..] {
            let cost = self.horizon_cost(s, c);
            if cost < best_cost {
                best = *c;
                best_cost = cost;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub nx: usize,
    pub ny: usize,
    pub workspace: Workspace,
}

impl BinSpec {
    pub fn new(nx: usize, ny: usize, workspace: Workspace) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter(format!("bin grid must be non-empty, got {nx}x{ny}")));
        }
        Ok(Self { nx, ny, workspace })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bin index of a position; positions outside the workspace land in the
    /// nearest edge bin.
    pub fn index(&self, p: [f64; 2]) -> usize {
        let ws = &self.workspace;
        let fx = ((p[0] - ws.x_min) / ws.width() * self.nx as f64).floor();
        let fy = ((p[1] - ws.y_min) / ws.height() * self.ny as f64).floor();
        let ix = if fx.is_nan() { 0 } else { (fx.max(0.0) as usize).min(self.nx - 1) };
        let iy = if fy.is_nan() { 0 } else { (fy.max(0.0) as usize).min(self.ny - 1) };
        iy * self.nx + ix
    }
}

/// Normalized position histogram, row-major with x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyDist {
    pub bins: BinSpec,
    pub mass: Vec<f64>,
}

impl OccupancyDist {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Histogram of every visited position across the trajectories, with
/// `smoothing` added to each bin before normalizing.
pub fn occupancy(trajs: &[Trajectory], bins: &BinSpec, smoothing: f64) -> Result<OccupancyDist> {
    if trajs.is_empty() {
        return Err(Error::InvalidParameter("occupancy needs at least one trajectory".into()));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::InvalidParameter(format!("smoothing must be non-negative, got {smoothing}")));
    }
    let mut counts = vec![0u64; bins.len()];
    for t in trajs {
        for s in &t.states {
            counts[bins.index(s.position())] += 1;
        }
    }
    let mut mass: Vec<f64> = counts.iter().map(|&c| c as f64 + smoothing).collect();
    let total: f64 = mass.iter().sum();
    for m in &mut mass {
        *m /= total;
    }
    Ok(OccupancyDist { bins: *bins, mass })
}

/// `sum P ln(P / Q)` over bins with `P > 0`.
pub fn kl_divergence(p: &OccupancyDist, q: &OccupancyDist) -> Result<f64> {
    if p.bins != q.bins || p.mass.len() != q.mass.len() {
        return Err(Error::BinMismatch(format!("{:?} vs {:?}", p.bins, q.bins)));
    }
    let mut kl = 0.0;
    for (&a, &b) in p.mass.iter().zip(&q.mass) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += a * (a / b).ln();
        }
    }
    // rounding can leave a tiny negative residue for identical inputs
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSettings {
    pub n_rollouts: usize,
    pub seed: u64,
    pub bins: BinSpec,
    pub smoothing: f64,
    pub goal_radius: f64,
    pub fsm_samples: usize,
    pub fsm_seed: u64,
}

impl EvalSettings {
    pub fn reference(layout: &SourceLayout) -> Self {
        Self {
            n_rollouts: 1000,
            seed: 2024,
            bins: BinSpec { nx: 25, ny: 25, workspace: *layout.workspace() },
            smoothing: 1e-9,
            goal_radius: 0.1,
            fsm_samples: 10_000,
            fsm_seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub label: String,
    pub entropy: f64,
    pub kl: f64,
    pub mean_final_distance: f64,
    /// Fraction of rollouts that came within the goal radius at some step.
    pub arrival_rate: f64,
    pub mean_cost: f64,
    pub n_rollouts: usize,
    pub seed: u64,
}

/// Rollouts of one controller from the shared start set.
#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub trajectories: Vec<Trajectory>,
}

impl MonteCarlo {
    pub fn run(
        controller: &dyn Controller,
        layout: &SourceLayout,
        params: &CostParams,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("Monte Carlo needs at least one rollout".into()));
        }
        let starts = sample_starts(n, layout.workspace(), seed);
        let trajectories =
            starts.par_iter().map(|s0| rollout(s0, controller, params, layout)).collect::<Result<Vec<_>>>()?;
        Ok(Self { trajectories })
    }

    /// `(start, end)` position pairs.
    pub fn endpoints(&self) -> Vec<([f64; 2], [f64; 2])> {
        self.trajectories.iter().map(|t| (t.initial().position(), t.terminal().position())).collect()
    }
}

/// Ideal-controller rollouts and their occupancy, computed once and shared
/// by every design compared against them.
#[derive(Debug, Clone)]
pub struct IdealBaseline {
    pub runs: MonteCarlo,
    pub occupancy: OccupancyDist,
}

impl IdealBaseline {
    pub fn compute(
        ideal: &dyn Controller,
        layout: &SourceLayout,
        params: &CostParams,
        settings: &EvalSettings,
    ) -> Result<Self> {
        let runs = MonteCarlo::run(ideal, layout, params, settings.n_rollouts, settings.seed)?;
        let occupancy = occupancy(&runs.trajectories, &settings.bins, settings.smoothing)?;
        Ok(Self { runs, occupancy })
    }
}

/// Everything produced when a design is evaluated.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: DesignReport,
    pub runs: MonteCarlo,
    pub occupancy: OccupancyDist,
}

/// Rolls out `controller` from the baseline's start set and compares its
/// occupancy with the baseline's.
pub fn evaluate_design(
    label: &str,
    controller: &dyn Controller,
    baseline: &IdealBaseline,
    layout: &SourceLayout,
    params: &CostParams,
    settings: &EvalSettings,
) -> Result<Evaluation> {
    let runs = MonteCarlo::run(controller, layout, params, settings.n_rollouts, settings.seed)?;
    let occ = occupancy(&runs.trajectories, &settings.bins, settings.smoothing)?;
    let kl = kl_divergence(&baseline.occupancy, &occ)?;
    let goal = params.goal();
    let n = runs.trajectories.len() as f64;
    let mean_final_distance = runs.trajectories.iter().map(|t| t.terminal().distance_to(goal)).sum::<f64>() / n;
    let arrived = runs
        .trajectories
        .iter()
        .filter(|t| t.states.iter().any(|s| s.distance_to(goal) <= settings.goal_radius))
        .count();
    let mut mean_cost = 0.0;
    for t in &runs.trajectories {
        mean_cost += trajectory_cost(t, params, layout)?;
    }
    let fsm = extract_fsm(controller, layout, params, settings.fsm_samples, settings.fsm_seed)?;
    let report = DesignReport {
        label: label.to_string(),
        entropy: entropy(&fsm)?,
        kl,
        mean_final_distance,
        arrival_rate: arrived as f64 / n,
        mean_cost: mean_cost / n,
        n_rollouts: settings.n_rollouts,
        seed: settings.seed,
    };
    Ok(Evaluation { report, runs, occupancy: occ })
}
