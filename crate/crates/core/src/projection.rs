//! Rollout-based projection of policies onto sensor regions and actuator
//! subsets, plus per-region source placement for the sensing-first flow.
//!
//! A projection asks, for every sensor region `r` and candidate mode `s`:
//! starting in `r`, how long does the cell take to reach the goal if it uses
//! `s` while inside `r` and the reference policy everywhere else? Each region
//! gets the candidate with the lowest mean arrival time.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_starts, step, CellState, ControlMode, Controller, CostParams, SourceLayout};
use crate::error::{Error, Result};
use crate::policy::PolicyGrid;
use crate::sensors::{enumerate_regions, region_signature, Region, RegionId, SensorSet};

/// Probe density used to realize sensor regions.
pub const REGION_PROBE_RESOLUTION: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBudget {
    /// Rollout count (total starts for projection, starts per region for
    /// source placement).
    pub n_rollouts: usize,
    /// Step cap per rollout.
    pub i_max: usize,
    pub goal_radius: f64,
    /// Cost recorded when a rollout hits the cap.
    pub j_penalty: f64,
}

impl RolloutBudget {
    pub fn reference(params: &CostParams) -> Self {
        let i_max = 2500;
        Self { n_rollouts: 1000, i_max, goal_radius: 0.1, j_penalty: 2.0 * i_max as f64 * params.time_step }
    }

    pub fn validate(&self, params: &CostParams) -> Result<()> {
        if self.n_rollouts == 0 || self.i_max == 0 || !(self.goal_radius > 0.0) || !(self.j_penalty > 0.0) {
            return Err(Error::InvalidParameter(format!("rollout budget entries must be positive: {self:?}")));
        }
        if self.i_max < params.steps() {
            return Err(Error::InvalidParameter(format!(
                "i_max = {} is shorter than one full rollout ({} steps)",
                self.i_max,
                params.steps()
            )));
        }
        Ok(())
    }
}

/// Region-to-mode map over a sensor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPolicy {
    pub sensors: SensorSet,
    pub regions: Vec<RegionAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAssignment {
    pub signature: RegionId,
    pub mode: ControlMode,
    /// True when no rollout started in the region and the mode was
    /// inherited from the reference policy.
    #[serde(default)]
    pub fallback: bool,
}

impl RegionPolicy {
    pub fn new(
        sensors: SensorSet,
        assignments: BTreeMap<RegionId, ControlMode>,
        fallback: &BTreeSet<RegionId>,
    ) -> Self {
        let regions = assignments
            .into_iter()
            .map(|(signature, mode)| RegionAssignment { signature, mode, fallback: fallback.contains(&signature) })
            .collect();
        Self { sensors, regions }
    }

    pub fn mode_for(&self, id: &RegionId) -> Option<ControlMode> {
        self.regions.binary_search_by(|r| r.signature.cmp(id)).ok().map(|i| self.regions[i].mode)
    }

    pub fn modes(&self) -> BTreeMap<RegionId, ControlMode> {
        self.regions.iter().map(|r| (r.signature, r.mode)).collect()
    }

    pub fn controller<'a>(&'a self, layout: &'a SourceLayout) -> RegionController<'a> {
        RegionController { policy: self, layout }
    }

    pub fn fallback_count(&self) -> usize {
        self.regions.iter().filter(|r| r.fallback).count()
    }
}

/// Executes a [`RegionPolicy`]: sense the region at the (clamped) position,
/// apply its mode. Unassigned signatures get zero control.
#[derive(Debug, Clone, Copy)]
pub struct RegionController<'a> {
    policy: &'a RegionPolicy,
    layout: &'a SourceLayout,
}

impl Controller for RegionController<'_> {
    fn control(&self, s: &CellState) -> ControlMode {
        let p = self.layout.workspace().clamp(s.position());
        let id = region_signature(p, &self.policy.sensors, self.layout);
        self.policy.mode_for(&id).unwrap_or(ControlMode::ZERO)
    }
}

/// Arrival-time rollout. Returns the cost (steps times `t_s`, or the
/// penalty on the step cap), or `None` once the cost is known to exceed
/// `limit`.
fn arrival_rollout(
    s0: &CellState,
    control: impl Fn(&CellState, [f64; 2]) -> ControlMode,
    params: &CostParams,
    layout: &SourceLayout,
    budget: &RolloutBudget,
    limit: f64,
) -> Option<f64> {
    let goal = params.goal();
    let ws = layout.workspace();
    let mut s = *s0;
    let mut i = 0usize;
    loop {
        if s.distance_to(goal) <= budget.goal_radius {
            return Some(i as f64 * params.time_step);
        }
        if i >= budget.i_max {
            return (budget.j_penalty <= limit).then_some(budget.j_penalty);
        }
        if i as f64 * params.time_step > limit {
            return None;
        }
        let u = control(&s, ws.clamp(s.position()));
        s = step(&s, &u, layout, params);
        i += 1;
    }
}

/// Arrival cost of one start when `inside` is applied within `region` and
/// `outside` elsewhere.
pub fn region_rollout_cost(
    s0: &CellState,
    region: &RegionId,
    inside: &ControlMode,
    outside: &dyn Controller,
    sensors: &SensorSet,
    params: &CostParams,
    layout: &SourceLayout,
    budget: &RolloutBudget,
) -> f64 {
    arrival_rollout(
        s0,
        |s, p| if region_signature(p, sensors, layout) == *region { *inside } else { outside.control(s) },
        params,
        layout,
        budget,
        f64::INFINITY,
    )
    .expect("unbounded rollout always yields a cost")
}

/// Full outcome of a projection, including the per-(region, candidate)
/// mean costs the assignment was chosen from.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub policy: RegionPolicy,
    pub candidates: Vec<ControlMode>,
    pub regions: Vec<RegionId>,
    /// `mean_cost[r][c]`; `None` for regions no rollout started in.
    pub mean_cost: Vec<Vec<Option<f64>>>,
    pub visits: Vec<usize>,
}

impl ProjectionResult {
    pub fn assigned(&self, region: &RegionId) -> Option<ControlMode> {
        self.policy.mode_for(region)
    }
}

fn nearest_candidate(mode: ControlMode, candidates: &[ControlMode], layout: &SourceLayout) -> ControlMode {
    if candidates.contains(&mode) {
        return mode;
    }
    let Some(target) = layout.attractor(&mode) else {
        return ControlMode::ZERO;
    };
    candidates
        .iter()
        .filter_map(|c| layout.attractor(c).map(|p| (c, (p[0] - target[0]).hypot(p[1] - target[1]))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(c, _)| *c)
        .unwrap_or(ControlMode::ZERO)
}

fn majority_mode(region: &Region, reference: &dyn Controller) -> ControlMode {
    let mut tally: Vec<(ControlMode, usize)> = Vec::new();
    for p in &region.members {
        let m = reference.control(&CellState::at_rest(p[0], p[1]));
        match tally.iter_mut().find(|(k, _)| *k == m) {
            Some((_, n)) => *n += 1,
            None => tally.push((m, 1)),
        }
    }
    // first-seen wins ties
    let mut best = tally[0];
    for t in &tally[1..] {
        if t.1 > best.1 {
            best = *t;
        }
    }
    best.0
}

/// Rollout projection over explicit regions and candidates.
pub fn project_with_regions(
    reference: &dyn Controller,
    sensors: &SensorSet,
    regions: &[Region],
    candidates: &[ControlMode],
    layout: &SourceLayout,
    params: &CostParams,
    budget: &RolloutBudget,
    seed: u64,
) -> Result<ProjectionResult> {
    if regions.is_empty() {
        return Err(Error::EmptyRegions);
    }
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("projection needs at least one candidate mode".into()));
    }
    candidates.iter().try_for_each(|c| layout.validate_mode(c))?;
    budget.validate(params)?;

    let index: BTreeMap<RegionId, usize> = regions.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    let starts = sample_starts(budget.n_rollouts, layout.workspace(), seed);
    let per_start: Vec<Option<(usize, Vec<f64>)>> = starts
        .par_iter()
        .map(|s0| {
            let id = region_signature(layout.workspace().clamp(s0.position()), sensors, layout);
            let r = *index.get(&id)?;
            let costs = candidates
                .iter()
                .map(|c| region_rollout_cost(s0, &id, c, reference, sensors, params, layout, budget))
                .collect();
            Some((r, costs))
        })
        .collect();

    let mut sums = vec![vec![0.0; candidates.len()]; regions.len()];
    let mut visits = vec![0usize; regions.len()];
    for (r, costs) in per_start.into_iter().flatten() {
        visits[r] += 1;
        for (acc, c) in sums[r].iter_mut().zip(costs) {
            *acc += c;
        }
    }

    let mut assignments = BTreeMap::new();
    let mut fallback = BTreeSet::new();
    let mut mean_cost = Vec::with_capacity(regions.len());
    for (r, region) in regions.iter().enumerate() {
        if visits[r] == 0 {
            let m = nearest_candidate(majority_mode(region, reference), candidates, layout);
            assignments.insert(region.id, m);
            fallback.insert(region.id);
            mean_cost.push(vec![None; candidates.len()]);
            continue;
        }
        let means: Vec<f64> = sums[r].iter().map(|s| s / visits[r] as f64).collect();
        let mut best = 0;
        for (i, m) in means.iter().enumerate() {
            if *m < means[best] {
                best = i;
            }
        }
        assignments.insert(region.id, candidates[best]);
        mean_cost.push(means.into_iter().map(Some).collect());
    }
    Ok(ProjectionResult {
        policy: RegionPolicy::new(sensors.clone(), assignments, &fallback),
        candidates: candidates.to_vec(),
        regions: regions.iter().map(|r| r.id).collect(),
        mean_cost,
        visits,
    })
}

/// Projects a perfect-sensing policy onto the regions of a sensor set, with
/// every discrete mode as a candidate.
pub fn project_to_sensors(
    policy: &PolicyGrid,
    sensors: &SensorSet,
    layout: &SourceLayout,
    params: &CostParams,
    budget: &RolloutBudget,
    seed: u64,
) -> Result<ProjectionResult> {
    let regions = enumerate_regions(sensors, layout, REGION_PROBE_RESOLUTION)?;
    project_with_regions(policy, sensors, &regions, &layout.discrete_modes(), layout, params, budget, seed)
}

/// Projects a region policy onto a subset of the discrete sources; zero
/// control is always a candidate.
pub fn project_to_actuators(
    policy: &RegionPolicy,
    subset: &[usize],
    layout: &SourceLayout,
    params: &CostParams,
    budget: &RolloutBudget,
    seed: u64,
) -> Result<ProjectionResult> {
    if subset.is_empty() {
        return Err(Error::InvalidParameter("actuator subset is empty".into()));
    }
    let mut modes: BTreeSet<usize> = subset.iter().copied().collect();
    modes.insert(0);
    let candidates: Vec<ControlMode> = modes.into_iter().map(ControlMode::Discrete).collect();
    let regions = enumerate_regions(&policy.sensors, layout, REGION_PROBE_RESOLUTION)?;
    let reference = policy.controller(layout);
    project_with_regions(&reference, &policy.sensors, &regions, &candidates, layout, params, budget, seed)
}

/// Zero control followed by sources at the centers of an `nx` x `ny` grid.
pub fn source_grid(layout: &SourceLayout, nx: usize, ny: usize) -> Vec<ControlMode> {
    let ws = layout.workspace();
    let mut out = vec![ControlMode::ZERO];
    for iy in 0..ny {
        for ix in 0..nx {
            out.push(ControlMode::Continuous {
                x: ws.x_min + (ix as f64 + 0.5) * ws.width() / nx as f64,
                y: ws.y_min + (iy as f64 + 0.5) * ws.height() / ny as f64,
            });
        }
    }
    out
}

struct AssignmentController<'a> {
    sensors: &'a SensorSet,
    index: &'a BTreeMap<RegionId, usize>,
    assignment: &'a [ControlMode],
    layout: &'a SourceLayout,
}

impl Controller for AssignmentController<'_> {
    fn control(&self, s: &CellState) -> ControlMode {
        let p = self.layout.workspace().clamp(s.position());
        let id = region_signature(p, self.sensors, self.layout);
        self.index.get(&id).map_or(ControlMode::ZERO, |&i| self.assignment[i])
    }
}

/// Sensing-first synthesis: for every region pick the candidate source that
/// minimizes the mean arrival time of starts inside the region, with the
/// current assignment applied elsewhere. The assignment starts at zero
/// control and is improved by `passes` sweeps; each sweep evaluates all
/// regions against the previous sweep's assignment.
pub fn best_source_per_region(
    sensors: &SensorSet,
    candidates: &[ControlMode],
    layout: &SourceLayout,
    params: &CostParams,
    budget: &RolloutBudget,
    seed: u64,
    passes: usize,
) -> Result<RegionPolicy> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("candidate grid is empty".into()));
    }
    candidates.iter().try_for_each(|c| layout.validate_mode(c))?;
    budget.validate(params)?;
    let regions = enumerate_regions(sensors, layout, REGION_PROBE_RESOLUTION)?;
    let index: BTreeMap<RegionId, usize> = regions.iter().enumerate().map(|(i, r)| (r.id, i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<CellState>> = regions
        .iter()
        .map(|r| {
            (0..budget.n_rollouts)
                .map(|_| {
                    let p = r.members[rng.random_range(0..r.members.len())];
                    CellState::at_rest(p[0], p[1])
                })
                .collect()
        })
        .collect();

    let first = candidates.iter().position(|c| c.is_zero()).unwrap_or(0);
    let mut assignment = vec![first; regions.len()];
    for _ in 0..passes.max(1) {
        let modes: Vec<ControlMode> = assignment.iter().map(|&i| candidates[i]).collect();
        let outside = AssignmentController { sensors, index: &index, assignment: &modes, layout };
        let next: Vec<usize> = regions
            .par_iter()
            .enumerate()
            .map(|(r, region)| {
                let total = |c: usize, bound: f64| -> Option<f64> {
                    let mut sum = 0.0;
                    for s0 in &starts[r] {
                        let cost = arrival_rollout(
                            s0,
                            |s, p| {
                                if region_signature(p, sensors, layout) == region.id {
                                    candidates[c]
                                } else {
                                    outside.control(s)
                                }
                            },
                            params,
                            layout,
                            budget,
                            bound - sum,
                        )?;
                        sum += cost;
                        if sum > bound {
                            return None;
                        }
                    }
                    Some(sum)
                };
                // the incumbent gives the first bound; ties go to the lower index
                let mut best = assignment[r];
                let mut best_total = total(best, f64::INFINITY).expect("unbounded evaluation");
                for c in 0..candidates.len() {
                    if c == assignment[r] {
                        continue;
                    }
                    if let Some(t) = total(c, best_total) {
                        if t < best_total || (t == best_total && c < best) {
                            best = c;
                            best_total = t;
                        }
                    }
                }
                best
            })
            .collect();
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
    }

    let assignments = regions.iter().zip(&assignment).map(|(r, &c)| (r.id, candidates[c])).collect();
    Ok(RegionPolicy::new(sensors.clone(), assignments, &BTreeSet::new()))
}
