//! Independent oracles shared by the integration and acceptance tests. They
//! re-derive the dynamics and costs from scratch instead of calling the
//! library's integrator.
#![allow(dead_code)]

use synthcell::dynamics::{sample_starts, step, CellState, ControlMode, Controller, CostParams, SourceLayout};
use synthcell::projection::RolloutBudget;

/// Fine step used by the oracles.
pub const FINE_STEP: f64 = 1e-5;

fn accel(v: &[f64; 4], src: Option<[f64; 2]>, eps: f64) -> [f64; 2] {
    let Some(p) = src else { return [0.0, 0.0] };
    let (dx, dy) = (p[0] - v[0], p[1] - v[2]);
    let r = (dx * dx + dy * dy).sqrt().max(eps);
    let sgn = |d: f64| {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    [sgn(dx) / (r * r), sgn(dy) / (r * r)]
}

fn deriv(v: &[f64; 4], src: Option<[f64; 2]>, eps: f64) -> [f64; 4] {
    let [ax, ay] = accel(v, src, eps);
    [v[1], ax, v[3], ay]
}

/// One RK4 step of length `h` followed by the speed clamp.
pub fn rk4(v: [f64; 4], src: Option<[f64; 2]>, layout: &SourceLayout, h: f64) -> [f64; 4] {
    let eps = layout.epsilon();
    let add = |a: &[f64; 4], b: &[f64; 4], k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]];
    let k1 = deriv(&v, src, eps);
    let k2 = deriv(&add(&v, &k1, h / 2.0), src, eps);
    let k3 = deriv(&add(&v, &k2, h / 2.0), src, eps);
    let k4 = deriv(&add(&v, &k3, h), src, eps);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = v[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let speed = out[1].hypot(out[3]);
    if speed > layout.v_max() {
        out[1] *= layout.v_max() / speed;
        out[3] *= layout.v_max() / speed;
    }
    out
}

pub fn running(v: &[f64; 4], params: &CostParams) -> f64 {
    let d = params.desired;
    let e = [v[0] - d.x, v[1] - d.vx, v[2] - d.y, v[3] - d.vy];
    (0..4).map(|i| params.state_weight[i] * e[i] * e[i]).sum()
}

fn to_state(v: &[f64; 4]) -> CellState {
    CellState { x: v[0], vx: v[1], y: v[2], vy: v[3] }
}

/// Mode per control interval of the nominal closed-loop horizon from rest.
pub fn nominal_schedule(
    query: [f64; 2],
    policy: &dyn Controller,
    layout: &SourceLayout,
    params: &CostParams,
) -> Vec<ControlMode> {
    let per = (params.time_step / FINE_STEP).round() as usize;
    let mut v = [query[0], 0.0, query[1], 0.0];
    let mut modes = Vec::new();
    for _ in 0..params.horizon_steps() {
        let m = policy.control(&to_state(&v));
        let src = layout.attractor(&m);
        for _ in 0..per {
            v = rk4(v, src, layout, FINE_STEP);
        }
        modes.push(m);
    }
    modes
}

/// Horizon cost (trapezoid on the fine grid, no terminal term) from rest at
/// `query`, with `insert` active on `[0, lambda)` and the schedule after.
pub fn horizon_cost_with_insertion(
    query: [f64; 2],
    schedule: &[ControlMode],
    insert: Option<(ControlMode, f64)>,
    layout: &SourceLayout,
    params: &CostParams,
) -> f64 {
    let per = (params.time_step / FINE_STEP).round() as usize;
    let n_ins = insert.map_or(0, |(_, lam)| (lam / FINE_STEP).round() as usize);
    let mut v = [query[0], 0.0, query[1], 0.0];
    let mut total = 0.5 * running(&v, params);
    let n = schedule.len() * per;
    for k in 0..n {
        let mode = match insert {
            Some((m, _)) if k < n_ins => m,
            _ => schedule[k / per],
        };
        v = rk4(v, layout.attractor(&mode), layout, FINE_STEP);
        let w = if k + 1 == n { 0.5 } else { 1.0 };
        total += w * running(&v, params);
    }
    total * FINE_STEP
}

/// `(J(lambda) - J(0)) / lambda` for inserting `mode` at rest at `query`.
pub fn insertion_difference(
    query: [f64; 2],
    mode: ControlMode,
    lambda: f64,
    policy: &dyn Controller,
    layout: &SourceLayout,
    params: &CostParams,
) -> f64 {
    let schedule = nominal_schedule(query, policy, layout, params);
    let base = horizon_cost_with_insertion(query, &schedule, None, layout, params);
    let pert = horizon_cost_with_insertion(query, &schedule, Some((mode, lambda)), layout, params);
    (pert - base) / lambda
}

/// Nearest-source membership, independent of the comparator code.
pub fn closer_to_a(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let da = (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2);
    let db = (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2);
    da <= db
}

/// Exhaustive (region, mode) arrival-cost matrix for the split along the
/// 1/2 bisector, computed without the projection code.
pub fn brute_force_two_regions(
    reference: &dyn Controller,
    modes: &[ControlMode],
    layout: &SourceLayout,
    params: &CostParams,
    budget: &RolloutBudget,
    seed: u64,
) -> [Vec<f64>; 2] {
    let (a, b) = (layout.source(1).unwrap(), layout.source(2).unwrap());
    let side = |p: [f64; 2]| if closer_to_a(layout.workspace().clamp(p), a, b) { 0 } else { 1 };
    let mut sums = [vec![0.0; modes.len()], vec![0.0; modes.len()]];
    let mut visits = [0usize; 2];
    for s0 in sample_starts(budget.n_rollouts, layout.workspace(), seed) {
        let r = side(s0.position());
        visits[r] += 1;
        for (k, m) in modes.iter().enumerate() {
            let mut s = s0;
            let mut i = 0;
            let cost = loop {
                if s.distance_to(params.goal()) <= budget.goal_radius {
                    break i as f64 * params.time_step;
                }
                if i >= budget.i_max {
                    break budget.j_penalty;
                }
                let u = if side(s.position()) == r { *m } else { reference.control(&s) };
                s = step(&s, &u, layout, params);
                i += 1;
            };
            sums[r][k] += cost;
        }
    }
    [0, 1].map(|r| sums[r].iter().map(|s| s / visits[r] as f64).collect())
}

pub fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, i| if v[i] < v[best] { i } else { best })
}
