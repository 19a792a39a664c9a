//! Adjoint integration and mode insertion gradients.
//!
//! For a query position the cell is placed at rest, the current policy is
//! simulated over the prediction horizon, and the costate is integrated
//! backward from zero at the horizon end. The insertion gradient of mode `i`
//! is `rho(0) . (f_i(s) - f_current(s))`: the first-order change in horizon
//! cost per unit time of briefly switching to mode `i` at the query state.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::dynamics::{
    integrate, mode_acceleration, mode_dynamics, running_cost, sign0, CellState, ControlMode, Controller, CostParams,
    SourceLayout, Workspace,
};
use crate::error::{Error, Result};
use crate::policy::PolicyGrid;

/// Analytic state Jacobian of the mode dynamics. The sign factors are
/// treated as locally constant and the Jacobian vanishes inside the
/// exclusion radius, where the acceleration is clamped.
pub fn dynamics_jacobian(s: &CellState, mode: &ControlMode, layout: &SourceLayout) -> Matrix4<f64> {
    let mut a = Matrix4::zeros();
    a[(0, 1)] = 1.0;
    a[(2, 3)] = 1.0;
    if let Some(src) = layout.attractor(mode) {
        let dx = src[0] - s.x;
        let dy = src[1] - s.y;
        let r = dx.hypot(dy);
        if r > layout.epsilon() {
            let r4 = (r * r) * (r * r);
            let (gx, gy) = (2.0 * dx / r4, 2.0 * dy / r4);
            let (sx, sy) = (sign0(dx), sign0(dy));
            a[(1, 0)] = sx * gx;
            a[(1, 2)] = sx * gy;
            a[(3, 0)] = sy * gx;
            a[(3, 2)] = sy * gy;
        }
    }
    a
}

/// Prediction of the current policy over the horizon, sampled at every
/// integration sub-step. `modes[i]` is active on `[i h, (i + 1) h]`.
#[derive(Debug, Clone)]
pub struct HorizonPrediction {
    pub substep: f64,
    pub states: Vec<CellState>,
    pub modes: Vec<ControlMode>,
}

impl HorizonPrediction {
    pub fn duration(&self) -> f64 {
        self.substep * self.modes.len() as f64
    }
}

/// Simulates `controller` from `s0` over the horizon `T`, re-querying it
/// every control interval.
pub fn predict_horizon(
    s0: &CellState,
    controller: &dyn Controller,
    params: &CostParams,
    layout: &SourceLayout,
) -> HorizonPrediction {
    let h = params.substep();
    let n = params.horizon_steps() * params.substeps;
    let mut states = Vec::with_capacity(n + 1);
    let mut modes = Vec::with_capacity(n);
    let mut s = *s0;
    states.push(s);
    for _ in 0..params.horizon_steps() {
        let u = controller.control(&s);
        for _ in 0..params.substeps {
            s = integrate(&s, &u, layout, h, h);
            states.push(s);
            modes.push(u);
        }
    }
    HorizonPrediction { substep: h, states, modes }
}

/// Trapezoidal quadrature of the running cost over a prediction.
pub fn horizon_cost(pred: &HorizonPrediction, params: &CostParams, layout: &SourceLayout) -> f64 {
    let n = pred.modes.len();
    let cost_at = |i: usize| {
        let mode = &pred.modes[i.min(n - 1)];
        let s = &pred.states[i];
        running_cost(s, mode_acceleration(s, mode, layout), params)
    };
    let mut total = 0.5 * (cost_at(0) + cost_at(n));
    for i in 1..n {
        total += cost_at(i);
    }
    total * pred.substep
}

/// Costate samples over the horizon; `rho[i]` belongs to `times[i]`.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub times: Vec<f64>,
    pub rho: Vec<Vector4<f64>>,
}

impl AdjointState {
    pub fn initial(&self) -> Vector4<f64> {
        self.rho[0]
    }

    pub fn terminal(&self) -> Vector4<f64> {
        *self.rho.last().expect("adjoint is never empty")
    }
}

/// Gradient of the running cost with respect to the state.
fn running_cost_gradient(
    s: &CellState,
    mode: &ControlMode,
    params: &CostParams,
    layout: &SourceLayout,
) -> Vector4<f64> {
    let e = s.to_vector() - params.desired.to_vector();
    let mut g = Vector4::from_fn(|i, _| 2.0 * params.state_weight[i] * e[i]);
    if params.control_weight != 0.0 {
        let [ax, ay] = mode_acceleration(s, mode, layout);
        let jac = dynamics_jacobian(s, mode, layout);
        for i in 0..4 {
            g[i] += 2.0 * params.control_weight * (jac[(1, i)] * ax + jac[(3, i)] * ay);
        }
    }
    g
}

/// Integrates `rho' = -A^T rho - dl/dx` backward from `rho(T) = 0`, with the
/// state linearly interpolated between prediction samples.
pub fn adjoint_solve(pred: &HorizonPrediction, params: &CostParams, layout: &SourceLayout) -> Result<AdjointState> {
    let n = pred.modes.len();
    if n == 0 || pred.states.len() != n + 1 {
        return Err(Error::Horizon(format!("{} states for {} intervals", pred.states.len(), n)));
    }
    if (pred.duration() - params.horizon).abs() > 1e-9 * params.horizon.max(1.0) {
        return Err(Error::Horizon(format!(
            "prediction spans {} s but the horizon is {} s",
            pred.duration(),
            params.horizon
        )));
    }
    let h = pred.substep;
    let mut rho = vec![Vector4::zeros(); n + 1];
    let lerp =
        |a: &CellState, b: &CellState, w: f64| CellState::from_vector(&(a.to_vector() * (1.0 - w) + b.to_vector() * w));
    for i in (0..n).rev() {
        let mode = &pred.modes[i];
        let (s0, s1) = (&pred.states[i], &pred.states[i + 1]);
        // backward time tau: tau = 0 at t_{i+1}; d rho / d tau = A^T rho + dl/dx
        let rhs = |w: f64, r: &Vector4<f64>| {
            let s = lerp(s0, s1, w);
            dynamics_jacobian(&s, mode, layout).transpose() * r + running_cost_gradient(&s, mode, params, layout)
        };
        let r = rho[i + 1];
        let k1 = rhs(1.0, &r);
        let k2 = rhs(0.5, &(r + k1 * (h / 2.0)));
        let k3 = rhs(0.5, &(r + k2 * (h / 2.0)));
        let k4 = rhs(0.0, &(r + k3 * h));
        rho[i] = r + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let times = (0..=n).map(|i| i as f64 * h).collect();
    Ok(AdjointState { times, rho })
}

/// Insertion gradients at `query` for an explicit candidate list.
pub fn mig_for_candidates(
    query: [f64; 2],
    policy: &dyn Controller,
    candidates: &[ControlMode],
    layout: &SourceLayout,
    params: &CostParams,
) -> Vec<f64> {
    let [x, y] = layout.workspace().clamp(query);
    let s = CellState::at_rest(x, y);
    let current = policy.control(&s);
    let pred = predict_horizon(&s, policy, params, layout);
    let rho = adjoint_solve(&pred, params, layout).expect("prediction spans the horizon by construction").initial();
    let f_cur = mode_dynamics(&s, &current, layout);
    candidates
        .iter()
        .map(|m| if *m == current { 0.0 } else { rho.dot(&(mode_dynamics(&s, m, layout) - f_cur)) })
        .collect()
}

/// Insertion gradient vector over all discrete modes at `query`.
pub fn mig(query: [f64; 2], policy: &dyn Controller, layout: &SourceLayout, params: &CostParams) -> Vec<f64> {
    mig_for_candidates(query, policy, &layout.discrete_modes(), layout, params)
}

/// Insertion gradients at every cell center of a policy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MigField {
    pub nx: usize,
    pub ny: usize,
    pub workspace: Workspace,
    pub modes: Vec<ControlMode>,
    /// Row-major like [`PolicyGrid`], one gradient vector per cell.
    pub values: Vec<Vec<f64>>,
}

impl MigField {
    pub fn at(&self, ix: usize, iy: usize) -> &[f64] {
        &self.values[iy * self.nx + ix]
    }
}

pub fn mig_field(policy: &PolicyGrid, layout: &SourceLayout, params: &CostParams) -> MigField {
    let modes = layout.discrete_modes();
    let values = (0..policy.len())
        .into_par_iter()
        .map(|i| mig_for_candidates(policy.center_of(i), policy, &modes, layout, params))
        .collect();
    MigField { nx: policy.nx(), ny: policy.ny(), workspace: *policy.workspace(), modes, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_control_jacobian_is_a_selector() {
        let j = dynamics_jacobian(&CellState::new(0.3, 0.2, 4.0, -0.1), &ControlMode::ZERO, &SourceLayout::reference());
        let mut expected = Matrix4::zeros();
        expected[(0, 1)] = 1.0;
        expected[(2, 3)] = 1.0;
        assert_eq!(j, expected);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let layout = SourceLayout::reference();
        let s = CellState::at_rest(2.0, 5.0 + 1e-3);
        let mode = ControlMode::Discrete(1);
        let j = dynamics_jacobian(&s, &mode, &layout);
        let h = 1e-6;
        for col in 0..4 {
            let mut p = s.to_vector();
            let mut m = s.to_vector();
            p[col] += h;
            m[col] -= h;
            let fp = mode_dynamics(&CellState::from_vector(&p), &mode, &layout);
            let fm = mode_dynamics(&CellState::from_vector(&m), &mode, &layout);
            let fd = (fp - fm) / (2.0 * h);
            for row in 0..4 {
                assert!((fd[row] - j[(row, col)]).abs() < 1e-5, "({row},{col}) {} vs {}", fd[row], j[(row, col)]);
            }
        }
        // accelerations do not depend on velocity
        for row in [1, 3] {
            assert_eq!(j[(row, 1)], 0.0);
            assert_eq!(j[(row, 3)], 0.0);
        }
    }

    #[test]
    fn adjoint_vanishes_at_goal_and_at_horizon_end() {
        let layout = SourceLayout::reference();
        let params = CostParams::reference();
        let zero = |_: &CellState| ControlMode::ZERO;
        let pred = predict_horizon(&params.desired, &zero, &params, &layout);
        let adj = adjoint_solve(&pred, &params, &layout).unwrap();
        assert!(adj.rho.iter().all(|r| r.norm() == 0.0));

        let pred = predict_horizon(&CellState::at_rest(0.5, 0.5), &zero, &params, &layout);
        let adj = adjoint_solve(&pred, &params, &layout).unwrap();
        assert_eq!(adj.terminal(), Vector4::zeros());
        assert!(adj.initial().norm() > 0.0);
    }

    #[test]
    fn mismatched_horizon_is_rejected() {
        let layout = SourceLayout::reference();
        let params = CostParams::reference();
        let mut pred = predict_horizon(&params.desired, &|_: &CellState| ControlMode::ZERO, &params, &layout);
        pred.states.pop();
        pred.modes.pop();
        assert!(matches!(adjoint_solve(&pred, &params, &layout), Err(Error::Horizon(_))));
    }

    #[test]
    fn adjoint_scales_linearly_with_state_weight() {
        let layout = SourceLayout::reference();
        let params = CostParams::reference();
        let mut scaled = params.clone();
        for w in scaled.state_weight.iter_mut() {
            *w *= 3.0;
        }
        let policy = |_: &CellState| ControlMode::Discrete(4);
        let s = CellState::at_rest(0.7, 2.2);
        let r1 = adjoint_solve(&predict_horizon(&s, &policy, &params, &layout), &params, &layout).unwrap();
        let r3 = adjoint_solve(&predict_horizon(&s, &policy, &scaled, &layout), &scaled, &layout).unwrap();
        assert!((r3.initial() - r1.initial() * 3.0).norm() < 1e-12 * r3.initial().norm().max(1.0));
    }

    #[test]
    fn gradient_is_zero_for_current_mode_and_at_goal() {
        let layout = SourceLayout::reference();
        let params = CostParams::reference();
        let zero = |_: &CellState| ControlMode::ZERO;
        let d = mig(params.goal(), &zero, &layout, &params);
        assert!(d.iter().all(|v| *v == 0.0));

        let three = |_: &CellState| ControlMode::Discrete(3);
        let d = mig([0.4, 5.5], &three, &layout, &params);
        assert_eq!(d[3], 0.0);
        assert!(d.iter().enumerate().any(|(i, v)| i != 3 && *v != 0.0));
    }

    #[test]
    fn field_is_deterministic() {
        let layout = SourceLayout::reference();
        let params = CostParams::reference();
        let policy = PolicyGrid::uniform(8, 12, *layout.workspace(), ControlMode::ZERO);
        let a = mig_field(&policy, &layout, &params);
        let b = mig_field(&policy, &layout, &params);
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 96);
        assert!(a.values.iter().all(|d| d.len() == 7 && d[0] == 0.0));
    }
}
