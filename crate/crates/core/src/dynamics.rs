//! Switched-mode point-mass dynamics.
//!
//! The cell is a planar point mass with state `(x, vx, y, vy)`. In every
//! control mode other than zero control it is attracted toward one chemical
//! source; each axis receives an acceleration of `sign(delta) / r^2`, where
//! `r` is the distance to the source clamped below by the exclusion radius.
//! Speed is bounded by rescaling the velocity vector after every sub-step.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar state of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
}

impl CellState {
    pub const fn new(x: f64, vx: f64, y: f64, vy: f64) -> Self {
        Self { x, vx, y, vy }
    }

    pub const fn at_rest(x: f64, y: f64) -> Self {
        Self::new(x, 0.0, y, 0.0)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (self.x - p[0]).hypot(self.y - p[1])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.vx.is_finite() && self.y.is_finite() && self.vy.is_finite()
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.vx, self.y, self.vy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Axis-aligned rectangle the policies are defined over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { x_min: 0.0, x_max: 4.0, y_min: 0.0, y_max: 6.0 }
    }
}

impl Workspace {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.x_min, self.x_max), p[1].clamp(self.y_min, self.y_max)]
    }

    /// Uniform sample of a point inside the rectangle.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        [self.x_min + rng.random::<f64>() * self.width(), self.y_min + rng.random::<f64>() * self.height()]
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::InvalidParameter(format!("degenerate workspace {self:?}")));
        }
        Ok(())
    }
}

/// Chemical sources plus the physical limits of the bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceLayout {
    sources: Vec<[f64; 2]>,
    epsilon: f64,
    v_max: f64,
    workspace: Workspace,
}

impl SourceLayout {
    pub fn new(sources: Vec<[f64; 2]>, epsilon: f64, v_max: f64, workspace: Workspace) -> Result<Self> {
        workspace.validate()?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("v_max must be positive, got {v_max}")));
        }
        if let Some(p) = sources.iter().find(|p| !workspace.contains(**p)) {
            return Err(Error::InvalidParameter(format!("source {p:?} lies outside the workspace")));
        }
        Ok(Self { sources, epsilon, v_max, workspace })
    }

    /// Six sources on a 2x3 lattice inside the default 4x6 workspace.
    pub fn reference() -> Self {
        let sources = vec![[1.0, 5.0], [3.0, 5.0], [1.0, 3.0], [3.0, 3.0], [1.0, 1.0], [3.0, 1.0]];
        Self::new(sources, 0.001, 0.4, Workspace::default()).expect("reference layout is valid")
    }

    pub fn sources(&self) -> &[[f64; 2]] {
        &self.sources
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    /// Number of discrete modes, zero control included.
    pub fn mode_count(&self) -> usize {
        self.sources.len() + 1
    }

    /// Position of 1-based source `n`.
    pub fn source(&self, n: usize) -> Option<[f64; 2]> {
        n.checked_sub(1).and_then(|i| self.sources.get(i).copied())
    }

    /// All discrete modes, `0..mode_count()`.
    pub fn discrete_modes(&self) -> Vec<ControlMode> {
        (0..self.mode_count()).map(ControlMode::Discrete).collect()
    }

    pub fn validate_mode(&self, mode: &ControlMode) -> Result<()> {
        let ok = match *mode {
            ControlMode::Discrete(i) => i < self.mode_count(),
            ControlMode::Continuous { x, y } => self.workspace.contains([x, y]),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMode { mode: mode.to_string(), mode_count: self.mode_count() })
        }
    }

    /// Attracting point of a mode, `None` for zero control.
    pub fn attractor(&self, mode: &ControlMode) -> Option<[f64; 2]> {
        match *mode {
            ControlMode::Discrete(0) => None,
            ControlMode::Discrete(n) => self.source(n),
            ControlMode::Continuous { x, y } => Some([x, y]),
        }
    }
}

/// Discrete mode index (0 is zero control, `n` attracts to source `n`) or a
/// freely placed source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Discrete(usize),
    Continuous { x: f64, y: f64 },
}

impl ControlMode {
    pub const ZERO: ControlMode = ControlMode::Discrete(0);

    pub fn is_zero(&self) -> bool {
        matches!(self, ControlMode::Discrete(0))
    }

    pub fn discrete_index(&self) -> Option<usize> {
        match *self {
            ControlMode::Discrete(i) => Some(i),
            ControlMode::Continuous { .. } => None,
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlMode::Discrete(i) => write!(f, "{i}"),
            ControlMode::Continuous { x, y } => write!(f, "@{x};{y}"),
        }
    }
}

impl FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix('@') {
            let (x, y) = rest.split_once(';').ok_or_else(|| format!("bad continuous mode `{s}`"))?;
            let x = x.parse::<f64>().map_err(|e| format!("bad x in `{s}`: {e}"))?;
            let y = y.parse::<f64>().map_err(|e| format!("bad y in `{s}`: {e}"))?;
            Ok(ControlMode::Continuous { x, y })
        } else {
            s.parse::<usize>().map(ControlMode::Discrete).map_err(|e| format!("bad mode `{s}`: {e}"))
        }
    }
}

/// Quadratic tracking cost and simulation timing.
///
/// Weight vectors are diagonals in state order `(x, vx, y, vy)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub state_weight: [f64; 4],
    pub control_weight: f64,
    pub terminal_weight: [f64; 4],
    pub desired: CellState,
    pub final_time: f64,
    pub horizon: f64,
    pub time_step: f64,
    /// Integration sub-steps per control interval.
    pub substeps: usize,
}

impl Default for CostParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl CostParams {
    pub fn reference() -> Self {
        use std::f64::consts::PI;
        let w = [10.0, 0.001, 10.0, 0.001];
        Self {
            state_weight: w,
            control_weight: 0.0,
            terminal_weight: w,
            desired: CellState::at_rest(2.0 - PI / 20.0, 4.0 - PI / 15.0),
            final_time: 5.0,
            horizon: 0.1,
            time_step: 0.02,
            substeps: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let psd = |w: &[f64; 4]| w.iter().all(|v| *v >= 0.0 && v.is_finite());
        if !psd(&self.state_weight) || !psd(&self.terminal_weight) || !(self.control_weight >= 0.0) {
            return Err(Error::InvalidParameter("cost weights must be finite and non-negative".into()));
        }
        if !(self.time_step > 0.0 && self.time_step <= self.horizon && self.horizon <= self.final_time) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < t_s <= T <= t_f, got t_s={} T={} t_f={}",
                self.time_step, self.horizon, self.final_time
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        if !self.desired.is_finite() {
            return Err(Error::InvalidParameter("desired state must be finite".into()));
        }
        Ok(())
    }

    /// Control intervals in a full rollout.
    pub fn steps(&self) -> usize {
        (self.final_time / self.time_step).round() as usize
    }

    /// Control intervals in the prediction horizon.
    pub fn horizon_steps(&self) -> usize {
        (self.horizon / self.time_step).round().max(1.0) as usize
    }

    pub fn substep(&self) -> f64 {
        self.time_step / self.substeps as f64
    }

    pub fn goal(&self) -> [f64; 2] {
        self.desired.position()
    }
}

#[inline]
pub(crate) fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-axis attraction toward `source`, with `r` clamped to `epsilon`.
#[inline]
pub(crate) fn attraction(x: f64, y: f64, source: [f64; 2], epsilon: f64) -> [f64; 2] {
    let dx = source[0] - x;
    let dy = source[1] - y;
    let r = dx.hypot(dy).max(epsilon);
    let a = 1.0 / (r * r);
    [sign0(dx) * a, sign0(dy) * a]
}

/// Acceleration commanded by `mode` at `s`.
pub fn mode_acceleration(s: &CellState, mode: &ControlMode, layout: &SourceLayout) -> [f64; 2] {
    match layout.attractor(mode) {
        None => [0.0, 0.0],
        Some(src) => attraction(s.x, s.y, src, layout.epsilon),
    }
}

/// Time derivative of the state, `(vx, ax, vy, ay)`.
pub fn mode_dynamics(s: &CellState, mode: &ControlMode, layout: &SourceLayout) -> Vector4<f64> {
    let [ax, ay] = mode_acceleration(s, mode, layout);
    Vector4::new(s.vx, ax, s.vy, ay)
}

#[inline]
fn clamp_speed(v: &mut Vector4<f64>, v_max: f64) {
    let speed = v[1].hypot(v[3]);
    if speed > v_max {
        let k = v_max / speed;
        v[1] *= k;
        v[3] *= k;
    }
}

/// Integrates one mode for `duration` with classical RK4, split into equal
/// sub-steps no longer than `max_substep`. The speed bound is enforced after
/// every sub-step.
pub fn integrate(
    s: &CellState,
    mode: &ControlMode,
    layout: &SourceLayout,
    duration: f64,
    max_substep: f64,
) -> CellState {
    if duration <= 0.0 {
        return *s;
    }
    let n = ((duration / max_substep) - 1e-9).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let src = layout.attractor(mode);
    let eps = layout.epsilon;
    let f = |v: &Vector4<f64>| -> Vector4<f64> {
        match src {
            None => Vector4::new(v[1], 0.0, v[3], 0.0),
            Some(p) => {
                let [ax, ay] = attraction(v[0], v[2], p, eps);
                Vector4::new(v[1], ax, v[3], ay)
            }
        }
    };
    let mut v = s.to_vector();
    for _ in 0..n {
        let k1 = f(&v);
        let k2 = f(&(v + k1 * (h / 2.0)));
        let k3 = f(&(v + k2 * (h / 2.0)));
        let k4 = f(&(v + k3 * h));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        clamp_speed(&mut v, layout.v_max);
    }
    CellState::from_vector(&v)
}

/// Advances one control interval `t_s`.
pub fn step(s: &CellState, mode: &ControlMode, layout: &SourceLayout, params: &CostParams) -> CellState {
    integrate(s, mode, layout, params.time_step, params.substep())
}

/// State-feedback law queried once per control interval.
pub trait Controller: Sync {
    fn control(&self, s: &CellState) -> ControlMode;
}

impl<F> Controller for F
where
    F: Fn(&CellState) -> ControlMode + Sync,
{
    fn control(&self, s: &CellState) -> ControlMode {
        self(s)
    }
}

/// Sampled closed-loop run: `states.len() == times.len() == modes.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CellState>,
    pub modes: Vec<ControlMode>,
}

impl Trajectory {
    pub fn initial(&self) -> &CellState {
        &self.states[0]
    }

    pub fn terminal(&self) -> &CellState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn intervals(&self) -> usize {
        self.modes.len()
    }
}

/// Closed-loop simulation over `[0, t_f]`, re-querying the controller every
/// `t_s`.
pub fn rollout(
    s0: &CellState,
    controller: &dyn Controller,
    params: &CostParams,
    layout: &SourceLayout,
) -> Result<Trajectory> {
    let n = params.steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut modes = Vec::with_capacity(n);
    let mut s = *s0;
    times.push(0.0);
    states.push(s);
    for k in 0..n {
        let u = controller.control(&s);
        layout.validate_mode(&u)?;
        s = step(&s, &u, layout, params);
        modes.push(u);
        states.push(s);
        times.push((k + 1) as f64 * params.time_step);
    }
    Ok(Trajectory { times, states, modes })
}

fn weighted_error(s: &CellState, weights: &[f64; 4], desired: &CellState) -> f64 {
    let e = s.to_vector() - desired.to_vector();
    (0..4).map(|i| weights[i] * e[i] * e[i]).sum()
}

/// `(s - x_d)^T Q (s - x_d) + R |u|^2`, with `u` the commanded acceleration.
pub fn running_cost(s: &CellState, control: [f64; 2], params: &CostParams) -> f64 {
    weighted_error(s, &params.state_weight, &params.desired)
        + params.control_weight * (control[0] * control[0] + control[1] * control[1])
}

/// `(s - x_d)^T P1 (s - x_d)`.
pub fn terminal_cost(s: &CellState, params: &CostParams) -> f64 {
    weighted_error(s, &params.terminal_weight, &params.desired)
}

/// Left-rectangle quadrature of the running cost at spacing `t_s`, plus the
/// terminal cost.
pub fn trajectory_cost(traj: &Trajectory, params: &CostParams, layout: &SourceLayout) -> Result<f64> {
    let expected = params.steps();
    if traj.modes.len() != expected || traj.states.len() != expected + 1 {
        return Err(Error::TrajectoryLength { expected, actual: traj.modes.len() });
    }
    let running: f64 = traj
        .states
        .iter()
        .zip(&traj.modes)
        .map(|(s, u)| running_cost(s, mode_acceleration(s, u, layout), params))
        .sum();
    Ok(running * params.time_step + terminal_cost(traj.terminal(), params))
}

/// `n` seeded start states at rest, uniform over the workspace.
pub fn sample_starts(n: usize, workspace: &Workspace, seed: u64) -> Vec<CellState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let [x, y] = workspace.sample(&mut rng);
            CellState::at_rest(x, y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> SourceLayout {
        SourceLayout::reference()
    }

    #[test]
    fn single_source_on_axis() {
        let d = mode_dynamics(&CellState::at_rest(2.0, 5.0), &ControlMode::Discrete(1), &layout());
        assert_eq!(d, Vector4::new(0.0, -1.0, 0.0, 0.0));
    }

    #[test]
    fn zero_control_preserves_velocity() {
        let s = CellState::new(3.3, 0.1, 0.7, -0.2);
        let d = mode_dynamics(&s, &ControlMode::ZERO, &layout());
        assert_eq!(d, Vector4::new(0.1, 0.0, -0.2, 0.0));
    }

    #[test]
    fn diagonal_source() {
        let d = mode_dynamics(&CellState::at_rest(2.0, 4.0), &ControlMode::Discrete(2), &layout());
        assert!((d - Vector4::new(0.0, 0.5, 0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn colocated_with_source_gets_no_push() {
        let d = mode_dynamics(&CellState::at_rest(1.0, 5.0), &ControlMode::Discrete(1), &layout());
        assert_eq!(d, Vector4::zeros());
    }

    #[test]
    fn acceleration_bounded_by_epsilon() {
        let l = layout();
        let s = CellState::at_rest(1.0 + 1e-6, 5.0 - 1e-6);
        let [ax, ay] = mode_acceleration(&s, &ControlMode::Discrete(1), &l);
        let cap = 1.0 / (l.epsilon() * l.epsilon());
        assert!(ax.abs() <= cap && ay.abs() <= cap);
        assert_eq!(ax.abs(), cap);
    }

    #[test]
    fn rest_at_goal_is_a_fixed_point() {
        let p = CostParams::reference();
        let s = p.desired;
        assert_eq!(step(&s, &ControlMode::ZERO, &layout(), &p), s);
    }

    #[test]
    fn step_matches_fine_euler_oracle() {
        // a = -1/(x-1)^2 along x, nothing along y
        let p = CostParams::reference();
        let s = step(&CellState::at_rest(2.0, 5.0), &ControlMode::Discrete(1), &layout(), &p);
        let (mut x, mut v) = (2.0f64, 0.0f64);
        let h = 1e-7;
        for _ in 0..(p.time_step / h).round() as usize {
            let a = -1.0 / ((x - 1.0) * (x - 1.0));
            x += v * h + 0.5 * a * h * h;
            v += a * h;
        }
        assert!((s.x - x).abs() < 1e-9, "{} vs {x}", s.x);
        assert!((s.vx - v).abs() < 1e-7);
        assert!(s.x < 2.0);
        assert_eq!(s.y, 5.0);
        assert!(s.speed() <= layout().v_max());
    }

    #[test]
    fn zero_control_keeps_saturated_speed() {
        let p = CostParams::reference();
        let l = layout();
        let v = l.v_max() / 2f64.sqrt();
        let s = step(&CellState::new(0.5, v, 0.5, v), &ControlMode::ZERO, &l, &p);
        assert!((s.speed() - l.v_max()).abs() < 1e-15);
    }

    #[test]
    fn passing_through_a_source_stays_finite() {
        let p = CostParams::reference();
        let l = layout();
        let mut s = CellState::new(1.0 - 0.004, 0.4, 5.0, 0.0);
        for _ in 0..50 {
            s = step(&s, &ControlMode::Discrete(1), &l, &p);
            assert!(s.is_finite());
            assert!(s.speed() <= l.v_max() + 1e-12);
        }
    }

    #[test]
    fn stationary_rollout_length() {
        let p = CostParams::reference();
        let traj = rollout(&p.desired, &|_: &CellState| ControlMode::ZERO, &p, &layout()).unwrap();
        assert_eq!(traj.states.len(), 251);
        assert_eq!(traj.times.len(), 251);
        assert_eq!(traj.modes.len(), 250);
        assert!(traj.states.iter().all(|s| *s == p.desired));
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn invalid_mode_is_a_fault() {
        let p = CostParams::reference();
        let err = rollout(&p.desired, &|_: &CellState| ControlMode::Discrete(9), &p, &layout());
        assert!(matches!(err, Err(Error::InvalidMode { .. })));
    }

    #[test]
    fn quadratic_costs() {
        let p = CostParams::reference();
        let mut s = p.desired;
        assert_eq!(running_cost(&s, [0.0, 0.0], &p), 0.0);
        assert_eq!(terminal_cost(&s, &p), 0.0);
        s.x += 1.0;
        assert!((running_cost(&s, [3.0, 4.0], &p) - 10.0).abs() < 1e-12);
        assert!((terminal_cost(&s, &p) - 10.0).abs() < 1e-12);
        let mut s = p.desired;
        s.vy += 1.0;
        assert!((running_cost(&s, [0.0, 0.0], &p) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn stationary_trajectory_cost() {
        let p = CostParams::reference();
        let l = layout();
        let zero = |_: &CellState| ControlMode::ZERO;
        let at_goal = rollout(&p.desired, &zero, &p, &l).unwrap();
        assert_eq!(trajectory_cost(&at_goal, &p, &l).unwrap(), 0.0);
        let mut off = p.desired;
        off.x += 1.0;
        let traj = rollout(&off, &zero, &p, &l).unwrap();
        assert!((trajectory_cost(&traj, &p, &l).unwrap() - 60.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_trajectory_is_rejected() {
        let p = CostParams::reference();
        let l = layout();
        let mut traj = rollout(&p.desired, &|_: &CellState| ControlMode::ZERO, &p, &l).unwrap();
        traj.states.pop();
        traj.modes.pop();
        assert!(matches!(trajectory_cost(&traj, &p, &l), Err(Error::TrajectoryLength { .. })));
    }

    #[test]
    fn layout_validation() {
        let ws = Workspace::default();
        assert!(SourceLayout::new(vec![[1.0, 1.0]], 0.0, 0.4, ws).is_err());
        assert!(SourceLayout::new(vec![[1.0, 1.0]], 0.01, -1.0, ws).is_err());
        assert!(SourceLayout::new(vec![[9.0, 1.0]], 0.01, 0.4, ws).is_err());
        assert_eq!(SourceLayout::reference().sources().len(), 6);
        assert_eq!(SourceLayout::reference().mode_count(), 7);
    }

    #[test]
    fn mode_string_round_trip() {
        for m in [ControlMode::Discrete(4), ControlMode::Continuous { x: 1.25, y: 0.1 }] {
            assert_eq!(m.to_string().parse::<ControlMode>().unwrap(), m);
        }
        assert!("x".parse::<ControlMode>().is_err());
    }
}
