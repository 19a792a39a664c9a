//! Low-complexity policy synthesis.
//!
//! Policy complexity is scored as the entropy of a data-driven mode
//! transition matrix, and policies are improved by an iterative line search
//! along the mode insertion gradient field. The search keeps accepting
//! policies while each step lowers the Monte Carlo cost by at least `eps_j`
//! and the entropy grows by less than `eps_h`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    rollout, sample_starts, step, trajectory_cost, CellState, ControlMode, Controller, CostParams, SourceLayout,
};
use crate::error::{Error, Result};
use crate::gradient::{mig_field, MigField};
use crate::policy::PolicyGrid;

/// Row-normalized mode transition probabilities.
///
/// Discrete modes keep their own index; continuous modes, if any, are
/// appended after the discrete block in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    labels: Vec<ControlMode>,
    counts: Vec<Vec<u64>>,
    probs: Vec<Vec<f64>>,
}

impl AdjacencyMatrix {
    pub fn from_counts(labels: Vec<ControlMode>, counts: Vec<Vec<u64>>) -> Self {
        let probs = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
            })
            .collect();
        Self { labels, counts, probs }
    }

    /// Wraps already-normalized rows; nothing is checked here, `entropy`
    /// rejects negative entries.
    pub fn from_probabilities(probs: Vec<Vec<f64>>) -> Self {
        let n = probs.len();
        Self { labels: (0..n).map(ControlMode::Discrete).collect(), counts: vec![vec![0; n]; n], probs }
    }

    pub fn size(&self) -> usize {
        self.probs.len()
    }

    pub fn labels(&self) -> &[ControlMode] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.probs[from][to]
    }

    /// Number of nonzero entries.
    pub fn edge_count(&self) -> usize {
        self.probs.iter().flatten().filter(|p| **p > 0.0).count()
    }
}

fn mode_slot(labels: &mut Vec<ControlMode>, counts: &mut Vec<Vec<u64>>, mode: ControlMode) -> usize {
    if let ControlMode::Discrete(i) = mode {
        if i < labels.len() && labels[i] == mode {
            return i;
        }
    }
    if let Some(i) = labels.iter().position(|m| *m == mode) {
        return i;
    }
    labels.push(mode);
    for row in counts.iter_mut() {
        row.push(0);
    }
    counts.push(vec![0; labels.len()]);
    labels.len() - 1
}

/// Estimates the policy's finite state machine by one-step probes: seeded
/// start positions at rest, uniform over the workspace, are advanced one
/// control interval, and the (mode before, mode after) pairs are counted.
pub fn extract_fsm(
    policy: &dyn Controller,
    layout: &SourceLayout,
    params: &CostParams,
    n_samples: usize,
    seed: u64,
) -> Result<AdjacencyMatrix> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("extract_fsm needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = *layout.workspace();
    let starts: Vec<[f64; 2]> = (0..n_samples).map(|_| ws.sample(&mut rng)).collect();
    let pairs: Vec<(ControlMode, ControlMode)> = starts
        .par_iter()
        .map(|p| {
            let s = CellState::at_rest(p[0], p[1]);
            let before = policy.control(&s);
            let next = step(&s, &before, layout, params);
            (before, policy.control(&next))
        })
        .collect();

    let mut labels = layout.discrete_modes();
    let m = labels.len();
    let mut counts = vec![vec![0u64; m]; m];
    for (a, b) in pairs {
        let i = mode_slot(&mut labels, &mut counts, a);
        let j = mode_slot(&mut labels, &mut counts, b);
        counts[i][j] += 1;
    }
    Ok(AdjacencyMatrix::from_counts(labels, counts))
}

/// `-sum p ln p` over the strictly positive entries.
pub fn entropy(a: &AdjacencyMatrix) -> Result<f64> {
    let mut h = 0.0;
    for (i, row) in a.rows().iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p < 0.0 || p.is_nan() {
                return Err(Error::NegativeProbability { row: i, col: j, value: p });
            }
            if p > 0.0 {
                h -= p * p.ln();
            }
        }
    }
    Ok(h)
}

/// One line-search step: each cell scores mode `i` as
/// `[i == current] - gamma * d_i` and takes the best score, keeping its
/// current mode on ties.
pub fn policy_update(policy: &PolicyGrid, field: &MigField, gamma: f64) -> PolicyGrid {
    let mut next = policy.clone();
    for (idx, d) in field.values.iter().enumerate() {
        let current = policy.cells()[idx];
        let mut best = current;
        let mut best_score = 1.0;
        for (mode, &di) in field.modes.iter().zip(d) {
            if *mode == current {
                continue;
            }
            let score = -gamma * di;
            if score > best_score {
                best_score = score;
                best = *mode;
            }
        }
        next.set_index(idx, best);
    }
    next
}

/// Mean trajectory cost over a fixed start set.
pub fn policy_cost(
    policy: &dyn Controller,
    layout: &SourceLayout,
    params: &CostParams,
    init_set: &[CellState],
) -> Result<f64> {
    if init_set.is_empty() {
        return Err(Error::InvalidParameter("policy cost needs at least one start".into()));
    }
    let costs: Vec<f64> = init_set
        .par_iter()
        .map(|s0| rollout(s0, policy, params, layout).and_then(|t| trajectory_cost(&t, params, layout)))
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub gamma_init: f64,
    pub gamma_growth: f64,
    pub gamma_max: f64,
    pub cost_rollouts: usize,
    pub cost_seed: u64,
    pub fsm_samples: usize,
    pub fsm_seed: u64,
    /// Hard stop on accepted iterations.
    pub max_iterations: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            gamma_init: 0.001,
            gamma_growth: 2.0,
            gamma_max: 100.0,
            cost_rollouts: 100,
            cost_seed: 7,
            fsm_samples: 10_000,
            fsm_seed: 11,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub policy: PolicyGrid,
    pub cost: f64,
    pub entropy: f64,
    /// Step size that produced this policy (0 for the default policy).
    pub gamma: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The last candidate broke the entropy budget and was discarded.
    EntropyBudget,
    /// No step size up to `gamma_max` lowered the cost by `eps_j`.
    LineSearchExhausted,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PolicyIterationTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl PolicyIterationTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    /// Last accepted record, the synthesis result.
    pub fn result(&self) -> &IterationRecord {
        self.accepted().last().expect("trace always holds the default policy")
    }

    pub fn final_policy(&self) -> &PolicyGrid {
        &self.result().policy
    }
}

fn checked(cost: f64, iteration: usize, gamma: f64) -> Result<f64> {
    if cost.is_finite() {
        Ok(cost)
    } else {
        Err(Error::NonFiniteCost { iteration, gamma, cost })
    }
}

/// Iterative line search over policies.
pub fn synthesize(
    default_policy: &PolicyGrid,
    eps_h: f64,
    eps_j: f64,
    layout: &SourceLayout,
    params: &CostParams,
    opts: &SynthesisOptions,
) -> Result<PolicyIterationTrace> {
    if !(eps_h > 0.0) || !(eps_j > 0.0) {
        return Err(Error::InvalidParameter(format!("need eps_h > 0 and eps_j > 0, got {eps_h}, {eps_j}")));
    }
    if !(opts.gamma_init > 0.0 && opts.gamma_growth > 1.0) {
        return Err(Error::InvalidParameter("step size must start positive and grow".into()));
    }
    default_policy.validate(layout)?;
    let starts = sample_starts(opts.cost_rollouts, layout.workspace(), opts.cost_seed);
    let complexity =
        |p: &PolicyGrid| -> Result<f64> { entropy(&extract_fsm(p, layout, params, opts.fsm_samples, opts.fsm_seed)?) };

    let mut policy = default_policy.clone();
    let mut cost = checked(policy_cost(&policy, layout, params, &starts)?, 0, 0.0)?;
    let mut h = complexity(&policy)?;
    let mut field = mig_field(&policy, layout, params);
    let mut records =
        vec![IterationRecord { k: 0, policy: policy.clone(), cost, entropy: h, gamma: 0.0, accepted: true }];
    let mut k = 0;

    let termination = loop {
        if k >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        // grow gamma until the candidate improves the cost by eps_j
        let mut gamma = opts.gamma_init;
        let mut found = None;
        while gamma <= opts.gamma_max {
            let candidate = policy_update(&policy, &field, gamma);
            if candidate != policy {
                let c = checked(policy_cost(&candidate, layout, params, &starts)?, k + 1, gamma)?;
                if c <= cost - eps_j {
                    found = Some((candidate, c, gamma));
                    break;
                }
            }
            gamma *= opts.gamma_growth;
        }
        let Some((candidate, c, gamma)) = found else {
            break Termination::LineSearchExhausted;
        };
        let h_next = complexity(&candidate)?;
        let within_budget = h_next < h + eps_h;
        records.push(IterationRecord {
            k: k + 1,
            policy: candidate.clone(),
            cost: c,
            entropy: h_next,
            gamma,
            accepted: within_budget,
        });
        if !within_budget {
            break Termination::EntropyBudget;
        }
        policy = candidate;
        cost = c;
        h = h_next;
        field = mig_field(&policy, layout, params);
        k += 1;
    };
    Ok(PolicyIterationTrace { records, termination })
}

/// Per-cell optimal mode against the all-zero default: the maximally
/// switching baseline.
pub fn chattering_policy(nx: usize, ny: usize, layout: &SourceLayout, params: &CostParams) -> PolicyGrid {
    let null = PolicyGrid::uniform(nx, ny, *layout.workspace(), ControlMode::ZERO);
    let field = mig_field(&null, layout, params);
    let mut out = null.clone();
    for (idx, d) in field.values.iter().enumerate() {
        let mut best = 0;
        for (i, &v) in d.iter().enumerate() {
            if v < d[best] {
                best = i;
            }
        }
        out.set_index(idx, field.modes[best]);
    }
    out
}

/// Random row-normalized matrix, used by property checks.
pub fn random_adjacency<R: Rng>(rng: &mut R, m: usize, density: f64) -> AdjacencyMatrix {
    let counts = (0..m)
        .map(|_| (0..m).map(|_| if rng.random::<f64>() < density { rng.random_range(1..100) } else { 0 }).collect())
        .collect();
    AdjacencyMatrix::from_counts((0..m).map(ControlMode::Discrete).collect(), counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Workspace;
    use crate::gradient::MigField;

    fn field_with(nx: usize, ny: usize, values: Vec<Vec<f64>>) -> MigField {
        MigField {
            nx,
            ny,
            workspace: Workspace::default(),
            modes: (0..values[0].len()).map(ControlMode::Discrete).collect(),
            values,
        }
    }

    #[test]
    fn entropy_of_known_matrices() {
        let constant = AdjacencyMatrix::from_probabilities(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(entropy(&constant).unwrap(), 0.0);
        let halves = AdjacencyMatrix::from_probabilities(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!((entropy(&halves).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        let bad = AdjacencyMatrix::from_probabilities(vec![vec![1.5, -0.5], vec![0.0, 1.0]]);
        assert!(matches!(entropy(&bad), Err(Error::NegativeProbability { row: 0, col: 1, .. })));
    }

    #[test]
    fn constant_policy_has_one_self_loop() {
        let layout = SourceLayout::reference();
        let params = CostParams::reference();
        let p = PolicyGrid::uniform(10, 10, *layout.workspace(), ControlMode::Discrete(2));
        let a = extract_fsm(&p, &layout, &params, 500, 3).unwrap();
        assert_eq!(a.get(2, 2), 1.0);
        assert_eq!(a.edge_count(), 1);
        assert_eq!(entropy(&a).unwrap(), 0.0);
    }

    #[test]
    fn rows_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_adjacency(&mut rng, 7, 0.4);
        for row in a.rows() {
            let s: f64 = row.iter().sum();
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn update_rule_arithmetic() {
        let p = PolicyGrid::uniform(1, 1, Workspace::default(), ControlMode::ZERO);
        let f = field_with(1, 1, vec![vec![0.0, 1.0, 0.5, -2.0, 0.0, 3.0, 0.2]]);
        assert_eq!(policy_update(&p, &f, 0.0), p);
        assert_eq!(policy_update(&p, &f, 0.4).cells()[0], ControlMode::ZERO);
        assert_eq!(policy_update(&p, &f, 0.6).cells()[0], ControlMode::Discrete(3));
        let pos = field_with(1, 1, vec![vec![0.0, 1.0, 0.5, 2.0, 0.0, 3.0, 0.2]]);
        for g in [0.0, 1.0, 1e6] {
            assert_eq!(policy_update(&p, &pos, g), p);
        }
    }

    #[test]
    fn tie_keeps_current_mode() {
        let p = PolicyGrid::uniform(1, 1, Workspace::default(), ControlMode::ZERO);
        // score of mode 1 equals exactly 1.0 at gamma = 0.5
        let f = field_with(1, 1, vec![vec![0.0, -2.0]]);
        assert_eq!(policy_update(&p, &f, 0.5).cells()[0], ControlMode::ZERO);
    }

    #[test]
    fn cost_at_goal_is_zero_and_null_cost_positive() {
        let layout = SourceLayout::reference();
        let params = CostParams::reference();
        let null = PolicyGrid::uniform(20, 20, *layout.workspace(), ControlMode::ZERO);
        assert_eq!(policy_cost(&null, &layout, &params, &[params.desired]).unwrap(), 0.0);
        let starts = sample_starts(20, layout.workspace(), 1);
        let c1 = policy_cost(&null, &layout, &params, &starts).unwrap();
        let c2 = policy_cost(&null, &layout, &params, &starts).unwrap();
        assert!(c1 > 0.0);
        assert_eq!(c1, c2);
        assert!(policy_cost(&null, &layout, &params, &[]).is_err());
    }

    #[test]
    fn unreachable_improvement_leaves_policy_unchanged() {
        let layout = SourceLayout::reference();
        let params = CostParams::reference();
        let null = PolicyGrid::uniform(10, 10, *layout.workspace(), ControlMode::ZERO);
        let opts = SynthesisOptions { cost_rollouts: 20, fsm_samples: 500, ..Default::default() };
        let trace = synthesize(&null, 1.25, 1e9, &layout, &params, &opts).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.termination, Termination::LineSearchExhausted);
        assert_eq!(trace.final_policy(), &null);
    }
}
