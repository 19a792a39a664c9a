// Mode insertion gradients of the all-zero policy, checked against a
// finite-difference insertion at one query point.
//
// cargo run --example insertion_gradient -- [out_dir]

use std::path::{Path, PathBuf};

use synthcell::dynamics::{CellState, ControlMode, CostParams, SourceLayout};
use synthcell::error::{Error, Result};
use synthcell::export::write_mig_field;
use synthcell::gradient::{mig, mig_field};
use synthcell::policy::PolicyGrid;

pub fn run(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })?;
    let layout = SourceLayout::reference();
    let params = CostParams::reference();
    let null = PolicyGrid::uniform(20, 20, *layout.workspace(), ControlMode::ZERO);

    let query = [0.7, 1.3];
    let d = mig(query, &null, &layout, &params);
    let s0 = CellState::at_rest(query[0], query[1]);
    let base = horizon_cost_with(&s0, |s, _| null_mode(s), &layout, &params);
    let lambda = 1e-3;
    println!("query ({}, {}), horizon cost {base:.6}", query[0], query[1]);
    println!("{:>5} {:>12} {:>12}", "mode", "d", "fd");
    for (i, mode) in layout.discrete_modes().into_iter().enumerate() {
        // mode held for the first lambda seconds, then the policy as before
        let inserted = move |s: &CellState, t: f64| if t < lambda { mode } else { null_mode(s) };
        let fd = (horizon_cost_with(&s0, inserted, &layout, &params) - base) / lambda;
        println!("{i:>5} {:>12.6} {:>12.6}", d[i], fd);
    }

    let field = mig_field(&null, &layout, &params);
    write_mig_field(&out.join("mig_null.csv"), &field)?;
    let best =
        field.values.iter().map(|v| v.iter().cloned().fold(f64::INFINITY, f64::min)).fold(f64::INFINITY, f64::min);
    println!("field over {} cells written; most negative entry {best:.4}", field.values.len());
    Ok(())
}

fn null_mode(_: &CellState) -> ControlMode {
    ControlMode::ZERO
}

/// Trapezoid horizon cost of a time-varying controller, sampled on the
/// integration sub-steps.
fn horizon_cost_with(
    s0: &CellState,
    control: impl Fn(&CellState, f64) -> ControlMode,
    layout: &SourceLayout,
    params: &CostParams,
) -> f64 {
    use synthcell::dynamics::{integrate, mode_acceleration, running_cost};
    let h = 1e-5;
    let n = (params.horizon / h).round() as usize;
    let mut s = *s0;
    let mut total = 0.0;
    let mut prev = running_cost(&s, mode_acceleration(&s, &control(&s, 0.0), layout), params);
    for k in 0..n {
        let t = k as f64 * h;
        let u = control(&s, t);
        s = integrate(&s, &u, layout, h, h);
        let next = running_cost(&s, mode_acceleration(&s, &control(&s, t + h), layout), params);
        total += 0.5 * (prev + next) * h;
        prev = next;
    }
    total
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs/insertion_gradient"));
    run(&out)
}
