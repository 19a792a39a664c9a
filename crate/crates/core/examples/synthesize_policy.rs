// Policy line search from the all-zero policy, printed as a trace and
// drawn as a character map.
//
// cargo run --release --example synthesize_policy -- [grid] [out_dir]

use std::path::{Path, PathBuf};

use synthcell::dynamics::{ControlMode, CostParams, SourceLayout};
use synthcell::error::{Error, Result};
use synthcell::export::{write_policy, write_trace};
use synthcell::policy::PolicyGrid;
use synthcell::synthesis::{chattering_policy, entropy, extract_fsm, synthesize, SynthesisOptions};

pub fn run(grid: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })?;
    let layout = SourceLayout::reference();
    let params = CostParams::reference();
    let opts = SynthesisOptions::default();
    let null = PolicyGrid::uniform(grid, grid, *layout.workspace(), ControlMode::ZERO);

    let trace = synthesize(&null, 1.25, 10.0, &layout, &params, &opts)?;
    println!("{:>3} {:>10} {:>8} {:>9}  accepted", "k", "J", "h", "gamma");
    for r in &trace.records {
        println!("{:>3} {:>10.3} {:>8.4} {:>9.3}  {}", r.k, r.cost, r.entropy, r.gamma, r.accepted);
    }
    println!("stopped: {:?}", trace.termination);

    let policy = trace.final_policy();
    print_map(policy);
    let chatter = chattering_policy(grid, grid, &layout, &params);
    let h = entropy(&extract_fsm(&chatter, &layout, &params, opts.fsm_samples, opts.fsm_seed)?)?;
    println!(
        "chattering baseline: {} distinct modes, {} cells differ from the result, entropy {h:.4}",
        chatter.distinct_modes().len(),
        chatter.diff_count(policy)
    );

    write_trace(&out.join("trace.csv"), &trace)?;
    write_policy(&out.join("final_policy.csv"), policy)?;
    write_policy(&out.join("chattering_policy.csv"), &chatter)?;
    Ok(())
}

/// One character per cell, top row first.
fn print_map(policy: &PolicyGrid) {
    for iy in (0..policy.ny()).rev() {
        let row: String = (0..policy.nx())
            .map(|ix| match policy.get(ix, iy) {
                ControlMode::Discrete(0) => '.',
                ControlMode::Discrete(i) => char::from_digit(i as u32, 36).unwrap_or('?'),
                ControlMode::Continuous { .. } => '*',
            })
            .collect();
        println!("  {row}");
    }
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let grid = args.next().and_then(|g| g.parse().ok()).unwrap_or(50);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs/synthesize_policy"));
    run(grid, &out)
}
