// Synthesizes a perfect-sensing policy and projects it onto the two-sensor
// set by rollouts, printing the per-region cost table and logic table.
//
// cargo run --release --example project_onto_sensors -- [rollouts] [out_dir]

use std::path::{Path, PathBuf};

use synthcell::dynamics::{ControlMode, CostParams, SourceLayout};
use synthcell::error::{Error, Result};
use synthcell::export::{logic_table, write_json};
use synthcell::policy::PolicyGrid;
use synthcell::projection::{project_to_sensors, RolloutBudget};
use synthcell::sensors::SensorSet;
use synthcell::synthesis::{synthesize, SynthesisOptions};

pub fn run(rollouts: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })?;
    let layout = SourceLayout::reference();
    let params = CostParams::reference();
    let null = PolicyGrid::uniform(30, 30, *layout.workspace(), ControlMode::ZERO);
    let trace = synthesize(&null, 1.25, 10.0, &layout, &params, &SynthesisOptions::default())?;

    let sensors = SensorSet::from_pairs(&[(1, 2), (1, 5)])?;
    let budget = RolloutBudget { n_rollouts: rollouts, ..RolloutBudget::reference(&params) };
    let result = project_to_sensors(trace.final_policy(), &sensors, &layout, &params, &budget, 5)?;

    println!("mean arrival cost per candidate mode (penalty {})", budget.j_penalty);
    print!("{:>8} {:>5}", "region", "n");
    for c in &result.candidates {
        print!(" {:>7}", c.to_string());
    }
    println!();
    for (i, id) in result.regions.iter().enumerate() {
        print!("{:>8} {:>5}", id.to_string(), result.visits[i]);
        for m in &result.mean_cost[i] {
            match m {
                Some(v) => print!(" {v:>7.2}"),
                None => print!(" {:>7}", "-"),
            }
        }
        println!("  -> {}", result.policy.regions[i].mode);
    }
    println!("\n{}", logic_table(&result.policy));
    write_json(&out.join("region_policy.json"), &result.policy)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let rollouts = args.next().and_then(|g| g.parse().ok()).unwrap_or(1000);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs/project_onto_sensors"));
    run(rollouts, &out)
}
