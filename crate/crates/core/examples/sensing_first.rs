// Sensing-first design: a free source per region of a sensor partition,
// then projection onto discrete actuator subsets.
//
// cargo run --release --example sensing_first -- [starts_per_region] [candidate_grid]

use synthcell::dynamics::{CostParams, SourceLayout};
use synthcell::error::Result;
use synthcell::export::logic_table;
use synthcell::projection::{best_source_per_region, project_to_actuators, source_grid, RolloutBudget};
use synthcell::sensors::source_one_sensors;

pub fn run(starts: usize, grid: usize, rollouts: usize) -> Result<()> {
    let layout = SourceLayout::reference();
    let params = CostParams::reference();
    let sensors = source_one_sensors(&layout);
    let reference = RolloutBudget::reference(&params);
    let per_region = RolloutBudget { n_rollouts: starts, ..reference.clone() };

    let placed =
        best_source_per_region(&sensors, &source_grid(&layout, grid, grid), &layout, &params, &per_region, 9, 3)?;
    println!("free sources per region:\n{}", logic_table(&placed));

    let budget = RolloutBudget { n_rollouts: rollouts, ..reference };
    for subset in [&[1, 2, 3, 4, 5, 6][..], &[1, 2, 3], &[1, 4]] {
        let projected = project_to_actuators(&placed, subset, &layout, &params, &budget, 3)?;
        let modes: Vec<String> = projected.policy.regions.iter().map(|r| r.mode.to_string()).collect();
        println!("subset {subset:?}: {}", modes.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let starts = args.next().and_then(|g| g.parse().ok()).unwrap_or(10);
    let grid = args.next().and_then(|g| g.parse().ok()).unwrap_or(20);
    run(starts, grid, 1000)
}
