// Monte Carlo comparison of simple designs against the MPC baseline.
//
// cargo run --release --example evaluate_designs -- [rollouts]

use synthcell::dynamics::{CellState, ControlMode, CostParams, SourceLayout};
use synthcell::error::Result;
use synthcell::evaluation::{evaluate_design, EvalSettings, IdealBaseline, MpcController};
use synthcell::policy::PolicyGrid;

pub fn run(rollouts: usize) -> Result<()> {
    let layout = SourceLayout::reference();
    let params = CostParams::reference();
    let settings = EvalSettings { n_rollouts: rollouts, fsm_samples: 2000, ..EvalSettings::reference(&layout) };

    let ideal = MpcController::new(layout.discrete_modes(), &layout, &params)?;
    let baseline = IdealBaseline::compute(&ideal, &layout, &params, &settings)?;

    let null = PolicyGrid::uniform(10, 10, *layout.workspace(), ControlMode::ZERO);
    let goal = params.goal();
    // the source nearest the goal, everywhere
    let nearest = |_: &CellState| ControlMode::Discrete(3);
    // each quadrant around the goal pulled by a source on the opposite diagonal
    let quadrants = PolicyGrid::from_fn(10, 10, *layout.workspace(), |p| match (p[0] < goal[0], p[1] < goal[1]) {
        (true, true) => ControlMode::Discrete(2),
        (false, true) => ControlMode::Discrete(1),
        (true, false) => ControlMode::Discrete(4),
        (false, false) => ControlMode::Discrete(3),
    });

    println!("{:<10} {:>8} {:>8} {:>10} {:>8}", "design", "entropy", "kl", "final_dist", "arrived");
    for (label, c) in [
        ("ideal", &ideal as &dyn synthcell::dynamics::Controller),
        ("null", &null),
        ("source-3", &nearest),
        ("quadrants", &quadrants),
    ] {
        let r = evaluate_design(label, c, &baseline, &layout, &params, &settings)?.report;
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>10.4} {:>8.3}",
            r.label, r.entropy, r.kl, r.mean_final_distance, r.arrival_rate
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let rollouts = std::env::args().nth(1).and_then(|g| g.parse().ok()).unwrap_or(1000);
    run(rollouts)
}
