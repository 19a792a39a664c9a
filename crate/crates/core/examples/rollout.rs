// Closed-loop rollouts under a few fixed modes, written as trajectory CSVs.
//
// cargo run --example rollout -- [out_dir]

use std::path::{Path, PathBuf};

use synthcell::dynamics::{rollout, trajectory_cost, CellState, ControlMode, CostParams, SourceLayout};
use synthcell::error::{Error, Result};
use synthcell::export::write_trajectory;

pub fn run(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })?;
    let layout = SourceLayout::reference();
    let params = CostParams::reference();
    let start = CellState::at_rest(0.5, 0.5);
    let goal = params.goal();

    println!("start (0.5, 0.5), goal ({:.4}, {:.4})", goal[0], goal[1]);
    // acceleration is sign(dx)/r^2 per axis, so every mode pushes along a diagonal
    let modes = [
        ControlMode::ZERO,
        ControlMode::Discrete(3),
        ControlMode::Discrete(2),
        ControlMode::Continuous { x: 1.85, y: 3.8 },
    ];
    for (i, mode) in modes.into_iter().enumerate() {
        let traj = rollout(&start, &|_: &CellState| mode, &params, &layout)?;
        let end = traj.terminal();
        println!(
            "mode {mode}: cost {:8.2}  end ({:.3}, {:.3})  speed {:.3}  distance {:.3}",
            trajectory_cost(&traj, &params, &layout)?,
            end.x,
            end.y,
            end.speed(),
            end.distance_to(goal)
        );
        write_trajectory(&out.join(format!("trajectory_{i}.csv")), &traj)?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs/rollout"));
    run(&out)
}
