// Comparator library, deduplication and the regions each sensor set
// realizes.
//
// cargo run --release --example sensor_regions -- [out_dir]

use std::path::{Path, PathBuf};

use synthcell::dynamics::SourceLayout;
use synthcell::error::{Error, Result};
use synthcell::export::{region_map, write_region_map};
use synthcell::sensors::{all_sensor_pairs, distinct_sensors, enumerate_regions, source_one_sensors, SensorSet};

pub fn run(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })?;
    let layout = SourceLayout::reference();
    let distinct = distinct_sensors(&layout);
    let names = |s: &SensorSet| s.comparators().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
    println!("{} comparator pairs, {} distinct: {}", all_sensor_pairs(&layout).len(), distinct.len(), names(&distinct));

    let sets = [
        ("two", SensorSet::from_pairs(&[(1, 2), (1, 5)])?),
        ("source-one", source_one_sensors(&layout)),
        ("distinct", distinct),
    ];
    for (name, set) in &sets {
        let regions = enumerate_regions(set, &layout, 200)?;
        let smallest = regions.iter().map(|r| r.members.len()).min().unwrap_or(0);
        println!("{name:>10}: {} sensors, {} regions, smallest covers {smallest} probes", set.len(), regions.len());
        for r in regions.iter().take(4) {
            let c = r.centroid();
            println!("{:>12} {} around ({:.2}, {:.2})", "", r.id, c[0], c[1]);
        }
        write_region_map(&out.join(format!("regions_{name}.csv")), &region_map(set, &layout, 200))?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs/sensor_regions"));
    run(&out)
}
