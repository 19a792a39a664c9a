//! CSV, JSON and text artifacts, each with a matching loader.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CellState, ControlMode, SourceLayout, Trajectory, Workspace};
use crate::error::{Error, Result};
use crate::evaluation::{DesignReport, MonteCarlo, OccupancyDist};
use crate::gradient::MigField;
use crate::policy::PolicyGrid;
use crate::projection::RegionPolicy;
use crate::sensors::{region_signature, RegionId, SensorSet};
use crate::synthesis::PolicyIterationTrace;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(BufReader::new(f)))
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), message: message.into() }
}

fn parse_mode(path: &Path, s: &str) -> Result<ControlMode> {
    s.parse().map_err(|e: String| parse_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| parse_err(path, e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRow {
    t: f64,
    x: f64,
    vx: f64,
    y: f64,
    vy: f64,
    /// Mode applied from this sample on; empty on the final sample.
    mode: String,
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (i, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mode = traj.modes.get(i).map(|m| m.to_string()).unwrap_or_default();
        w.serialize(TrajectoryRow { t: *t, x: s.x, vx: s.vx, y: s.y, vy: s.vy, mode })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new(), modes: Vec::new() };
    let mut ended = false;
    for row in csv_reader(path)?.deserialize() {
        let row: TrajectoryRow = row?;
        if ended {
            return Err(parse_err(path, "rows after the final (mode-less) sample"));
        }
        traj.times.push(row.t);
        traj.states.push(CellState::new(row.x, row.vx, row.y, row.vy));
        if row.mode.is_empty() {
            ended = true;
        } else {
            traj.modes.push(parse_mode(path, &row.mode)?);
        }
    }
    if !ended {
        return Err(parse_err(path, "missing final sample"));
    }
    Ok(traj)
}

#[derive(Serialize, Deserialize)]
struct PolicyRow {
    cell_x: usize,
    cell_y: usize,
    mode: String,
}

pub fn write_policy(path: &Path, policy: &PolicyGrid) -> Result<()> {
    let mut w = csv_writer(path)?;
    for iy in 0..policy.ny() {
        for ix in 0..policy.nx() {
            w.serialize(PolicyRow { cell_x: ix, cell_y: iy, mode: policy.get(ix, iy).to_string() })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// The grid shape comes from the cell indices; the workspace is not stored
/// in the CSV and has to be supplied.
pub fn read_policy(path: &Path, workspace: Workspace) -> Result<PolicyGrid> {
    let mut rows = Vec::new();
    for row in csv_reader(path)?.deserialize() {
        let row: PolicyRow = row?;
        rows.push((row.cell_x, row.cell_y, parse_mode(path, &row.mode)?));
    }
    let nx = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let ny = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if nx == 0 || rows.len() != nx * ny {
        return Err(parse_err(path, format!("{} rows do not fill a {nx}x{ny} grid", rows.len())));
    }
    let mut cells = vec![None; nx * ny];
    for (ix, iy, m) in rows {
        let slot = &mut cells[iy * nx + ix];
        if slot.is_some() {
            return Err(parse_err(path, format!("cell ({ix}, {iy}) listed twice")));
        }
        *slot = Some(m);
    }
    PolicyGrid::from_cells(nx, ny, workspace, cells.into_iter().map(Option::unwrap).collect())
}

pub fn write_mig_field(path: &Path, field: &MigField) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["cell_x".to_string(), "cell_y".to_string()];
    header.extend(field.modes.iter().map(|m| format!("d_{m}")));
    w.write_record(&header)?;
    for iy in 0..field.ny {
        for ix in 0..field.nx {
            let mut rec = vec![ix.to_string(), iy.to_string()];
            rec.extend(field.at(ix, iy).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_mig_field(path: &Path, workspace: Workspace) -> Result<MigField> {
    let mut r = csv_reader(path)?;
    let header = r.headers()?.clone();
    let modes = header
        .iter()
        .skip(2)
        .map(|h| {
            let m = h.strip_prefix("d_").ok_or_else(|| parse_err(path, format!("bad column `{h}`")))?;
            parse_mode(path, m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).unwrap_or("").parse::<f64>().map_err(|e| parse_err(path, e.to_string()))
        };
        let ix = num(0)? as usize;
        let iy = num(1)? as usize;
        let d = (2..2 + modes.len()).map(num).collect::<Result<Vec<_>>>()?;
        rows.push((ix, iy, d));
    }
    let nx = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let ny = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if nx == 0 || rows.len() != nx * ny {
        return Err(parse_err(path, "rows do not fill the grid"));
    }
    let mut values = vec![Vec::new(); nx * ny];
    for (ix, iy, d) in rows {
        values[iy * nx + ix] = d;
    }
    Ok(MigField { nx, ny, workspace, modes, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    #[serde(rename = "J")]
    pub cost: f64,
    #[serde(rename = "h")]
    pub entropy: f64,
    pub gamma: f64,
    pub accepted: bool,
}

pub fn trace_rows(trace: &PolicyIterationTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow { k: r.k, cost: r.cost, entropy: r.entropy, gamma: r.gamma, accepted: r.accepted })
        .collect()
}

pub fn write_trace(path: &Path, trace: &PolicyIterationTrace) -> Result<()> {
    write_rows(path, &trace_rows(trace))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    read_rows(path)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    csv_reader(path)?.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMapRow {
    pub cell_x: usize,
    pub cell_y: usize,
    pub region_id: RegionId,
}

/// Region signature at the center of each cell of a `resolution` square
/// grid.
pub fn region_map(set: &SensorSet, layout: &SourceLayout, resolution: usize) -> Vec<RegionMapRow> {
    let ws = layout.workspace();
    let mut rows = Vec::with_capacity(resolution * resolution);
    for iy in 0..resolution {
        for ix in 0..resolution {
            let p = [
                ws.x_min + (ix as f64 + 0.5) * ws.width() / resolution as f64,
                ws.y_min + (iy as f64 + 0.5) * ws.height() / resolution as f64,
            ];
            rows.push(RegionMapRow { cell_x: ix, cell_y: iy, region_id: region_signature(p, set, layout) });
        }
    }
    rows
}

pub fn write_region_map(path: &Path, rows: &[RegionMapRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_region_map(path: &Path) -> Result<Vec<RegionMapRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub bin_x: usize,
    pub bin_y: usize,
    pub p: f64,
    pub q: f64,
}

pub fn occupancy_rows(p: &OccupancyDist, q: &OccupancyDist) -> Result<Vec<OccupancyRow>> {
    if p.bins != q.bins {
        return Err(Error::BinMismatch(format!("{:?} vs {:?}", p.bins, q.bins)));
    }
    let nx = p.bins.nx;
    Ok(p.mass
        .iter()
        .zip(&q.mass)
        .enumerate()
        .map(|(i, (&p, &q))| OccupancyRow { bin_x: i % nx, bin_y: i / nx, p, q })
        .collect())
}

pub fn write_occupancy(path: &Path, p: &OccupancyDist, q: &OccupancyDist) -> Result<()> {
    write_rows(path, &occupancy_rows(p, q)?)
}

pub fn read_occupancy(path: &Path) -> Result<Vec<OccupancyRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointRow {
    pub start_x: f64,
    pub start_y: f64,
    pub end_x: f64,
    pub end_y: f64,
}

pub fn write_endpoints(path: &Path, runs: &MonteCarlo) -> Result<()> {
    let rows: Vec<EndpointRow> = runs
        .endpoints()
        .into_iter()
        .map(|(s, e)| EndpointRow { start_x: s[0], start_y: s[1], end_x: e[0], end_y: e[1] })
        .collect();
    write_rows(path, &rows)
}

pub fn read_endpoints(path: &Path) -> Result<Vec<EndpointRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SummaryRow {
    label: String,
    entropy: f64,
    kl: f64,
    mean_final_distance: f64,
    arrival_rate: f64,
    mean_cost: f64,
    n_rollouts: usize,
    seed: u64,
}

pub fn write_summary(path: &Path, reports: &[DesignReport]) -> Result<()> {
    let rows: Vec<SummaryRow> = reports
        .iter()
        .map(|r| SummaryRow {
            label: r.label.clone(),
            entropy: r.entropy,
            kl: r.kl,
            mean_final_distance: r.mean_final_distance,
            arrival_rate: r.arrival_rate,
            mean_cost: r.mean_cost,
            n_rollouts: r.n_rollouts,
            seed: r.seed,
        })
        .collect();
    write_rows(path, &rows)
}

pub fn read_summary(path: &Path) -> Result<Vec<DesignReport>> {
    let rows: Vec<SummaryRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| DesignReport {
            label: r.label,
            entropy: r.entropy,
            kl: r.kl,
            mean_final_distance: r.mean_final_distance,
            arrival_rate: r.arrival_rate,
            mean_cost: r.mean_cost,
            n_rollouts: r.n_rollouts,
            seed: r.seed,
        })
        .collect())
}

/// Decision table of a region policy: one column per comparator (named
/// `a/b`, value 1 when source `a` is at least as near), then the mode.
pub fn logic_table(policy: &RegionPolicy) -> String {
    let mut out = String::new();
    let names: Vec<String> = policy.sensors.comparators().iter().map(|c| c.to_string()).collect();
    let width = names.iter().map(|n| n.len()).max().unwrap_or(1).max(1);
    for n in &names {
        let _ = write!(out, "{n:>width$} ");
    }
    out.push_str("| mode\n");
    for r in &policy.regions {
        for i in 0..names.len() {
            let _ = write!(out, "{:>width$} ", u8::from(r.signature.bit(i)));
        }
        let _ = write!(out, "| {}", r.mode);
        if r.fallback {
            out.push_str(" *");
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
