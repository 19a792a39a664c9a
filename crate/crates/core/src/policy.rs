//! State-feedback policies tabulated on a uniform grid over the workspace.

use serde::{Deserialize, Serialize};

use crate::dynamics::{CellState, ControlMode, Controller, SourceLayout, Workspace};
use crate::error::{Error, Result};

/// Mode assignment per grid cell. Cells are stored row-major with `x`
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGrid {
    nx: usize,
    ny: usize,
    workspace: Workspace,
    cells: Vec<ControlMode>,
}

impl PolicyGrid {
    pub fn uniform(nx: usize, ny: usize, workspace: Workspace, mode: ControlMode) -> Self {
        assert!(nx > 0 && ny > 0, "grid needs at least one cell per axis");
        Self { nx, ny, workspace, cells: vec![mode; nx * ny] }
    }

    pub fn from_cells(nx: usize, ny: usize, workspace: Workspace, cells: Vec<ControlMode>) -> Result<Self> {
        if nx == 0 || ny == 0 || cells.len() != nx * ny {
            return Err(Error::InvalidParameter(format!("{} cells do not fill a {nx}x{ny} grid", cells.len())));
        }
        Ok(Self { nx, ny, workspace, cells })
    }

    /// Builds a grid by evaluating `f` at every cell center.
    pub fn from_fn(nx: usize, ny: usize, workspace: Workspace, f: impl Fn([f64; 2]) -> ControlMode) -> Self {
        let mut grid = Self::uniform(nx, ny, workspace, ControlMode::ZERO);
        for iy in 0..ny {
            for ix in 0..nx {
                let c = grid.center(ix, iy);
                grid.cells[iy * nx + ix] = f(c);
            }
        }
        grid
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn cells(&self) -> &[ControlMode] {
        &self.cells
    }

    pub fn cell_width(&self) -> f64 {
        self.workspace.width() / self.nx as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.workspace.height() / self.ny as f64
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.workspace.x_min + (ix as f64 + 0.5) * self.cell_width(),
            self.workspace.y_min + (iy as f64 + 0.5) * self.cell_height(),
        ]
    }

    pub fn center_of(&self, index: usize) -> [f64; 2] {
        let (ix, iy) = self.coords(index);
        self.center(ix, iy)
    }

    /// Cell containing `p`; positions outside the workspace are clamped.
    pub fn locate(&self, p: [f64; 2]) -> (usize, usize) {
        let ws = &self.workspace;
        let fx = ((p[0] - ws.x_min) / ws.width() * self.nx as f64).floor();
        let fy = ((p[1] - ws.y_min) / ws.height() * self.ny as f64).floor();
        let ix = if fx.is_nan() { 0.0 } else { fx.clamp(0.0, (self.nx - 1) as f64) };
        let iy = if fy.is_nan() { 0.0 } else { fy.clamp(0.0, (self.ny - 1) as f64) };
        (ix as usize, iy as usize)
    }

    pub fn mode_at(&self, p: [f64; 2]) -> ControlMode {
        let (ix, iy) = self.locate(p);
        self.cells[self.index(ix, iy)]
    }

    pub fn get(&self, ix: usize, iy: usize) -> ControlMode {
        self.cells[self.index(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, mode: ControlMode) {
        let i = self.index(ix, iy);
        self.cells[i] = mode;
    }

    pub fn set_index(&mut self, index: usize, mode: ControlMode) {
        self.cells[index] = mode;
    }

    pub fn validate(&self, layout: &SourceLayout) -> Result<()> {
        self.cells.iter().try_for_each(|m| layout.validate_mode(m))
    }

    /// Number of cells whose modes differ from `other` (same shape assumed).
    pub fn diff_count(&self, other: &PolicyGrid) -> usize {
        self.cells.iter().zip(&other.cells).filter(|(a, b)| a != b).count()
    }

    /// Distinct modes in the policy, in first-seen order.
    pub fn distinct_modes(&self) -> Vec<ControlMode> {
        let mut seen: Vec<ControlMode> = Vec::new();
        for m in &self.cells {
            if !seen.contains(m) {
                seen.push(*m);
            }
        }
        seen
    }
}

impl Controller for PolicyGrid {
    fn control(&self, s: &CellState) -> ControlMode {
        self.mode_at(s.position())
    }
}
