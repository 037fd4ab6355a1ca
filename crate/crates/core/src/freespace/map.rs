use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, GroundPlane, Grid, Vec3, VerticalAxis};
use crate::io::binary::{u32_at, write_bytes};
use crate::Real;

pub const FREESPACE_MAGIC: &[u8; 4] = b"SFFS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellState {
    #[default]
    Empty = 0,
    Valid = 1,
    Invalid = 2,
}

impl CellState {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Empty),
            1 => Some(Self::Valid),
            2 => Some(Self::Invalid),
            _ => None,
        }
    }

    /// Merges two observations of one cell; obstacles dominate ground,
    /// which dominates no observation.
    pub fn merge(self, other: Self) -> Self {
        if other as u8 > self as u8 {
            other
        } else {
            self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreespaceConfig {
    /// Grid rows (forward extent).
    pub rows: usize,
    /// Grid columns (lateral extent).
    pub cols: usize,
    /// Cell size in meters.
    pub resolution: f64,
    /// Points up to this height above the plane count as ground.
    pub ground_band: f64,
}

impl Default for FreespaceConfig {
    fn default() -> Self {
        Self {
            rows: 140,
            cols: 160,
            resolution: 0.5,
            ground_band: 0.3,
        }
    }
}

/// Bird's-eye occupancy grid. Row 0 is the far edge; the camera sits at grid
/// point `(cols/2, rows)` looking toward decreasing rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FreespaceMap {
    cells: Grid<CellState>,
    resolution: f64,
}

impl FreespaceMap {
    pub fn new(rows: usize, cols: usize, resolution: f64) -> Result<Self> {
        if rows == 0 || cols == 0 || !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Invalid(format!(
                "freespace grid {rows}x{cols} at {resolution} m/cell"
            )));
        }
        Ok(Self {
            cells: Grid::filled(cols, rows, CellState::Empty),
            resolution,
        })
    }

    pub fn from_cells(cells: Grid<CellState>, resolution: f64) -> Result<Self> {
        let mut map = Self::new(cells.height(), cells.width(), resolution)?;
        map.cells = cells;
        Ok(map)
    }

    pub fn rows(&self) -> usize {
        self.cells.height()
    }

    pub fn cols(&self) -> usize {
        self.cells.width()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &Grid<CellState> {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> CellState {
        *self.cells.get(col, row)
    }

    pub fn set(&mut self, row: usize, col: usize, state: CellState) {
        self.cells.set(col, row, state);
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.as_slice().iter().filter(|&&s| s == state).count()
    }

    /// Cell containing BEV point `(x, z)`, if inside the grid.
    pub fn cell_of<T: Real>(&self, x: T, z: T) -> Option<(usize, usize)> {
        let r = self.resolution;
        let col = (x.to_f64_lossy() / r + self.cols() as f64 / 2.0).floor();
        let row = (self.rows() as f64 - z.to_f64_lossy() / r).floor();
        if col < 0.0 || row < 0.0 || col >= self.cols() as f64 || row >= self.rows() as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    /// Metric BEV center `(x, z)` of a cell.
    pub fn cell_center<T: Real>(&self, row: usize, col: usize) -> (T, T) {
        let r = self.resolution;
        let x = (col as f64 - self.cols() as f64 / 2.0 + 0.5) * r;
        let z = (self.rows() as f64 - row as f64 - 0.5) * r;
        (T::of(x), T::of(z))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.cells.as_slice().len());
        out.extend_from_slice(FREESPACE_MAGIC);
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols() as u32).to_le_bytes());
        out.extend_from_slice(&(self.resolution as f32).to_le_bytes());
        out.extend(self.cells.as_slice().iter().map(|&s| s as u8));
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Format {
            path: path.to_path_buf(),
            msg,
        };
        if bytes.len() < 16 || &bytes[0..4] != FREESPACE_MAGIC {
            return Err(bad("missing SFFS header".into()));
        }
        let rows = u32_at(bytes, 4) as usize;
        let cols = u32_at(bytes, 8) as usize;
        let resolution = f32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]) as f64;
        if bytes.len() != 16 + rows * cols {
            return Err(bad(format!("{rows}x{cols} map needs {} bytes, file has {}", 16 + rows * cols, bytes.len())));
        }
        let states = bytes[16..]
            .iter()
            .map(|&b| CellState::from_u8(b).ok_or_else(|| bad(format!("unknown cell state {b}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_cells(Grid::from_vec(cols, rows, states)?, resolution)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

/// Classifies LiDAR returns into a sparse BEV map.
///
/// Returns inside a labeled box are dropped onto the plane and mark ground, so
/// the footprint of removed objects becomes placeable. Other returns mark
/// ground up to `ground_band` above the plane and obstacles above it.
pub fn build_sparse_freespace<T: Real>(
    lidar: &[Vec3<T>],
    plane: &GroundPlane<T>,
    labels: &[Box3D<T>],
    axis: VerticalAxis,
    config: &FreespaceConfig,
) -> Result<FreespaceMap> {
    if lidar.is_empty() {
        return Err(Error::Invalid("freespace needs at least one LiDAR point".into()));
    }
    let mut map = FreespaceMap::new(config.rows, config.cols, config.resolution)?;
    let band = T::of(config.ground_band);
    for &p in lidar {
        let (q, state) = if labels.iter().any(|b| b.contains(p, T::zero(), axis)) {
            (plane.project_onto(p), CellState::Valid)
        } else if plane.height_above(p, axis) <= band {
            (p, CellState::Valid)
        } else {
            (p, CellState::Invalid)
        };
        if let Some((row, col)) = map.cell_of(q.x, q.z) {
            let merged = map.get(row, col).merge(state);
            map.set(row, col, merged);
        }
    }
    Ok(map)
}

/// Draws `n` VALID cells uniformly with replacement and jitters each cell
/// center uniformly within the open cell.
pub fn sample_valid_positions<T: Real, R: Rng + ?Sized>(
    map: &FreespaceMap,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(T, T)>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let valid: Vec<(usize, usize)> = (0..map.rows())
        .flat_map(|row| (0..map.cols()).map(move |col| (row, col)))
        .filter(|&(row, col)| map.get(row, col) == CellState::Valid)
        .collect();
    if valid.is_empty() {
        return Err(Error::Sampling("freespace map has no VALID cell".into()));
    }
    let half = map.resolution() / 2.0;
    let jitter = |rng: &mut R| loop {
        let j: f64 = rng.gen_range(-half..half);
        if j != -half {
            return j;
        }
    };
    Ok((0..n)
        .map(|_| {
            let (row, col) = valid[rng.gen_range(0..valid.len())];
            let (x, z) = map.cell_center::<f64>(row, col);
            let x = x + jitter(rng);
            let z = z + jitter(rng);
            (T::of(x), T::of(z))
        })
        .collect())
}
