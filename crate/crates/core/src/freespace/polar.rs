use std::f64::consts::PI;

use super::map::{CellState, FreespaceMap};
use crate::error::Result;
use crate::geometry::Grid;

pub const ANGLE_BINS: usize = 180;

/// Freespace resampled around the camera: row `j` is the ray at angle
/// `(j + 0.5)·180°/α` from the +x axis, column `i` the radial bin `[i, i+1)`
/// in cell units.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarFreespace {
    bins: Grid<CellState>,
}

impl PolarFreespace {
    pub fn angle_bins(&self) -> usize {
        self.bins.height()
    }

    pub fn radial_bins(&self) -> usize {
        self.bins.width()
    }

    pub fn get(&self, i: usize, j: usize) -> CellState {
        *self.bins.get(i, j)
    }

    pub fn row(&self, j: usize) -> &[CellState] {
        let r = self.radial_bins();
        &self.bins.as_slice()[j * r..(j + 1) * r]
    }

    pub fn from_rows(rows: Vec<Vec<CellState>>) -> Result<Self> {
        let r = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let bins = Grid::from_vec(r, n, rows.into_iter().flatten().collect())?;
        Ok(Self { bins })
    }

    pub fn count(&self, state: CellState) -> usize {
        self.bins.as_slice().iter().filter(|&&s| s == state).count()
    }
}

/// `ceil(√((w/2)² + h²))`.
pub fn radial_bin_count(map: &FreespaceMap) -> usize {
    let half_w = map.cols() as f64 / 2.0;
    let h = map.rows() as f64;
    (half_w * half_w + h * h).sqrt().ceil() as usize
}

pub fn bin_angle(j: usize, angle_bins: usize) -> f64 {
    (j as f64 + 0.5) * PI / angle_bins as f64
}

/// Nearest-cell resampling of the map along camera rays.
pub fn to_polar(map: &FreespaceMap) -> PolarFreespace {
    let r = radial_bin_count(map);
    let cam_x = map.cols() as f64 / 2.0;
    let cam_y = map.rows() as f64;
    let mut bins = Grid::filled(r, ANGLE_BINS, CellState::Empty);
    for j in 0..ANGLE_BINS {
        let (sin, cos) = bin_angle(j, ANGLE_BINS).sin_cos();
        for i in 0..r {
            let rho = i as f64 + 0.5;
            let gx = (cam_x + rho * cos).floor();
            let gy = (cam_y - rho * sin).floor();
            if gx >= 0.0 && gy >= 0.0 && gx < map.cols() as f64 && gy < map.rows() as f64 {
                bins.set(i, j, map.get(gy as usize, gx as usize));
            }
        }
    }
    PolarFreespace { bins }
}

/// Seeds every ray with INVALID at the camera and lets each EMPTY bin inherit
/// the state of its predecessor along the ray.
pub fn complete_polar(polar: &PolarFreespace) -> PolarFreespace {
    let mut bins = polar.bins.clone();
    let r = bins.width();
    if r == 0 {
        return PolarFreespace { bins };
    }
    for row in bins.as_mut_slice().chunks_exact_mut(r) {
        row[0] = CellState::Invalid;
        for i in 1..r {
            if row[i] == CellState::Empty {
                row[i] = row[i - 1];
            }
        }
    }
    PolarFreespace { bins }
}

/// Polar bin `(i, j)` read by Cartesian cell `(row, col)`.
pub fn polar_bin_of(map: &FreespaceMap, row: usize, col: usize, angle_bins: usize, radial_bins: usize) -> (usize, usize) {
    let dx = col as f64 + 0.5 - map.cols() as f64 / 2.0;
    let dy = map.rows() as f64 - (row as f64 + 0.5);
    let rho = (dx * dx + dy * dy).sqrt();
    let angle = dy.atan2(dx);
    let j = ((angle * angle_bins as f64 / PI).floor().max(0.0) as usize).min(angle_bins - 1);
    let i = (rho.floor() as usize).min(radial_bins - 1);
    (i, j)
}

/// Each Cartesian cell takes the state of the polar bin containing its center.
pub fn to_cartesian(polar: &PolarFreespace, template: &FreespaceMap) -> Result<FreespaceMap> {
    let (alpha, r) = (polar.angle_bins(), polar.radial_bins());
    let cells = Grid::from_fn(template.cols(), template.rows(), |col, row| {
        let (i, j) = polar_bin_of(template, row, col, alpha, r);
        polar.get(i, j)
    });
    FreespaceMap::from_cells(cells, template.resolution())
}

/// Sparse map to dense placeable-region map.
pub fn complete_freespace(sparse: &FreespaceMap) -> Result<FreespaceMap> {
    to_cartesian(&complete_polar(&to_polar(sparse)), sparse)
}
