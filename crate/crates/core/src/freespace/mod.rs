//! Bird's-eye freespace: sparse LiDAR classification into ground, obstacle
//! and unobserved cells, completion along polar rays from the camera, and
//! uniform sampling of placement positions.

pub mod map;
pub mod polar;

pub use map::{build_sparse_freespace, sample_valid_positions, CellState, FreespaceConfig, FreespaceMap};
pub use polar::{complete_freespace, complete_polar, to_cartesian, to_polar, PolarFreespace, ANGLE_BINS};
