//! On-disk formats.

pub mod binary;
pub mod kitti;
pub mod png;

pub use binary::{read_grid, read_points, write_grid, write_points};
