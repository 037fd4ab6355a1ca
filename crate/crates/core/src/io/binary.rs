//! Little-endian binary formats: `SFDG` float grids and `SFPT` textured points.
//!
//! ```text
//! SFDG: "SFDG" u32 height u32 width u32 reserved, then height·width f32 (row-major)
//! SFPT: "SFPT" u32 k, then k×3 f32 positions, then k×3 u8 colors
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Grid, TexturedPointSet, Vec3};
use crate::Real;

pub const GRID_MAGIC: &[u8; 4] = b"SFDG";
pub const POINTS_MAGIC: &[u8; 4] = b"SFPT";

pub fn encode_grid<T: Real>(grid: &DepthMap<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + grid.as_slice().len() * 4);
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &z in grid.as_slice() {
        out.extend_from_slice(&(z.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

pub fn decode_grid<T: Real>(bytes: &[u8], path: &Path) -> Result<DepthMap<T>> {
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 || &bytes[0..4] != GRID_MAGIC {
        return Err(bad("missing SFDG header".into()));
    }
    let height = u32_at(bytes, 4) as usize;
    let width = u32_at(bytes, 8) as usize;
    let expected = 16 + width * height * 4;
    if bytes.len() != expected {
        return Err(bad(format!(
            "{width}x{height} grid needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Grid::from_vec(width, height, data)
}

pub fn write_grid<T: Real>(path: &Path, grid: &DepthMap<T>) -> Result<()> {
    write_bytes(path, &encode_grid(grid))
}

pub fn read_grid<T: Real>(path: &Path) -> Result<DepthMap<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes, path)
}

pub fn encode_points<T: Real>(set: &TexturedPointSet<T>) -> Vec<u8> {
    let k = set.len();
    let mut out = Vec::with_capacity(8 + k * 15);
    out.extend_from_slice(POINTS_MAGIC);
    out.extend_from_slice(&(k as u32).to_le_bytes());
    for p in set.positions() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    for rgb in set.colors() {
        out.extend_from_slice(rgb);
    }
    out
}

pub fn decode_points<T: Real>(bytes: &[u8], path: &Path) -> Result<TexturedPointSet<T>> {
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 8 || &bytes[0..4] != POINTS_MAGIC {
        return Err(bad("missing SFPT header".into()));
    }
    let k = u32_at(bytes, 4) as usize;
    if bytes.len() != 8 + k * 15 {
        return Err(bad(format!("{k} points need {} bytes", 8 + k * 15)));
    }
    let f = |i: usize| {
        let o = 8 + i * 4;
        T::of(f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64)
    };
    let positions = (0..k)
        .map(|i| Vec3::new(f(3 * i), f(3 * i + 1), f(3 * i + 2)))
        .collect();
    let base = 8 + k * 12;
    let colors = (0..k)
        .map(|i| {
            let o = base + 3 * i;
            [bytes[o], bytes[o + 1], bytes[o + 2]]
        })
        .collect();
    TexturedPointSet::new(positions, colors).map_err(|e| bad(e.to_string()))
}

pub fn write_points<T: Real>(path: &Path, set: &TexturedPointSet<T>) -> Result<()> {
    write_bytes(path, &encode_points(set))
}

pub fn read_points<T: Real>(path: &Path) -> Result<TexturedPointSet<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_points(&bytes, path)
}

pub(crate) fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
