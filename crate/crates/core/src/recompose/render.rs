//! Texture-point rendering of object models into image-space patches and
//! z-buffer compositing.

use crate::error::{Error, Result};
use crate::geometry::morph::fill_holes;
use crate::geometry::{CameraIntrinsics, ColorImage, DepthMap, Grid, Rgb, TexturedPointSet, Vec3};
use crate::Real;

/// Rendered object confined to its image-space bounding window.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch<T> {
    /// Window origin in image pixels.
    pub u0: usize,
    pub v0: usize,
    /// Per window pixel: depth (INF off the mask), color, hole-filled mask
    /// and the directly splatted subset.
    pub depth: Grid<T>,
    pub color: Grid<Rgb>,
    pub mask: Grid<bool>,
    pub splat: Grid<bool>,
}

impl<T: Real> Patch<T> {
    pub fn area(&self) -> usize {
        self.mask.count()
    }

    /// Image pixels covered by the mask as `(u, v, depth, color)`, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize, T, Rgb)> + '_ {
        let w = self.mask.width();
        self.mask
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(i, _)| {
                (
                    self.u0 + i % w,
                    self.v0 + i / w,
                    self.depth.as_slice()[i],
                    self.color.as_slice()[i],
                )
            })
    }

    /// Mean image position of the splatted pixels.
    pub fn splat_centroid(&self) -> (f64, f64) {
        let w = self.splat.width();
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        for (i, _) in self.splat.as_slice().iter().enumerate().filter(|(_, &s)| s) {
            su += (self.u0 + i % w) as f64;
            sv += (self.v0 + i / w) as f64;
            n += 1.0;
        }
        (su / n, sv / n)
    }
}

/// Renders `positions + offset` with per-point colors.
///
/// Points are splatted with nearest-depth-wins; pixels enclosed by the splat
/// but not hit take color and depth of the nearest splatted pixel (Euclidean
/// in the image, ties to the lowest `(v, u)`).
pub fn render_points<T: Real>(
    positions: &[Vec3<T>],
    colors: &[Rgb],
    offset: Vec3<T>,
    camera: &CameraIntrinsics<T>,
) -> Result<Patch<T>> {
    if positions.len() != colors.len() {
        return Err(Error::dims(positions.len(), colors.len()));
    }
    let mut hits: Vec<(usize, usize, T, Rgb)> = Vec::with_capacity(positions.len());
    let (mut umin, mut vmin, mut umax, mut vmax) = (usize::MAX, usize::MAX, 0, 0);
    for (&p, &c) in positions.iter().zip(colors) {
        let q = p + offset;
        if !(q.z > T::zero()) {
            continue;
        }
        let proj = camera.project_to_pixel(q);
        if !proj.in_frame {
            continue;
        }
        let (u, v) = (proj.u as usize, proj.v as usize);
        umin = umin.min(u);
        vmin = vmin.min(v);
        umax = umax.max(u);
        vmax = vmax.max(v);
        hits.push((u, v, q.z, c));
    }
    if hits.is_empty() {
        return Err(Error::Offscreen);
    }
    let (w, h) = (umax - umin + 1, vmax - vmin + 1);
    let mut depth = Grid::filled(w, h, T::infinity());
    let mut color = Grid::filled(w, h, [0u8; 3]);
    let mut splat = Grid::filled(w, h, false);
    for (u, v, z, c) in hits {
        let (lu, lv) = (u - umin, v - vmin);
        if z < *depth.get(lu, lv) {
            depth.set(lu, lv, z);
            color.set(lu, lv, c);
            splat.set(lu, lv, true);
        }
    }
    let mask = fill_holes(&splat);
    for lv in 0..h {
        for lu in 0..w {
            if *mask.get(lu, lv) && !*splat.get(lu, lv) {
                let (su, sv) = nearest_set_pixel(&splat, lu, lv);
                let (z, c) = (*depth.get(su, sv), *color.get(su, sv));
                depth.set(lu, lv, z);
                color.set(lu, lv, c);
            }
        }
    }
    Ok(Patch {
        u0: umin,
        v0: vmin,
        depth,
        color,
        mask,
        splat,
    })
}

pub fn render_object<T: Real>(model: &TexturedPointSet<T>, camera: &CameraIntrinsics<T>) -> Result<Patch<T>> {
    render_points(model.positions(), model.colors(), Vec3::zero(), camera)
}

/// Nearest `true` pixel of a non-empty mask by expanding square rings.
/// A ring at Chebyshev radius `r` holds only pixels at Euclidean distance
/// ≥ r, so the search stops once the best squared distance is below `(r+1)²`.
fn nearest_set_pixel(mask: &Grid<bool>, u: usize, v: usize) -> (usize, usize) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let (u, v) = (u as i64, v as i64);
    let mut best: Option<(i64, i64, i64)> = None;
    let max_r = w.max(h);
    for r in 1..=max_r {
        for dv in -r..=r {
            let ring_step = if dv.abs() == r { 1 } else { 2 * r };
            let mut du = -r;
            while du <= r {
                let (nu, nv) = (u + du, v + dv);
                if nu >= 0 && nv >= 0 && nu < w && nv < h && *mask.get(nu as usize, nv as usize) {
                    let cand = (du * du + dv * dv, nv, nu);
                    if best.map_or(true, |b| cand < b) {
                        best = Some(cand);
                    }
                }
                du += ring_step;
            }
        }
        if let Some((d2, _, _)) = best {
            if d2 < (r + 1) * (r + 1) {
                break;
            }
        }
    }
    let (_, nv, nu) = best.expect("mask has at least one set pixel");
    (nu as usize, nv as usize)
}

/// Writes patch pixels that are strictly nearer than the frame, or land on
/// unobserved frame pixels. Returns the number of pixels written.
pub fn zbuffer_merge<T: Real>(patch: &Patch<T>, image: &mut ColorImage, depth: &mut DepthMap<T>) -> usize {
    let mut written = 0;
    for (u, v, z, c) in patch.pixels() {
        let cur = *depth.get(u, v);
        if cur == T::zero() || z < cur {
            depth.set(u, v, z);
            image.set(u, v, c);
            written += 1;
        }
    }
    written
}
