//! Re-rendering a textured depth frame under a rigid camera motion.

use super::pose::{perturbation_matrix, PerturbConfig, PosePerturbation, RigidTransform};
use crate::error::Result;
use crate::geometry::{CameraIntrinsics, ColorImage, DepthMap, GroundPlane, Grid, Mask, Rgb, Vec3};
use crate::recompose::RecomposedFrame;
use crate::scene::empty::camera_dims_match;
use crate::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView<T> {
    pub image: ColorImage,
    pub depth: DepthMap<T>,
    /// Pixels written directly by a projected point.
    pub splat: Mask,
}

/// `x.round()` for `x > -0.5`, without a libm call.
#[inline]
fn round_index(x: f64) -> usize {
    let t = (x + 0.5) as usize;
    if t as f64 - x > 0.5 {
        t - 1
    } else {
        t
    }
}

/// Moves every observed pixel of `(image, depth)` by `transform` and splats
/// it back with nearest-depth-wins. Infinitely far pixels move as directions
/// and keep infinite depth; unobserved pixels are skipped.
pub fn splat_transformed<T: Real>(
    image: &ColorImage,
    depth: &DepthMap<T>,
    camera: &CameraIntrinsics<T>,
    transform: &RigidTransform<T>,
) -> Result<RenderedView<T>> {
    camera_dims_match(depth, camera)?;
    depth.ensure_dims(image)?;
    let (w, h) = depth.dims();
    let r = &transform.rotation.m;
    let col = |j: usize| Vec3::new(r[0][j], r[1][j], r[2][j]);
    let (c0, c1, c2) = (col(0), col(1), col(2));
    let row_sign = camera.axis.row_sign::<T>();
    // R·ray(u, v) = a_u·R₀ + (b_v·R₁ + R₂)
    let col_terms: Vec<Vec3<T>> = (0..w)
        .map(|u| c0 * ((T::from_usize(u).unwrap() - camera.cx) / camera.fx))
        .collect();
    let row_terms: Vec<Vec3<T>> = (0..h)
        .map(|v| c1 * (row_sign * (T::from_usize(v).unwrap() - camera.cy) / camera.fy) + c2)
        .collect();
    let t = transform.translation;
    let (wf, hf) = (w as f64, h as f64);
    let (fx, fy, cx, cy) = (camera.fx, camera.fy, camera.cx, camera.cy);
    let mut out_depth = vec![T::zero(); w * h];
    let mut out_color = vec![[0u8; 3]; w * h];
    let src_depth = depth.as_slice();
    let src_color = image.as_slice();
    let (t0, t1, t2) = (t.x, t.y, t.z);
    let (lo_u, lo_v, hi_u, hi_v) = (-0.5, -0.5, wf - 0.5, hf - 0.5);
    for (v, b) in row_terms.iter().enumerate() {
        let row = v * w;
        let depth_row = &src_depth[row..row + w];
        for (u, (a, &z)) in col_terms.iter().zip(depth_row).enumerate() {
            if z == T::zero() {
                continue;
            }
            let (dx, dy, dz) = (a.x + b.x, a.y + b.y, a.z + b.z);
            let (px, py, pz, zz) = if z.is_finite() {
                let pz = dz * z + t2;
                (dx * z + t0, dy * z + t1, pz, pz)
            } else {
                (dx, dy, dz, T::infinity())
            };
            if !(pz > T::zero()) {
                continue;
            }
            let inv = T::one() / pz;
            let uf = (fx * px * inv + cx).to_f64_lossy();
            let vf = (row_sign * fy * py * inv + cy).to_f64_lossy();
            if !(uf > lo_u && vf > lo_v && uf < hi_u && vf < hi_v) {
                continue;
            }
            let j = round_index(vf) * w + round_index(uf);
            let cur = out_depth[j];
            if cur == T::zero() || zz < cur {
                out_depth[j] = zz;
                out_color[j] = src_color[row + u];
            }
        }
    }
    let splat = Grid::from_vec(w, h, out_depth.iter().map(|&z| z != T::zero()).collect())?;
    Ok(RenderedView {
        image: Grid::from_vec(w, h, out_color)?,
        depth: Grid::from_vec(w, h, out_depth)?,
        splat,
    })
}

/// Every pixel without a splat takes color and depth of the nearest-depth
/// splatted pixel in its `kernel × kernel` window, if any. Returns the mask of
/// filled pixels.
pub fn pool_fill<T: Real>(view: &mut RenderedView<T>, kernel: usize) -> Mask {
    let (w, h) = view.depth.dims();
    let r = kernel / 2;
    let mut filled = vec![false; w * h];
    let depth = view.depth.as_slice().to_vec();
    let splat = view.splat.as_slice();
    let out_depth = view.depth.as_mut_slice();
    let out_color = view.image.as_mut_slice();
    for v in 0..h {
        let (v0, v1) = (v.saturating_sub(r), (v + r).min(h - 1));
        for (u, _) in splat[v * w..(v + 1) * w].iter().enumerate().filter(|(_, &s)| !s) {
            let (u0, u1) = (u.saturating_sub(r), (u + r).min(w - 1));
            let mut best: Option<(T, usize)> = None;
            for nv in v0..=v1 {
                for j in nv * w + u0..=nv * w + u1 {
                    if splat[j] && best.map_or(true, |(z, _)| depth[j] < z) {
                        best = Some((depth[j], j));
                    }
                }
            }
            if let Some((z, j)) = best {
                let i = v * w + u;
                out_depth[i] = z;
                out_color[i] = out_color[j];
                filled[i] = true;
            }
        }
    }
    Grid::from_vec(w, h, filled).expect("same dimensions")
}

/// Gaussian smoothing restricted to the filled pixels. Each output averages
/// its non-empty window neighbors with renormalized weights; depth averages
/// finite neighbors only and infinite pixels stay infinite.
pub fn smooth_filled<T: Real>(view: &mut RenderedView<T>, filled: &Mask, kernel: usize, sigma: f64) {
    let (w, h) = view.depth.dims();
    let r = (kernel / 2) as i64;
    let weights: Vec<f64> = (-r..=r)
        .flat_map(|dv| (-r..=r).map(move |du| (-((du * du + dv * dv) as f64) / (2.0 * sigma * sigma)).exp()))
        .collect();
    let depth = view.depth.as_slice().to_vec();
    let color = view.image.as_slice().to_vec();
    let k = (2 * r + 1) as usize;
    for v in 0..h {
        for u in 0..w {
            if !*filled.get(u, v) {
                continue;
            }
            let (mut cw, mut csum) = (0.0, [0.0f64; 3]);
            let (mut dw, mut dsum) = (0.0, 0.0);
            for dv in -r..=r {
                let nv = v as i64 + dv;
                if nv < 0 || nv >= h as i64 {
                    continue;
                }
                for du in -r..=r {
                    let nu = u as i64 + du;
                    if nu < 0 || nu >= w as i64 {
                        continue;
                    }
                    let j = nv as usize * w + nu as usize;
                    let z = depth[j];
                    if z == T::zero() {
                        continue;
                    }
                    let wt = weights[(dv + r) as usize * k + (du + r) as usize];
                    cw += wt;
                    for (s, c) in csum.iter_mut().zip(color[j]) {
                        *s += wt * c as f64;
                    }
                    if z.is_finite() {
                        dw += wt;
                        dsum += wt * z.to_f64_lossy();
                    }
                }
            }
            let rgb: Rgb = csum.map(|s| (s / cw).round().clamp(0.0, 255.0) as u8);
            view.image.set(u, v, rgb);
            if depth[v * w + u].is_finite() && dw > 0.0 {
                view.depth.set(u, v, T::of(dsum / dw));
            }
        }
    }
}

/// Splat, window fill, smoothing of filled pixels; splatted pixels keep their
/// values.
pub fn render_perturbed<T: Real>(
    image: &ColorImage,
    depth: &DepthMap<T>,
    camera: &CameraIntrinsics<T>,
    transform: &RigidTransform<T>,
    config: &PerturbConfig,
) -> Result<RenderedView<T>> {
    let mut view = splat_transformed(image, depth, camera, transform)?;
    let filled = pool_fill(&mut view, config.kernel);
    smooth_filled(&mut view, &filled, config.kernel, config.sigma);
    Ok(view)
}

/// Zero-depth pixels whose ray meets the ground in front of the camera copy
/// the nearest non-zero pixel of their column, searching downward first.
/// Columns with no non-zero pixel at all (image edges after zooming out)
/// then copy the nearest non-zero pixel of their row after the column pass,
/// left on ties.
pub fn fill_ground_holes<T: Real>(
    image: &mut ColorImage,
    depth: &mut DepthMap<T>,
    plane: &GroundPlane<T>,
    camera: &CameraIntrinsics<T>,
) -> Result<usize> {
    camera_dims_match(depth, camera)?;
    depth.ensure_dims(image)?;
    let n = GroundPlane::new(plane.a, plane.b, plane.c, plane.d)?.normal();
    let (w, h) = depth.dims();
    let src_depth = depth.as_slice().to_vec();
    let src_color = image.as_slice().to_vec();
    // Holes under the ground, each with the nearest non-zero row above it.
    let eps = T::of(1e-12);
    let mut above = vec![usize::MAX; w];
    let mut holes: Vec<(usize, usize, usize)> = Vec::new();
    for v in 0..h {
        for u in 0..w {
            if src_depth[v * w + u] != T::zero() {
                above[u] = v;
                continue;
            }
            let ray = camera.ray(T::from_usize(u).unwrap(), T::from_usize(v).unwrap());
            let denom = n.dot(ray);
            if denom.abs() < eps || !(-plane.d / denom > T::zero()) {
                continue;
            }
            holes.push((u, v, above[u]));
        }
    }
    // Bottom-up sweep for the nearest non-zero row below, searched first.
    let mut below = vec![usize::MAX; w];
    let mut sources = vec![usize::MAX; holes.len()];
    let mut k = holes.len();
    for v in (0..h).rev() {
        for u in 0..w {
            if src_depth[v * w + u] != T::zero() {
                below[u] = v;
            }
        }
        while k > 0 && holes[k - 1].1 == v {
            k -= 1;
            let (u, _, up) = holes[k];
            sources[k] = if below[u] != usize::MAX { below[u] } else { up };
        }
    }
    let mut filled = 0;
    let mut unresolved = Vec::new();
    for (&(u, v, _), &src) in holes.iter().zip(&sources) {
        if src == usize::MAX {
            unresolved.push((u, v));
            continue;
        }
        let j = src * w + u;
        depth.set(u, v, src_depth[j]);
        image.set(u, v, src_color[j]);
        filled += 1;
    }
    for (u, v) in unresolved {
        let row = depth.as_slice()[v * w..(v + 1) * w].to_vec();
        let source = (1..w).find_map(|d| {
            let left = u.checked_sub(d).filter(|&x| row[x] != T::zero());
            let right = Some(u + d).filter(|&x| x < w && row[x] != T::zero());
            left.or(right)
        });
        if let Some(x) = source {
            depth.set(u, v, row[x]);
            let c = *image.get(x, v);
            image.set(u, v, c);
            filled += 1;
        }
    }
    Ok(filled)
}

/// Full perturbation of a composed frame: transform, re-render, fill ground
/// holes under the moved plane and move the label positions.
pub fn perturb_frame<T: Real>(
    frame: &RecomposedFrame<T>,
    pose: &PosePerturbation<T>,
    config: &PerturbConfig,
) -> Result<RecomposedFrame<T>> {
    transform_frame(frame, &perturbation_matrix(pose), config)
}

pub fn transform_frame<T: Real>(
    frame: &RecomposedFrame<T>,
    transform: &RigidTransform<T>,
    config: &PerturbConfig,
) -> Result<RecomposedFrame<T>> {
    config.validate()?;
    let mut view = render_perturbed(&frame.image, &frame.depth, &frame.camera, transform, config)?;
    let plane = frame.plane.transformed(&transform.rotation, transform.translation)?;
    fill_ground_holes(&mut view.image, &mut view.depth, &plane, &frame.camera)?;
    let labels = frame
        .labels
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.position = transform.apply(b.position);
            b
        })
        .collect();
    Ok(RecomposedFrame {
        scene_id: frame.scene_id.clone(),
        kind: frame.kind,
        image: view.image,
        depth: view.depth,
        camera: frame.camera,
        plane,
        labels,
        n_existing: frame.n_existing,
        report: frame.report.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VerticalAxis;
    use crate::scene::{ground_depth, SceneKind};

    /// Flat ground below a distant wall at 60 m: gap-free.
    fn ground_frame() -> RecomposedFrame<f64> {
        ground_frame_sized(96)
    }

    fn ground_frame_sized(height: usize) -> RecomposedFrame<f64> {
        let k = CameraIntrinsics::new(300.0, 300.0, 80.0, 40.0, 160, height, VerticalAxis::YUp).unwrap();
        let plane = GroundPlane::level(1.65, VerticalAxis::YUp);
        let g = ground_depth(&plane, &k).unwrap();
        let depth = g.map(|&z| if z < 60.0 { z } else { 60.0 });
        let image = Grid::from_fn(160, height, |u, v| [(u % 256) as u8, (v % 128 * 2) as u8, 50]);
        RecomposedFrame {
            scene_id: "g".into(),
            kind: SceneKind::Empty,
            image,
            depth,
            camera: k,
            plane,
            labels: Vec::new(),
            n_existing: 0,
            report: Default::default(),
        }
    }

    #[test]
    fn identity_is_bitwise() {
        let f = ground_frame();
        let out = perturb_frame(&f, &PosePerturbation::default(), &PerturbConfig::default()).unwrap();
        assert_eq!(out.image, f.image);
        assert_eq!(out.depth, f.depth);
    }

    #[test]
    fn zoom_out_leaves_no_ground_holes() {
        let f = ground_frame();
        let pose = PosePerturbation { theta: 0.0, alpha: 0.0, eps_z: 2.0 };
        let out = perturb_frame(&f, &pose, &PerturbConfig::default()).unwrap();
        let horizon = 40;
        for v in horizon + 1..96 {
            for u in 0..160 {
                assert!(*out.depth.get(u, v) > 0.0, "hole at ({u}, {v})");
            }
        }
    }

    #[test]
    fn single_ground_hole_copies_pixel_below() {
        let f = ground_frame();
        let mut depth = f.depth.clone();
        let mut image = f.image.clone();
        depth.set(10, 70, 0.0);
        let n = fill_ground_holes(&mut image, &mut depth, &f.plane, &f.camera).unwrap();
        assert_eq!(n, 1);
        assert_eq!(*depth.get(10, 70), *f.depth.get(10, 71));
        assert_eq!(*image.get(10, 70), *f.image.get(10, 71));
        let mut untouched = f.depth.clone();
        let mut img = f.image.clone();
        assert_eq!(fill_ground_holes(&mut img, &mut untouched, &f.plane, &f.camera).unwrap(), 0);
        assert_eq!(untouched, f.depth);
    }

    #[test]
    fn holes_above_horizon_stay() {
        let f = ground_frame();
        let mut depth = f.depth.clone();
        let mut image = f.image.clone();
        depth.set(10, 5, 0.0);
        assert_eq!(fill_ground_holes(&mut image, &mut depth, &f.plane, &f.camera).unwrap(), 0);
    }

    #[test]
    fn pool_fill_prefers_nearest_surface() {
        let mut view = RenderedView {
            image: Grid::from_fn(3, 3, |u, _| [u as u8; 3]),
            depth: Grid::from_vec(3, 3, vec![5.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0]).unwrap(),
            splat: Grid::from_vec(3, 3, vec![true, false, true, false, false, false, false, false, true]).unwrap(),
        };
        let filled = pool_fill(&mut view, 3);
        // (0, 2) has no splatted pixel in its window.
        assert_eq!(filled.count(), 5);
        assert_eq!(*view.depth.get(1, 1), 5.0);
        assert_eq!(*view.depth.get(2, 1), 7.0);
    }

    #[test]
    fn tilted_ground_center_column() {
        let f = ground_frame_sized(200);
        let pose = PosePerturbation::from_degrees(1.5, 0.0, 0.0);
        let out = perturb_frame(&f, &pose, &PerturbConfig::default()).unwrap();
        let g = ground_depth(&out.plane, &out.camera).unwrap();
        let mut checked = 0;
        for v in 50..200 {
            let (z, e) = (*out.depth.get(80, v), *g.get(80, v));
            // Rounding to a pixel row shifts depth by up to half a row,
            // z²/(2·h·f); keep rows where that is below 1%.
            if e.is_finite() && e < 0.02 * 1.65 * 300.0 {
                assert!((z - e).abs() / e < 0.01, "row {v}: {z} vs {e}");
                checked += 1;
            }
        }
        assert!(checked > 20);
    }
}
