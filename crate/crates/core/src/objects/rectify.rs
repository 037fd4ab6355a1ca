//! Edge-depth rectification of object models against LiDAR anchors.
//!
//! Completed depth maps smear object silhouettes into the background. Points
//! of the model that leave the annotated box mark a distorted region; after
//! dilation every pixel of that region takes a depth derived from the nearest
//! (image-space) LiDAR return on the object and the local depth spread of
//! that return's 3D neighbourhood.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::extract::find_outliers;
use super::record::ObjectRecord;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Grid, TexturedPointSet, Vec3};
use crate::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectifyConfig {
    /// Neighbours averaged for the rectified scale.
    pub n_nb: usize,
    pub dilation_radius: usize,
    /// Image-space search radius for anchors (pixels).
    pub anchor_radius_px: f64,
    /// Box growth (meters) for the in-box invariant and anchor eligibility.
    pub box_margin: f64,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        Self {
            n_nb: 5,
            dilation_radius: 3,
            anchor_radius_px: 15.0,
            box_margin: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RectificationReport {
    pub outliers: usize,
    pub rectified: usize,
    /// Outlier pixels with no anchor inside the search radius.
    pub dropped_no_anchor: usize,
    /// Points still outside the grown box after rectification.
    pub dropped_outside_box: usize,
}

/// Mean absolute depth difference between an anchor and its neighbours.
pub fn rectify_scale<T: Real>(anchor_z: T, neighbor_z: &[T]) -> Result<T> {
    if neighbor_z.is_empty() {
        return Err(Error::Rectification("anchor has no neighbours".into()));
    }
    let sum = neighbor_z
        .iter()
        .fold(T::zero(), |acc, &z| acc + (anchor_z - z).abs());
    Ok(sum / T::of(neighbor_z.len() as f64))
}

/// `(2 / (1 + e^(−z_outlier)) − 1) · s_anchor + z_anchor`, evaluated as written.
#[inline]
pub fn rectify_outlier_depth<T: Real>(z_outlier: T, z_anchor: T, s_anchor: T) -> T {
    (T::two() / (T::one() + (-z_outlier).exp()) - T::one()) * s_anchor + z_anchor
}

/// Depths of the `k` nearest neighbours (3D) of `lidar[anchor]`, excluding itself.
/// Ties resolve toward the lower index.
pub fn nearest_neighbor_depths<T: Real>(lidar: &[Vec3<T>], anchor: usize, k: usize) -> Vec<T> {
    let a = lidar[anchor];
    let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
    for (i, &p) in lidar.iter().enumerate() {
        if i == anchor {
            continue;
        }
        let d = p - a;
        let d2 = d.dot(d);
        if best.len() == k && best.last().map_or(false, |&(worst, _)| d2 >= worst) {
            continue;
        }
        let pos = best.partition_point(|&(e, _)| e <= d2);
        best.insert(pos, (d2, i));
        best.truncate(k);
    }
    best.into_iter().map(|(_, i)| lidar[i].z).collect()
}

/// Rectifies the edge depths of `record`. Non-outlier points are kept bitwise.
pub fn rectify_object<T: Real>(
    record: &ObjectRecord<T>,
    scene_lidar: &[Vec3<T>],
    camera: &CameraIntrinsics<T>,
    config: &RectifyConfig,
) -> Result<(ObjectRecord<T>, RectificationReport)> {
    let positions = record.model.positions();
    let pixels: Vec<(usize, usize)> = positions
        .iter()
        .map(|&p| {
            let pr = camera.project_to_pixel(p);
            if pr.in_frame {
                Ok((pr.u as usize, pr.v as usize))
            } else {
                Err(Error::Rectification(format!(
                    "model point of {} projects outside the image",
                    record.id
                )))
            }
        })
        .collect::<Result<_>>()?;
    let mut mask = Grid::filled(camera.width, camera.height, false);
    for &(u, v) in &pixels {
        mask.set(u, v, true);
    }
    let outliers = find_outliers(
        positions,
        &pixels,
        &record.bbox,
        &mask,
        config.dilation_radius,
        camera,
    )?;
    let mut report = RectificationReport {
        outliers: outliers.count(),
        ..Default::default()
    };
    if report.outliers == 0 {
        return Ok((record.clone(), report));
    }

    let margin = T::of(config.box_margin);
    // Anchors: LiDAR returns on the object itself, with their image position.
    let anchors: Vec<(usize, T, T)> = scene_lidar
        .iter()
        .enumerate()
        .filter(|(_, p)| p.z > T::zero() && record.bbox.contains(**p, margin, camera.axis))
        .map(|(i, &p)| {
            let (u, v) = camera.project_point(p);
            (i, u, v)
        })
        .collect();
    if anchors.is_empty() {
        log::debug!("{}: no LiDAR anchors on the object", record.id);
    }
    let radius2 = T::of(config.anchor_radius_px * config.anchor_radius_px);
    let mut scales: HashMap<usize, T> = HashMap::new();

    let mut new_pos = Vec::with_capacity(positions.len());
    let mut new_col = Vec::with_capacity(positions.len());
    for ((&p, &(u, v)), &color) in positions.iter().zip(&pixels).zip(record.model.colors()) {
        if !*outliers.get(u, v) {
            new_pos.push(p);
            new_col.push(color);
            continue;
        }
        let (uf, vf) = (T::of(u as f64), T::of(v as f64));
        let mut best: Option<(T, T, usize)> = None;
        for &(i, au, av) in &anchors {
            let d2 = (au - uf) * (au - uf) + (av - vf) * (av - vf);
            if d2 > radius2 {
                continue;
            }
            let z = scene_lidar[i].z;
            let better = match best {
                None => true,
                Some((bd, bz, bi)) => d2 < bd || (d2 == bd && (z < bz || (z == bz && i < bi))),
            };
            if better {
                best = Some((d2, z, i));
            }
        }
        let Some((_, z_anchor, anchor)) = best else {
            report.dropped_no_anchor += 1;
            continue;
        };
        let s = match scales.get(&anchor) {
            Some(&s) => s,
            None => {
                let nz = nearest_neighbor_depths(scene_lidar, anchor, config.n_nb);
                let s = match rectify_scale(z_anchor, &nz) {
                    Ok(s) => s,
                    Err(_) => {
                        report.dropped_no_anchor += 1;
                        continue;
                    }
                };
                scales.insert(anchor, s);
                s
            }
        };
        let z = rectify_outlier_depth(p.z, z_anchor, s);
        let q = camera.unproject_pixel(uf, vf, z);
        if !record.bbox.contains(q, margin, camera.axis) || !(q.z > T::zero()) {
            report.dropped_outside_box += 1;
            continue;
        }
        report.rectified += 1;
        new_pos.push(q);
        new_col.push(color);
    }
    if new_pos.is_empty() {
        return Err(Error::Rectification(format!(
            "every point of {} was dropped",
            record.id
        )));
    }
    let mut out = record.clone();
    out.model = TexturedPointSet::new(new_pos, new_col)?;
    Ok((out, report))
}
