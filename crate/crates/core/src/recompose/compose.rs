//! Frame recomposition: sample placements in freespace, select and relocate
//! objects, filter collisions and heavy occlusions near to far, and composite
//! the survivors into the scene.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_points, zbuffer_merge, Patch};
use super::select::{collision_filter, relocate_box, select_object};
use crate::error::{Error, Result};
use crate::freespace::sample_valid_positions;
use crate::geometry::{Box3D, CameraIntrinsics, ColorImage, DepthMap, GroundPlane, Vec3};
use crate::objects::ObjectRecord;
use crate::scene::{SceneKind, SceneRecord};
use crate::{is_observed, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecomposeConfig {
    /// Inclusive range of placement attempts on raw scenes.
    pub n_re_raw: [usize; 2],
    /// Inclusive range of placement attempts on empty scenes.
    pub n_re_empty: [usize; 2],
    /// Occlusion thresholds; one is drawn per frame.
    pub tau_set: Vec<f64>,
    /// Allowed relative depth reduction when selecting an object.
    pub d_r: f64,
    pub selection_retries: usize,
    /// BEV footprint growth (meters) for collision tests.
    pub collision_margin: f64,
    /// Depth slack (meters) when locating existing objects' visible pixels.
    pub visibility_tolerance: f64,
}

impl Default for RecomposeConfig {
    fn default() -> Self {
        Self {
            n_re_raw: [0, 10],
            n_re_empty: [5, 15],
            tau_set: vec![0.1, 0.3, 0.5, 0.7],
            d_r: 0.2,
            selection_retries: 20,
            collision_margin: 0.25,
            visibility_tolerance: 0.3,
        }
    }
}

impl RecomposeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("n_re_raw", self.n_re_raw), ("n_re_empty", self.n_re_empty)] {
            if lo > hi {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        if self.tau_set.is_empty() || self.tau_set.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config(format!("tau_set {:?} must be non-empty within [0, 1]", self.tau_set)));
        }
        if !(0.0..1.0).contains(&self.d_r) {
            return Err(Error::Config(format!("d_r {} outside [0, 1)", self.d_r)));
        }
        if !(self.collision_margin >= 0.0 && self.visibility_tolerance >= 0.0) {
            return Err(Error::Config("collision_margin and visibility_tolerance must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn n_re_range(&self, kind: SceneKind) -> [usize; 2] {
        match kind {
            SceneKind::Raw => self.n_re_raw,
            SceneKind::Empty => self.n_re_empty,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InsertionStatus {
    Placed,
    Collided,
    OccluderRejected,
    Offscreen,
    /// No eligible object within the retry budget.
    SelectionMiss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    pub target: [f64; 2],
    pub object_id: Option<String>,
    /// Bottom-center after relocation.
    pub position: Option<[f64; 3]>,
    pub status: InsertionStatus,
    /// Own occlusion ratio when the occlusion filter ran.
    pub occlusion_ratio: Option<f64>,
    /// Index into the frame labels when placed.
    pub label_index: Option<usize>,
}

/// Final visible-area accounting of one labeled object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectOcclusion {
    pub label_index: usize,
    pub inserted: bool,
    pub area: usize,
    pub occluded: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InsertionReport {
    pub tau_o: f64,
    pub requested: usize,
    /// In attempt order (near to far); selection misses last.
    pub insertions: Vec<Insertion>,
    pub objects: Vec<ObjectOcclusion>,
}

impl InsertionReport {
    pub fn count(&self, status: InsertionStatus) -> usize {
        self.insertions.iter().filter(|i| i.status == status).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecomposedFrame<T> {
    pub scene_id: String,
    pub kind: SceneKind,
    pub image: ColorImage,
    pub depth: DepthMap<T>,
    pub camera: CameraIntrinsics<T>,
    pub plane: GroundPlane<T>,
    /// Existing labels first, then placed objects in placement order.
    pub labels: Vec<Box3D<T>>,
    pub n_existing: usize,
    pub report: InsertionReport,
}

impl<T: Real> RecomposedFrame<T> {
    /// A frame that reuses the scene unchanged.
    pub fn from_scene(scene: &SceneRecord<T>) -> Self {
        Self {
            scene_id: scene.scene_id.clone(),
            kind: scene.kind,
            image: scene.image.clone(),
            depth: scene.depth.clone(),
            camera: scene.camera,
            plane: scene.plane,
            labels: scene.labels.clone(),
            n_existing: scene.labels.len(),
            report: InsertionReport::default(),
        }
    }

    pub fn is_inserted(&self, label_index: usize) -> bool {
        label_index >= self.n_existing
    }
}

/// Visible pixels of one object with the depth it shows there.
#[derive(Clone, Debug)]
pub struct ObjectLayer<T> {
    pub pixels: Vec<usize>,
    pub depths: Vec<T>,
}

impl<T: Real> ObjectLayer<T> {
    pub fn from_patch(patch: &Patch<T>, width: usize) -> Self {
        let (pixels, depths) = patch.pixels().map(|(u, v, z, _)| (v * width + u, z)).unzip();
        Self { pixels, depths }
    }

    /// Pixels of an existing object: its projected box rectangle where the
    /// scene depth lies within the box depth range (± `tolerance`).
    pub fn from_box(bbox: &Box3D<T>, depth: &DepthMap<T>, camera: &CameraIntrinsics<T>, tolerance: T) -> Self {
        let mut layer = Self {
            pixels: Vec::new(),
            depths: Vec::new(),
        };
        let corners = bbox.corners(camera.axis);
        let front: Vec<_> = corners.iter().filter(|c| c.z > T::zero()).collect();
        if front.is_empty() {
            return layer;
        }
        let (mut u0, mut v0, mut u1, mut v1) = (T::infinity(), T::infinity(), T::neg_infinity(), T::neg_infinity());
        let (mut z0, mut z1) = (T::infinity(), T::neg_infinity());
        for c in front {
            let (u, v) = camera.project_point(*c);
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
            z0 = z0.min(c.z);
            z1 = z1.max(c.z);
        }
        let clamp = |x: T, n: usize| x.round().max(T::zero()).min(T::from_usize(n).unwrap() - T::one()).to_usize().unwrap();
        if u1 < T::zero() || v1 < T::zero() || u0 > T::from_usize(camera.width - 1).unwrap() || v0 > T::from_usize(camera.height - 1).unwrap() {
            return layer;
        }
        let (ua, ub) = (clamp(u0, camera.width), clamp(u1, camera.width));
        let (va, vb) = (clamp(v0, camera.height), clamp(v1, camera.height));
        let (lo, hi) = (z0 - tolerance, z1 + tolerance);
        for v in va..=vb {
            for u in ua..=ub {
                let z = *depth.get(u, v);
                if is_observed(z) && z >= lo && z <= hi {
                    layer.pixels.push(v * camera.width + u);
                    layer.depths.push(z);
                }
            }
        }
        layer
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Pixels where `nearest(i)` is strictly nearer than the object.
    fn occluded_by(&self, nearest: impl Fn(usize) -> T) -> usize {
        self.pixels
            .iter()
            .zip(&self.depths)
            .filter(|(&i, &z)| nearest(i) < z)
            .count()
    }
}

fn ratio(occluded: usize, area: usize) -> f64 {
    if area == 0 {
        0.0
    } else {
        occluded as f64 / area as f64
    }
}

/// Frame depth as an occluder: unobserved pixels hide nothing.
#[inline]
fn occluder<T: Real>(z: T) -> T {
    if z == T::zero() {
        T::infinity()
    } else {
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionCheck {
    pub keep: bool,
    pub candidate_ratio: f64,
    /// Ratio of every existing layer if the candidate were merged.
    pub layer_ratios: Vec<f64>,
}

/// The candidate is kept iff its own hidden fraction and the hidden fraction
/// it would cause on every other object stay within `tau_o`.
pub fn occlusion_filter<T: Real>(candidate: &Patch<T>, frame_depth: &DepthMap<T>, layers: &[ObjectLayer<T>], tau_o: f64) -> OcclusionCheck {
    let width = frame_depth.width();
    let own_hidden = candidate
        .pixels()
        .filter(|&(u, v, z, _)| occluder(*frame_depth.get(u, v)) < z)
        .count();
    let candidate_ratio = ratio(own_hidden, candidate.area());
    let (pw, ph) = candidate.mask.dims();
    let patch_depth = |i: usize| {
        let (u, v) = (i % width, i / width);
        if u >= candidate.u0 && v >= candidate.v0 && u - candidate.u0 < pw && v - candidate.v0 < ph {
            let (lu, lv) = (u - candidate.u0, v - candidate.v0);
            if *candidate.mask.get(lu, lv) {
                return *candidate.depth.get(lu, lv);
            }
        }
        T::infinity()
    };
    let layer_ratios: Vec<f64> = layers
        .iter()
        .map(|l| {
            let hidden = l.occluded_by(|i| occluder(frame_depth.as_slice()[i]).min(patch_depth(i)));
            ratio(hidden, l.area())
        })
        .collect();
    let keep = candidate_ratio <= tau_o && layer_ratios.iter().all(|&r| r <= tau_o);
    OcclusionCheck {
        keep,
        candidate_ratio,
        layer_ratios,
    }
}

/// A placed object: its refreshed label and the patch merged into the frame.
#[derive(Clone, Debug)]
pub struct Placement<T> {
    pub object_id: String,
    pub label: Box3D<T>,
    pub offset: Vec3<T>,
    pub patch: Patch<T>,
}

pub fn compose_frame<T: Real, R: Rng + ?Sized>(
    scene: &SceneRecord<T>,
    pool: &[&ObjectRecord<T>],
    config: &RecomposeConfig,
    rng: &mut R,
) -> Result<RecomposedFrame<T>> {
    compose_frame_traced(scene, pool, config, rng).map(|(f, _)| f)
}

/// As [`compose_frame`], also returning every placement in merge order.
pub fn compose_frame_traced<T: Real, R: Rng + ?Sized>(
    scene: &SceneRecord<T>,
    pool: &[&ObjectRecord<T>],
    config: &RecomposeConfig,
    rng: &mut R,
) -> Result<(RecomposedFrame<T>, Vec<Placement<T>>)> {
    config.validate()?;
    let freespace = scene
        .freespace
        .as_ref()
        .ok_or_else(|| Error::Config(format!("scene {} has no freespace map", scene.scene_id)))?;
    let [lo, hi] = config.n_re_range(scene.kind);
    let requested = rng.gen_range(lo..=hi);
    let tau_o = *config.tau_set.choose(rng).expect("validated non-empty");

    let targets: Vec<(T, T)> = match sample_valid_positions(freespace, requested, rng) {
        Ok(t) => t,
        Err(Error::Sampling(_)) => Vec::new(),
        Err(e) => return Err(e),
    };

    let camera = &scene.camera;
    let width = camera.width;
    let d_r = T::of(config.d_r);
    let mut misses = Vec::new();
    let mut candidates = Vec::new();
    for &target in &targets {
        match select_object(pool, target, d_r, config.selection_retries, rng) {
            Some(record) => {
                let (label, offset) = relocate_box(&record.bbox, target, &scene.plane)?;
                candidates.push((target, record, label, offset));
            }
            None => misses.push(target),
        }
    }
    candidates.sort_by(|a, b| a.0 .1.partial_cmp(&b.0 .1).expect("finite targets"));

    let mut frame = RecomposedFrame::from_scene(scene);
    frame.report.tau_o = tau_o;
    frame.report.requested = requested;
    let tolerance = T::of(config.visibility_tolerance);
    let mut layers: Vec<ObjectLayer<T>> = scene
        .labels
        .iter()
        .map(|b| ObjectLayer::from_box(b, &scene.depth, camera, tolerance))
        .collect();
    let margin = T::of(config.collision_margin);
    let mut placements = Vec::new();
    let to3 = |p: Vec3<T>| [p.x.to_f64_lossy(), p.y.to_f64_lossy(), p.z.to_f64_lossy()];

    for (target, record, label, offset) in candidates {
        let mut entry = Insertion {
            target: [target.0.to_f64_lossy(), target.1.to_f64_lossy()],
            object_id: Some(record.id.clone()),
            position: Some(to3(label.position)),
            status: InsertionStatus::Placed,
            occlusion_ratio: None,
            label_index: None,
        };
        let center = label.center(camera.axis);
        if !(center.z > T::zero() && camera.project_to_pixel(center).in_frame) {
            entry.status = InsertionStatus::Offscreen;
            frame.report.insertions.push(entry);
            continue;
        }
        if !collision_filter(&label, &frame.labels, margin) {
            entry.status = InsertionStatus::Collided;
            frame.report.insertions.push(entry);
            continue;
        }
        let patch = match render_points(record.model.positions(), record.model.colors(), offset, camera) {
            Ok(p) => p,
            Err(Error::Offscreen) => {
                entry.status = InsertionStatus::Offscreen;
                frame.report.insertions.push(entry);
                continue;
            }
            Err(e) => return Err(e),
        };
        let check = occlusion_filter(&patch, &frame.depth, &layers, tau_o);
        entry.occlusion_ratio = Some(check.candidate_ratio);
        if !check.keep {
            entry.status = InsertionStatus::OccluderRejected;
            frame.report.insertions.push(entry);
            continue;
        }
        zbuffer_merge(&patch, &mut frame.image, &mut frame.depth);
        layers.push(ObjectLayer::from_patch(&patch, width));
        entry.label_index = Some(frame.labels.len());
        frame.labels.push(label.clone());
        frame.report.insertions.push(entry);
        placements.push(Placement {
            object_id: record.id.clone(),
            label,
            offset,
            patch,
        });
    }
    for target in misses {
        frame.report.insertions.push(Insertion {
            target: [target.0.to_f64_lossy(), target.1.to_f64_lossy()],
            object_id: None,
            position: None,
            status: InsertionStatus::SelectionMiss,
            occlusion_ratio: None,
            label_index: None,
        });
    }
    let final_depth = frame.depth.as_slice();
    frame.report.objects = layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let occluded = l.occluded_by(|p| occluder(final_depth[p]));
            ObjectOcclusion {
                label_index: i,
                inserted: i >= frame.n_existing,
                area: l.area(),
                occluded,
                ratio: ratio(occluded, l.area()),
            }
        })
        .collect();
    Ok((frame, placements))
}
