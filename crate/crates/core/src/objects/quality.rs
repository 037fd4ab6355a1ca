//! Dataset-specific rules selecting high-quality objects for the database.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::record::{ObjectQuality, ObjectRecord, WaymoStats};
use crate::error::{Error, Result};
use crate::geometry::{Box3D, CameraIntrinsics, Category};
use crate::Real;

pub const MAX_DEPTH: f64 = 50.0;
pub const MAX_TRUNCATION: f64 = 0.5;
pub const MAX_OCCLUSION: i32 = 2;
pub const MIN_BOX_IN_IMAGE: f64 = 0.9;
pub const MIN_SEG_VEHICLE: f64 = 0.5;
pub const MIN_SEG_OTHER: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityRules {
    /// depth < 50 m, truncation ≤ 0.5, occlusion ≤ 2.
    Kitti,
    /// As `Kitti` but with no truncation at all.
    KittiStrict,
    /// In-image box ratio ≥ 0.9 and segmentation ratio ≥ 0.5 (vehicles) / 0.3 (others).
    Waymo,
}

impl FromStr for QualityRules {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kitti" => Ok(Self::Kitti),
            "kitti_strict" => Ok(Self::KittiStrict),
            "waymo" => Ok(Self::Waymo),
            other => Err(Error::Config(format!("unknown quality rule set {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Reject(String),
}

impl Verdict {
    pub fn keep(&self) -> bool {
        matches!(self, Verdict::Keep)
    }
}

pub fn assess<T: Real>(record: &ObjectRecord<T>, rules: QualityRules) -> Result<Verdict> {
    assess_quality(&record.quality, record.bbox.class.category(), &record.id, rules)
}

/// Applies `rules` to quality metadata alone, so labels can be screened
/// before any points are extracted.
pub fn assess_quality<T: Real>(
    q: &ObjectQuality<T>,
    category: Category,
    id: &str,
    rules: QualityRules,
) -> Result<Verdict> {
    let verdict = match rules {
        QualityRules::Kitti | QualityRules::KittiStrict => {
            let max_trunc = if rules == QualityRules::KittiStrict {
                0.0
            } else {
                MAX_TRUNCATION
            };
            if !(q.depth.to_f64_lossy() < MAX_DEPTH) {
                Verdict::Reject("depth≥50".into())
            } else if q.truncation > max_trunc {
                Verdict::Reject(format!("truncation>{max_trunc}"))
            } else if q.occlusion_level > MAX_OCCLUSION {
                Verdict::Reject(format!("occlusion>{MAX_OCCLUSION}"))
            } else {
                Verdict::Keep
            }
        }
        QualityRules::Waymo => {
            let stats = q.waymo.ok_or_else(|| {
                Error::Invalid(format!("object {id} lacks Waymo quality stats"))
            })?;
            let in_image = if stats.box_area > 0.0 {
                stats.box_in_image_area / stats.box_area
            } else {
                0.0
            };
            let seg = if stats.box_in_image_area > 0.0 {
                stats.seg_area / stats.box_in_image_area
            } else {
                0.0
            };
            let min_seg = match category {
                Category::Vehicle => MIN_SEG_VEHICLE,
                _ => MIN_SEG_OTHER,
            };
            if in_image < MIN_BOX_IN_IMAGE {
                Verdict::Reject(format!("box-in-image<{MIN_BOX_IN_IMAGE}"))
            } else if seg < min_seg {
                Verdict::Reject(format!("segmentation<{min_seg}"))
            } else {
                Verdict::Keep
            }
        }
    };
    Ok(verdict)
}

pub fn quality_filter<T: Real>(record: &ObjectRecord<T>, rules: QualityRules) -> Result<bool> {
    assess(record, rules).map(|v| v.keep())
}

/// Fraction of the projected box outside the image.
pub fn projected_truncation<T: Real>(bbox: &Box3D<T>, camera: &CameraIntrinsics<T>) -> f64 {
    let s = waymo_stats(bbox, camera, 0);
    if s.box_area > 0.0 {
        (1.0 - s.box_in_image_area / s.box_area).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Projected-box areas for the Waymo truncation/occlusion rules.
pub fn waymo_stats<T: Real>(bbox: &Box3D<T>, camera: &CameraIntrinsics<T>, seg_area: usize) -> WaymoStats {
    let (mut l, mut t, mut r, mut b) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in bbox.corners(camera.axis).iter().filter(|c| c.z > T::zero()) {
        let (u, v) = camera.project_point(*c);
        let (u, v) = (u.to_f64_lossy(), v.to_f64_lossy());
        l = l.min(u);
        r = r.max(u);
        t = t.min(v);
        b = b.max(v);
    }
    if !l.is_finite() {
        return WaymoStats {
            box_area: 0.0,
            box_in_image_area: 0.0,
            seg_area: seg_area as f64,
        };
    }
    let box_area = (r - l) * (b - t);
    let (w, h) = (camera.width as f64, camera.height as f64);
    let inside = (r.min(w) - l.max(0.0)).max(0.0) * (b.min(h) - t.max(0.0)).max(0.0);
    WaymoStats {
        box_area,
        box_in_image_area: inside,
        seg_area: seg_area as f64,
    }
}
