//! Object selection for a target position, relocation onto the ground and
//! BEV collision checks.

use rand::Rng;

use crate::error::Result;
use crate::geometry::{bev_overlap, Box3D, GroundPlane, Vec3};
use crate::objects::ObjectRecord;
use crate::Real;

/// Whether an object recorded at `(x_r, z_r)` may be placed at `(x_s, z_s)`:
/// same lateral side of the camera, and not pulled nearer than a factor
/// `1 − d_r` of its recorded depth.
pub fn selection_eligible<T: Real>(target: (T, T), source: (T, T), d_r: T) -> bool {
    let ((x_s, z_s), (x_r, z_r)) = (target, source);
    x_s * x_r > T::zero() && z_s > z_r * (T::one() - d_r)
}

/// Rejection-samples the pool: up to `retries` uniform draws, returning the
/// first eligible record, or `None` on a selection miss.
pub fn select_object<'a, T: Real, R: Rng + ?Sized>(
    pool: &[&'a ObjectRecord<T>],
    target: (T, T),
    d_r: T,
    retries: usize,
    rng: &mut R,
) -> Option<&'a ObjectRecord<T>> {
    if pool.is_empty() {
        return None;
    }
    for _ in 0..retries {
        let record = pool[rng.gen_range(0..pool.len())];
        let p = record.bbox.position;
        if selection_eligible(target, (p.x, p.z), d_r) {
            return Some(record);
        }
    }
    None
}

/// Box moved so its bottom-center sits on the plane at `(x_s, z_s)`, and the
/// offset applied to every model point.
pub fn relocate_box<T: Real>(bbox: &Box3D<T>, target: (T, T), plane: &GroundPlane<T>) -> Result<(Box3D<T>, Vec3<T>)> {
    let (x_s, z_s) = target;
    let new_position = Vec3::new(x_s, plane.height_at(x_s, z_s)?, z_s);
    let offset = new_position - bbox.position;
    let mut moved = bbox.clone();
    moved.position = new_position;
    Ok((moved, offset))
}

/// Rigidly translates a whole record to the target; dims and yaw are kept.
pub fn relocate_object<T: Real>(record: &ObjectRecord<T>, target: (T, T), plane: &GroundPlane<T>) -> Result<ObjectRecord<T>> {
    let (bbox, offset) = relocate_box(&record.bbox, target, plane)?;
    let mut out = record.clone();
    out.model = record.model.translated(offset)?;
    out.quality.depth = bbox.position.z;
    out.bbox = bbox;
    Ok(out)
}

/// True (keep) iff the candidate footprint grown by `margin` has no
/// positive-area overlap with any placed footprint.
pub fn collision_filter<T: Real>(candidate: &Box3D<T>, placed: &[Box3D<T>], margin: T) -> bool {
    let c = candidate.bev_corners(margin);
    placed.iter().all(|b| !bev_overlap(&c, &b.bev_corners(T::zero())))
}
