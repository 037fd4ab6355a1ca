use serde::{Deserialize, Serialize};

use crate::geometry::{Box3D, TexturedPointSet, VerticalAxis};
use crate::Real;

/// Truncation as the fraction of the projected 3D box that falls inside the
/// image, and occlusion as segmented area over in-image box area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaymoStats {
    pub box_area: f64,
    pub box_in_image_area: f64,
    pub seg_area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectQuality<T> {
    /// Equals the box depth `z`.
    pub depth: T,
    pub occlusion_level: i32,
    pub truncation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waymo: Option<WaymoStats>,
}

/// Which object pools a record belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    /// Closest occurrence of a tracked instance (sparse supervision).
    pub sparse: bool,
    /// Object from a fully annotated scene.
    pub raw: bool,
}

/// One element of the object database.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectRecord<T> {
    pub id: String,
    pub model: TexturedPointSet<T>,
    pub bbox: Box3D<T>,
    pub source_scene_id: String,
    pub quality: ObjectQuality<T>,
    pub instance_id: Option<u32>,
    pub membership: Membership,
}

impl<T: Real> ObjectRecord<T> {
    /// Fraction of model points inside the box grown by `margin`.
    pub fn in_box_fraction(&self, margin: T, axis: VerticalAxis) -> f64 {
        let inside = self
            .model
            .positions()
            .iter()
            .filter(|&&p| self.bbox.contains(p, margin, axis))
            .count();
        inside as f64 / self.model.len() as f64
    }
}

/// Provenance and annotation fields attached at extraction time.
#[derive(Clone, Debug, Default)]
pub struct ObjectSource {
    pub scene_id: String,
    pub index: usize,
    pub instance_id: Option<u32>,
    pub occlusion_level: i32,
    pub truncation: f64,
    pub waymo: Option<WaymoStats>,
}

impl ObjectSource {
    pub fn object_id(&self) -> String {
        format!("{}_{:02}", self.scene_id, self.index)
    }
}
