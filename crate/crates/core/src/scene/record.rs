use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::empty::{camera_dims_match, empty_scene_depth};
use crate::error::{Error, Result};
use crate::freespace::FreespaceMap;
use crate::geometry::{Box3D, CameraIntrinsics, ColorImage, DepthMap, GroundPlane, Mask};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Raw,
    Empty,
}

impl SceneKind {
    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Raw => "raw",
            SceneKind::Empty => "empty",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord<T> {
    pub scene_id: String,
    pub kind: SceneKind,
    pub image: ColorImage,
    pub depth: DepthMap<T>,
    pub camera: CameraIntrinsics<T>,
    pub plane: GroundPlane<T>,
    pub labels: Vec<Box3D<T>>,
    /// Shared by the raw and empty variants of a scene.
    pub freespace: Option<Arc<FreespaceMap>>,
    pub lidar_path: Option<PathBuf>,
}

impl<T: Real> SceneRecord<T> {
    pub fn validate(&self) -> Result<()> {
        camera_dims_match(&self.depth, &self.camera)?;
        self.depth.ensure_dims(&self.image)?;
        if self.kind == SceneKind::Empty && !self.labels.is_empty() {
            return Err(Error::Invalid(format!(
                "empty scene {} carries {} labels",
                self.scene_id,
                self.labels.len()
            )));
        }
        for b in &self.labels {
            b.validate()?;
        }
        Ok(())
    }
}

/// Swaps in the inpainted image, removes the foreground from depth and drops
/// all labels.
pub fn build_empty_scene<T: Real>(raw: &SceneRecord<T>, inpainted: ColorImage, fg: &Mask) -> Result<SceneRecord<T>> {
    raw.depth.ensure_dims(&inpainted)?;
    let depth = empty_scene_depth(&raw.depth, fg, &raw.plane, &raw.camera)?;
    Ok(SceneRecord {
        scene_id: raw.scene_id.clone(),
        kind: SceneKind::Empty,
        image: inpainted,
        depth,
        camera: raw.camera,
        plane: raw.plane,
        labels: Vec::new(),
        freespace: raw.freespace.clone(),
        lidar_path: raw.lidar_path.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Dims, Grid, ObjectClass, Vec3, VerticalAxis};

    fn raw() -> SceneRecord<f64> {
        let k = CameraIntrinsics::new(50.0, 50.0, 16.0, 8.0, 32, 16, VerticalAxis::YUp).unwrap();
        SceneRecord {
            scene_id: "000001".into(),
            kind: SceneKind::Raw,
            image: Grid::filled(32, 16, [9, 9, 9]),
            depth: Grid::filled(32, 16, 30.0),
            camera: k,
            plane: GroundPlane::level(1.65, VerticalAxis::YUp),
            labels: vec![Box3D::new(Vec3::new(0.0, -1.65, 10.0), Dims { h: 1.5, w: 1.6, l: 3.9 }, 0.0, ObjectClass::Car).unwrap()],
            freespace: None,
            lidar_path: None,
        }
    }

    #[test]
    fn empty_scene_contract() {
        let r = raw();
        let fg = Grid::filled(32, 16, false);
        let e = build_empty_scene(&r, Grid::filled(32, 16, [1, 2, 3]), &fg).unwrap();
        assert_eq!(e.kind, SceneKind::Empty);
        assert!(e.labels.is_empty());
        assert_eq!(e.depth, r.depth);
        assert_eq!(*e.image.get(0, 0), [1, 2, 3]);
        e.validate().unwrap();
        assert!(build_empty_scene(&r, Grid::filled(31, 16, [0; 3]), &fg).is_err());
    }

    #[test]
    fn validation_catches_mismatches() {
        let mut r = raw();
        r.validate().unwrap();
        r.kind = SceneKind::Empty;
        assert!(r.validate().is_err());
        let mut r = raw();
        r.depth = Grid::filled(30, 16, 1.0);
        assert!(r.validate().is_err());
    }
}
