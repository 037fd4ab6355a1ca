//! Decomposition of annotated driving scenes into textured object models,
//! empty background scenes and camera poses, and their online recomposition
//! into new 2D-3D consistent training frames with refreshed 3D labels.

pub mod error;
pub mod freespace;
pub mod geometry;
pub mod io;
pub mod objects;
pub mod perturb;
pub mod pipeline;
pub mod recompose;
pub mod scene;
pub mod synth;
mod scalar;

pub use error::{Error, Result};
pub use scalar::{is_observed, Real};

/// Double-precision instantiations used by the pipeline.
pub type Vec3d = geometry::Vec3<f64>;
pub type Box3d = geometry::Box3D<f64>;
pub type Camera = geometry::CameraIntrinsics<f64>;
pub type Plane = geometry::GroundPlane<f64>;
pub type Depth = geometry::DepthMap<f64>;
pub type PointSet = geometry::TexturedPointSet<f64>;
pub type Object = objects::ObjectRecord<f64>;
pub type Scene = scene::SceneRecord<f64>;
pub type Frame = recompose::RecomposedFrame<f64>;
pub type Pose = perturb::PosePerturbation<f64>;
