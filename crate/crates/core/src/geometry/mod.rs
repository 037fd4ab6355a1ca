//! Camera model, coordinate conventions, ground-plane math and the grid and
//! point containers shared by every other module.

pub mod bbox;
pub mod camera;
pub mod grid;
pub mod morph;
pub mod plane;
pub mod points;
pub mod vec;

pub use bbox::{bev_overlap, Box3D, Category, Dims, ObjectClass};
pub use camera::{project, unproject, CameraIntrinsics, Projection, VerticalAxis};
pub use grid::{ColorImage, DepthMap, Grid, Mask, Rgb};
pub use plane::{fit_ground_plane, GroundPlane};
pub use points::TexturedPointSet;
pub use vec::{Mat3, Vec3};
