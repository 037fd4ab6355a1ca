//! Camera pose perturbation: pitch, roll and forward shift applied as a rigid
//! motion of the scene points, then re-rendered with gap filling.

pub mod pose;
pub mod render;

pub use pose::{perturbation_matrix, transform_scene, PerturbConfig, PosePerturbation, RigidTransform};
pub use render::{
    fill_ground_holes, perturb_frame, pool_fill, render_perturbed, smooth_filled, splat_transformed, transform_frame,
    RenderedView,
};
