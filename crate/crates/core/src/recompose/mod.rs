//! Object-scene recomposition.

pub mod compose;
pub mod render;
pub mod select;

pub use compose::{
    compose_frame, compose_frame_traced, occlusion_filter, Insertion, InsertionReport, InsertionStatus, ObjectLayer,
    ObjectOcclusion, OcclusionCheck, Placement, RecomposeConfig, RecomposedFrame,
};
pub use render::{render_object, render_points, zbuffer_merge, Patch};
pub use select::{collision_filter, relocate_box, relocate_object, select_object, selection_eligible};
