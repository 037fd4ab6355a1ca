//! Scene decomposition: raw scenes and their object-free empty variants.

pub mod database;
pub mod empty;
pub mod record;

pub use database::{write_index, write_scene, SceneDatabase};
pub use empty::{background_depth, empty_scene_depth, foreground_mask, ground_depth, FOREGROUND_DILATION};
pub use record::{build_empty_scene, SceneKind, SceneRecord};
