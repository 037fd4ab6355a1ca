//! Textured object models: extraction from scenes, LiDAR-guided edge
//! rectification, quality filtering and the persistent object database.

pub mod database;
pub mod extract;
pub mod quality;
pub mod record;
pub mod rectify;

pub use database::ObjectDatabase;
pub use extract::{extract_object, find_outliers, MIN_OBJECT_POINTS};
pub use quality::{assess, assess_quality, projected_truncation, quality_filter, waymo_stats, QualityRules, Verdict};
pub use record::{Membership, ObjectQuality, ObjectRecord, ObjectSource, WaymoStats};
pub use rectify::{
    nearest_neighbor_depths, rectify_object, rectify_outlier_depth, rectify_scale, RectificationReport,
    RectifyConfig,
};
