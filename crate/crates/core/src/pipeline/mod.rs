//! Dataset ingestion, database builds, sparse selection and deterministic
//! epoch streaming.

pub mod build;
pub mod config;
pub mod ingest;
pub mod seeds;
pub mod sparse;
pub mod stats;
pub mod stream;
pub mod validate;

pub use build::{annotated_scenes, build_databases, rebuild_freespace, sparse_selection, BuildManifest, BuildTargets, Rejection};
pub use config::{PipelineConfig, Supervision};
pub use ingest::{ingest_kitti, Inventory, MissingReport, SceneInput};
pub use seeds::derive_seed;
pub use sparse::{select_sparse, SparsePick, SparseSelection, TrackObservation, TrackStats};
pub use stats::{measure_throughput, ThroughputReport};
pub use stream::{
    collect_sharded, epoch_stream, plan_epoch, produce_frame, produce_sharded, raw_slots, worker_count, write_frame,
    Databases, EpochPlan, EpochStream, FrameSpec, Stage, StreamFrame, THREADS_ENV,
};
pub use validate::{validate, InvariantCount, ValidationReport};
