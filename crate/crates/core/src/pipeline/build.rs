//! Offline database construction: object decomposition with quality
//! filtering, raw/empty scene pairs and their freespace maps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Supervision};
use super::ingest::{Inventory, SceneInput};
use super::seeds::{derive_seed, frame_rng};
use super::sparse::{
    choose_annotated_clips, clip_of_frames, foreground_depths, load_tracks, match_label, select_sparse,
    SparseSelection, TrackObservation, TrackStats,
};
use crate::error::{Error, Result};
use crate::freespace::{build_sparse_freespace, complete_freespace};
use crate::geometry::{fit_ground_plane, Box3D, CameraIntrinsics, ColorImage, DepthMap, Grid, GroundPlane, Vec3};
use crate::io::kitti::{read_lidar_in_camera, read_plane};
use crate::io::png::{read_color, read_depth_png, read_instance_mask};
use crate::io::read_grid;
use crate::objects::{
    assess_quality, extract_object, rectify_object, waymo_stats, ObjectDatabase, ObjectQuality, ObjectRecord, ObjectSource, QualityRules,
    Verdict, MIN_OBJECT_POINTS,
};
use crate::scene::{build_empty_scene, foreground_mask, write_index, write_scene, SceneDatabase, SceneKind, SceneRecord};

/// Which databases a build writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildTargets {
    pub objects: bool,
    /// Scene pairs together with their freespace maps.
    pub scenes: bool,
}

impl BuildTargets {
    pub const ALL: Self = Self {
        objects: true,
        scenes: true,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub object_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub supervision: Supervision,
    pub targets: Option<BuildTargets>,
    pub scenes_total: usize,
    pub scenes_built: usize,
    pub scene_failures: BTreeMap<String, String>,
    pub missing_inputs: BTreeMap<String, Vec<String>>,
    /// Scenes whose labels are complete; they serve as raw scenes.
    pub annotated_scenes: Vec<String>,
    pub objects_considered: usize,
    pub objects_kept: usize,
    pub raw_objects: usize,
    pub sparse_objects: usize,
    pub rejection_counts: BTreeMap<String, usize>,
    pub rejections: Vec<Rejection>,
    pub sparse: Option<SparseSelection>,
}

impl BuildManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = crate::io::kitti::read_text(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::binary::write_bytes(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    /// Keeps the object statistics of `old` when only scenes were rebuilt
    /// (and nothing when only objects were), widening `targets` to match.
    fn carry_over(&mut self, old: BuildManifest, built: BuildTargets) {
        let before = old.targets.unwrap_or(BuildTargets::ALL);
        if !built.objects && before.objects {
            self.objects_considered = old.objects_considered;
            self.objects_kept = old.objects_kept;
            self.raw_objects = old.raw_objects;
            self.sparse_objects = old.sparse_objects;
            self.rejection_counts = old.rejection_counts;
            self.rejections = old.rejections;
        }
        self.targets = Some(BuildTargets {
            objects: built.objects || before.objects,
            scenes: built.scenes || before.scenes,
        });
    }
}

/// Everything read from disk for one frame.
struct LoadedScene<'a> {
    input: &'a SceneInput,
    camera: CameraIntrinsics<f64>,
    plane: GroundPlane<f64>,
    lidar: Vec<Vec3<f64>>,
    image: ColorImage,
    depth: DepthMap<f64>,
    instances: Grid<u16>,
    inpainted: ColorImage,
}

fn require<'a, T>(value: &'a Option<T>, name: &str, id: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Invalid(format!("scene {id}: missing {name}")))
}

fn load_scene<'a>(input: &'a SceneInput, config: &PipelineConfig, ordinal: usize) -> Result<LoadedScene<'a>> {
    if !input.buildable() {
        return Err(Error::Invalid(format!("missing {}", input.missing.join(", "))));
    }
    let axis = config.vertical_axis;
    let id = &input.id;
    let calib = require(&input.calib, "calib", id)?;
    let camera = calib.intrinsics(input.width, input.height, axis)?;
    let lidar = read_lidar_in_camera(require(&input.velodyne, "velodyne", id)?, calib, axis)?;
    let plane = match &input.plane {
        Some(p) => read_plane(p, axis)?,
        None => {
            // Candidate ground: returns more than a meter below the camera.
            let low: Vec<Vec3<f64>> = lidar
                .iter()
                .filter(|p| p.y * axis.up_sign::<f64>() < -1.0)
                .copied()
                .collect();
            let mut rng = frame_rng(derive_seed(config.seed()?, 101, 0, ordinal as u64));
            let plane = fit_ground_plane(&low, config.plane_iterations, config.plane_threshold, &mut rng)?;
            if plane.b * axis.up_sign::<f64>() > 0.0 {
                plane
            } else {
                GroundPlane::new(-plane.a, -plane.b, -plane.c, -plane.d)?
            }
        }
    };
    let depth_path = require(&input.dense_depth, "densedepth", id)?;
    let depth = if depth_path.extension().is_some_and(|x| x == "png") {
        read_depth_png(depth_path)?
    } else {
        read_grid(depth_path)?
    };
    let image = read_color(require(&input.image, "image_2", id)?)?;
    let instances = read_instance_mask(require(&input.mask, "masks", id)?)?;
    let inpainted = read_color(require(&input.inpaint, "inpaint", id)?)?;
    image.ensure_dims(&depth)?;
    image.ensure_dims(&instances)?;
    image.ensure_dims(&inpainted)?;
    Ok(LoadedScene {
        input,
        camera,
        plane,
        lidar,
        image,
        depth,
        instances,
        inpainted,
    })
}

fn object_id(scene_id: &str, label_index: usize) -> String {
    ObjectSource {
        scene_id: scene_id.to_string(),
        index: label_index,
        ..Default::default()
    }
    .object_id()
}

fn rejection_reason(e: &Error) -> String {
    match e {
        Error::TooSparse { .. } => "too-sparse".into(),
        Error::Extraction(_) => "extraction-failed".into(),
        Error::Rectification(_) => "rectification-failed".into(),
        other => format!("error: {other}"),
    }
}

#[derive(Default)]
struct SceneOutcome {
    objects: Vec<ObjectRecord<f64>>,
    considered: usize,
    rejections: Vec<Rejection>,
}

fn decompose_scene(
    scene: &LoadedScene<'_>,
    config: &PipelineConfig,
    annotated: bool,
    sparse_ids: &BTreeSet<String>,
    targets: BuildTargets,
) -> Result<SceneOutcome> {
    let input = scene.input;
    let axis = config.vertical_axis;
    let mut known: Vec<(usize, Box3D<f64>, i32, f64)> = Vec::new();
    for (i, label) in input.object_labels() {
        if annotated || sparse_ids.contains(&object_id(&input.id, i)) {
            known.push((i, label.to_box(axis)?, label.occlusion, label.truncation));
        }
    }

    let mut out = SceneOutcome::default();
    if targets.objects {
        for (i, bbox, occlusion, truncation) in &known {
            out.considered += 1;
            let id = object_id(&input.id, *i);
            let instance = *i as u16 + 1;
            let mask = scene.instances.map(|&k| k == instance);
            let source = ObjectSource {
                scene_id: input.id.clone(),
                index: *i,
                instance_id: Some(instance as u32),
                occlusion_level: *occlusion,
                truncation: *truncation,
                waymo: (config.quality_rules == QualityRules::Waymo)
                    .then(|| waymo_stats(bbox, &scene.camera, mask.count())),
            };
            let mut reject = |reason: String| {
                log::debug!("object {id} rejected: {reason}");
                out.rejections.push(Rejection {
                    object_id: id.clone(),
                    reason,
                })
            };
            let quality = ObjectQuality {
                depth: bbox.position.z,
                occlusion_level: source.occlusion_level,
                truncation: source.truncation,
                waymo: source.waymo,
            };
            if let Verdict::Reject(reason) = assess_quality(&quality, bbox.class.category(), &id, config.quality_rules)? {
                reject(reason);
                continue;
            }
            let record = match extract_object(&scene.depth, &scene.image, &mask, &scene.camera, bbox, &source) {
                Ok(r) => r,
                Err(e) => {
                    reject(rejection_reason(&e));
                    continue;
                }
            };
            let mut record = match rectify_object(&record, &scene.lidar, &scene.camera, &config.rectify()) {
                Ok((r, _)) => r,
                Err(e) => {
                    reject(rejection_reason(&e));
                    continue;
                }
            };
            if record.model.len() < MIN_OBJECT_POINTS {
                reject("too-sparse".into());
                continue;
            }
            record.membership.raw = annotated;
            record.membership.sparse = sparse_ids.contains(&id);
            out.objects.push(record);
        }
    }

    if targets.scenes {
        let labels: Vec<Box3D<f64>> = known.into_iter().map(|(_, b, _, _)| b).collect();
        let freespace = build_sparse_freespace(&scene.lidar, &scene.plane, &labels, axis, &config.freespace())?;
        let raw = SceneRecord {
            scene_id: input.id.clone(),
            kind: SceneKind::Raw,
            image: scene.image.clone(),
            depth: scene.depth.clone(),
            camera: scene.camera,
            plane: scene.plane,
            labels,
            freespace: Some(Arc::new(complete_freespace(&freespace)?)),
            lidar_path: input.velodyne.clone(),
        };
        let fg = foreground_mask(&scene.instances, config.foreground_dilation);
        let empty = build_empty_scene(&raw, scene.inpainted.clone(), &fg)?;
        write_scene(&config.scenedb_root(), &raw, &empty)?;
    }
    Ok(out)
}

/// Sparse picks over the tracks of the dataset, matched to labels by 2D IoU.
pub fn sparse_selection(inventory: &Inventory, config: &PipelineConfig) -> Result<SparseSelection> {
    let clips = load_tracks(&config.tracks_dir())?;
    let stats: Vec<Vec<TrackStats>> = clips
        .par_iter()
        .map(|clip| {
            let mut tracks: BTreeMap<u32, Vec<TrackObservation>> = BTreeMap::new();
            let mut frames: BTreeMap<&str, Option<(CameraIntrinsics<f64>, Vec<Vec3<f64>>, Grid<u16>)>> = BTreeMap::new();
            for b in &clip.boxes {
                if !frames.contains_key(b.frame_id.as_str()) {
                    let data = match inventory.get(&b.frame_id) {
                        Some(s) if s.calib.is_some() && s.velodyne.is_some() && s.mask.is_some() => {
                            let calib = s.calib.as_ref().expect("checked");
                            let camera = calib.intrinsics(s.width, s.height, config.vertical_axis)?;
                            let lidar = read_lidar_in_camera(s.velodyne.as_ref().expect("checked"), calib, config.vertical_axis)?;
                            let inst = read_instance_mask(s.mask.as_ref().expect("checked"))?;
                            Some((camera, lidar, inst))
                        }
                        _ => None,
                    };
                    frames.insert(&b.frame_id, data);
                }
                let fg_depths = match &frames[b.frame_id.as_str()] {
                    Some((camera, lidar, inst)) => foreground_depths(lidar, camera, inst, b.rect()),
                    None => Vec::new(),
                };
                tracks.entry(b.track_id).or_default().push(TrackObservation {
                    frame_id: b.frame_id.clone(),
                    rect: b.rect(),
                    fg_depths,
                });
            }
            Ok(tracks
                .into_iter()
                .map(|(track_id, mut observations)| {
                    observations.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
                    TrackStats {
                        clip: clip.clip.clone(),
                        track_id,
                        observations,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let stats: Vec<TrackStats> = stats.into_iter().flatten().collect();
    if stats.is_empty() {
        return Err(Error::Config(format!(
            "sparse supervision needs tracks under {}",
            config.tracks_dir().display()
        )));
    }
    let mut selection = select_sparse(&stats)?;
    for pick in &mut selection.picks {
        if let Some(scene) = inventory.get(&pick.frame_id) {
            let boxes = scene.object_labels().map(|(i, l)| (i, l.bbox));
            pick.object_id = match_label(pick.rect, boxes).map(|i| object_id(&scene.id, i));
        }
    }
    Ok(selection)
}

/// Scenes whose every object is labeled: all of them under full supervision,
/// the budgeted clips under sparse supervision.
pub fn annotated_scenes(inventory: &Inventory, config: &PipelineConfig) -> Result<BTreeSet<String>> {
    let ids = inventory.scenes.iter().map(|s| s.id.as_str());
    match config.supervision {
        Supervision::Full => Ok(ids.map(String::from).collect()),
        Supervision::Sparse => {
            let tracks = load_tracks(&config.tracks_dir())?;
            let clip_of = clip_of_frames(ids, &tracks);
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for s in &inventory.scenes {
                *counts.entry(clip_of[&s.id].clone()).or_default() += s.object_labels().count();
            }
            let chosen = choose_annotated_clips(&counts, config.annotation_ratio, config.seed()?);
            Ok(clip_of
                .into_iter()
                .filter(|(_, clip)| chosen.contains(clip))
                .map(|(id, _)| id)
                .collect())
        }
    }
}

/// Decomposes every scene of `inventory` and writes the requested databases
/// plus `manifest.json` under the output root. Scene failures are isolated;
/// the build fails only when no scene succeeds.
pub fn build_databases(inventory: &Inventory, config: &PipelineConfig, targets: BuildTargets) -> Result<BuildManifest> {
    config.validate()?;
    if inventory.is_empty() {
        return Err(Error::Config("inventory is empty".into()));
    }
    let annotated = annotated_scenes(inventory, config)?;
    let sparse = match config.supervision {
        Supervision::Full => None,
        Supervision::Sparse => Some(sparse_selection(inventory, config)?),
    };
    let sparse_ids: BTreeSet<String> = sparse
        .as_ref()
        .map(|s| s.object_ids().into_iter().map(String::from).collect())
        .unwrap_or_default();

    let outcomes: Vec<Result<SceneOutcome>> = inventory
        .scenes
        .par_iter()
        .enumerate()
        .map(|(ordinal, input)| {
            let scene = load_scene(input, config, ordinal)?;
            decompose_scene(&scene, config, annotated.contains(&input.id), &sparse_ids, targets)
        })
        .collect();

    let mut manifest = BuildManifest {
        supervision: config.supervision,
        targets: Some(targets),
        scenes_total: inventory.len(),
        missing_inputs: inventory
            .missing()
            .incomplete
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().map(String::from).collect()))
            .collect(),
        sparse,
        ..Default::default()
    };
    let mut built = Vec::new();
    let mut objects = Vec::new();
    for (input, outcome) in inventory.scenes.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                built.push(input.id.clone());
                manifest.objects_considered += o.considered;
                manifest.rejections.extend(o.rejections);
                objects.extend(o.objects);
            }
            Err(e) => {
                log::warn!("scene {} failed: {e}", input.id);
                manifest.scene_failures.insert(input.id.clone(), e.to_string());
            }
        }
    }
    if built.is_empty() {
        return Err(Error::Invalid(format!(
            "every scene failed ({} failures)",
            manifest.scene_failures.len()
        )));
    }
    manifest.scenes_built = built.len();
    manifest.annotated_scenes = built.iter().filter(|id| annotated.contains(*id)).cloned().collect();
    for r in &manifest.rejections {
        *manifest.rejection_counts.entry(r.reason.clone()).or_default() += 1;
    }
    manifest.objects_kept = objects.len();
    manifest.raw_objects = objects.iter().filter(|o| o.membership.raw).count();
    manifest.sparse_objects = objects.iter().filter(|o| o.membership.sparse).count();

    if targets.objects {
        ObjectDatabase::new(objects).write(&config.objdb_root())?;
    }
    if targets.scenes {
        write_index(&config.scenedb_root(), &built)?;
    }
    let path = config.manifest_path();
    if path.exists() && !(targets.objects && targets.scenes) {
        let old = BuildManifest::read(&path)?;
        if old.supervision == config.supervision {
            manifest.carry_over(old, targets);
        }
    }
    manifest.write(&path)?;
    log::info!(
        "built {}/{} scenes, kept {}/{} objects",
        manifest.scenes_built,
        manifest.scenes_total,
        manifest.objects_kept,
        manifest.objects_considered
    );
    Ok(manifest)
}

/// Recomputes the freespace maps of an existing scene database from the
/// dataset's LiDAR and the stored labels and planes. Returns the scene count.
pub fn rebuild_freespace(inventory: &Inventory, config: &PipelineConfig) -> Result<usize> {
    config.validate()?;
    let db = SceneDatabase::open(&config.scenedb_root(), config.vertical_axis)?;
    let done: Vec<Result<()>> = db
        .ids()
        .par_iter()
        .map(|id| {
            let input = inventory
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("scene {id} is not in the dataset")))?;
            let calib = require(&input.calib, "calib", id)?;
            let lidar = read_lidar_in_camera(require(&input.velodyne, "velodyne", id)?, calib, config.vertical_axis)?;
            let raw = db.load::<f64>(id, SceneKind::Raw)?;
            let sparse = build_sparse_freespace(&lidar, &raw.plane, &raw.labels, config.vertical_axis, &config.freespace())?;
            db.write_freespace(id, &complete_freespace(&sparse)?)
        })
        .collect();
    done.into_iter().collect::<Result<Vec<_>>>().map(|v| v.len())
}
