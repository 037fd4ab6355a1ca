//! Deterministic epoch streams of recomposed, pose-perturbed frames.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::build::BuildManifest;
use super::config::PipelineConfig;
use super::seeds::{derive_seed, frame_rng, PLAN_INDEX};
use crate::error::{Error, Result};
use crate::io::binary::write_bytes;
use crate::io::kitti::{labels_to_text, KittiLabel};
use crate::io::png::write_color;
use crate::io::write_grid;
use crate::objects::{projected_truncation, ObjectDatabase, ObjectRecord};
use crate::perturb::{perturb_frame, PosePerturbation};
use crate::recompose::{compose_frame, RecomposedFrame};
use crate::scene::{SceneDatabase, SceneKind};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SCENE_FORGE_THREADS";

/// Training schedule a stream serves.
///
/// `Full` is the fully supervised mix of raw and empty scenes with raw-scene
/// objects. `One` and `Two` are the sparse-supervision stages: pretraining on
/// every empty scene with the sparse objects, then finetuning on half the raw
/// scenes plus as many empty ones with the merged object pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Full,
    One,
    Two,
}

impl Stage {
    pub fn code(self) -> u64 {
        match self {
            Stage::Full => 0,
            Stage::One => 1,
            Stage::Two => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Stage::Full),
            "one" | "1" => Ok(Stage::One),
            "two" | "2" => Ok(Stage::Two),
            other => Err(Error::Config(format!("unknown stage {other:?} (full | one | two)"))),
        }
    }

    fn uses(self, record: &ObjectRecord<f64>) -> bool {
        let m = record.membership;
        match self {
            Stage::Full => m.raw,
            Stage::One => m.sparse,
            Stage::Two => m.raw || m.sparse,
        }
    }
}

/// Built databases as the stream sees them.
pub struct Databases {
    pub objects: ObjectDatabase<f64>,
    pub scenes: SceneDatabase,
    /// Fully annotated scenes; only these serve as raw scenes.
    pub raw_scenes: Vec<String>,
}

impl Databases {
    pub fn open(config: &PipelineConfig) -> Result<Self> {
        let objects = ObjectDatabase::load(&config.objdb_root())?;
        let scenes = SceneDatabase::open(&config.scenedb_root(), config.vertical_axis)?;
        let manifest = BuildManifest::read(&config.manifest_path())?;
        let present: BTreeSet<&String> = scenes.ids().iter().collect();
        let raw_scenes = manifest
            .annotated_scenes
            .into_iter()
            .filter(|id| present.contains(id))
            .collect();
        Ok(Self {
            objects,
            scenes,
            raw_scenes,
        })
    }

    pub fn empty_scenes(&self) -> &[String] {
        self.scenes.ids()
    }

    pub fn pool(&self, stage: Stage) -> Vec<&ObjectRecord<f64>> {
        self.objects.records().iter().filter(|r| stage.uses(r)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub index: usize,
    pub batch: usize,
    pub scene_id: String,
    pub kind: SceneKind,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub stage: Stage,
    pub epoch: u64,
    pub batch_size: usize,
    pub frames: Vec<FrameSpec>,
}

impl EpochPlan {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn batches(&self) -> impl Iterator<Item = &[FrameSpec]> {
        self.frames.chunks(self.batch_size)
    }
}

/// Raw slots in a batch of `m` frames.
pub fn raw_slots(m: usize, r_empty: f64) -> usize {
    (((1.0 - r_empty) * m as f64).round() as usize).min(m)
}

fn shuffled<R: rand::Rng>(ids: &[String], rng: &mut R) -> Vec<String> {
    let mut v = ids.to_vec();
    v.shuffle(rng);
    v
}

/// Lays out the frames of one epoch.
pub fn plan_epoch(dbs: &Databases, config: &PipelineConfig, stage: Stage, epoch: u64) -> Result<EpochPlan> {
    config.validate()?;
    let seed = config.seed()?;
    let bs = config.batch_size;
    let mut rng = frame_rng(derive_seed(seed, stage.code(), epoch, PLAN_INDEX));
    if dbs.pool(stage).is_empty() {
        return Err(Error::Config(format!("object database has no objects for stage {stage:?}")));
    }
    let empties = dbs.empty_scenes();
    let raws = &dbs.raw_scenes;

    // (kind, scene) slots in order.
    let mut slots: Vec<(SceneKind, String)> = Vec::new();
    match stage {
        Stage::One => {
            if empties.is_empty() {
                return Err(Error::Config("stage one needs empty scenes".into()));
            }
            slots.extend(shuffled(empties, &mut rng).into_iter().map(|s| (SceneKind::Empty, s)));
        }
        Stage::Full | Stage::Two => {
            let (n_raw, n_empty, r_empty, raw_list, empty_list) = if stage == Stage::Full {
                let total = empties.len();
                let n_raw: usize = (0..total).step_by(bs).map(|s| raw_slots(bs.min(total - s), config.r_empty)).sum();
                (n_raw, total - n_raw, config.r_empty, shuffled(raws, &mut rng), shuffled(empties, &mut rng))
            } else {
                let half = (raws.len() / 2).max(raws.len().min(1));
                let r = shuffled(raws, &mut rng).into_iter().take(half).collect();
                let e: Vec<String> = shuffled(empties, &mut rng).into_iter().take(half).collect();
                let n = e.len();
                (half, n, 0.5, r, e)
            };
            if n_raw > 0 && raw_list.is_empty() {
                return Err(Error::Config(format!("stage {stage:?} needs raw scenes; none are annotated")));
            }
            if n_empty > 0 && empty_list.is_empty() {
                return Err(Error::Config(format!("stage {stage:?} needs empty scenes")));
            }
            let total = n_raw + n_empty;
            let (mut raw_left, mut empty_left) = (n_raw, n_empty);
            let mut raw_iter = raw_list.iter().cycle();
            let mut empty_iter = empty_list.iter().cycle();
            let mut start = 0;
            while start < total {
                let m = bs.min(total - start);
                let k = raw_slots(m, r_empty).min(raw_left).max(m.saturating_sub(empty_left));
                let mut kinds: Vec<SceneKind> = (0..m)
                    .map(|i| if i < k { SceneKind::Raw } else { SceneKind::Empty })
                    .collect();
                kinds.shuffle(&mut rng);
                for kind in kinds {
                    let scene = match kind {
                        SceneKind::Raw => raw_iter.next(),
                        SceneKind::Empty => empty_iter.next(),
                    };
                    slots.push((kind, scene.expect("non-empty list").clone()));
                }
                raw_left -= k;
                empty_left -= m - k;
                start += m;
            }
        }
    }
    let frames = slots
        .into_iter()
        .enumerate()
        .map(|(index, (kind, scene_id))| FrameSpec {
            index,
            batch: index / bs,
            scene_id,
            kind,
            seed: derive_seed(seed, stage.code(), epoch, index as u64),
        })
        .collect();
    Ok(EpochPlan {
        stage,
        epoch,
        batch_size: bs,
        frames,
    })
}

/// One produced frame, tagged with its position in the epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFrame {
    pub spec: FrameSpec,
    pub pose: PosePerturbation<f64>,
    pub frame: RecomposedFrame<f64>,
}

/// Composes and perturbs the frame described by `spec`.
pub fn produce_frame(
    dbs: &Databases,
    pool: &[&ObjectRecord<f64>],
    config: &PipelineConfig,
    spec: &FrameSpec,
) -> Result<StreamFrame> {
    let scene = dbs.scenes.load::<f64>(&spec.scene_id, spec.kind)?;
    let mut rng = frame_rng(spec.seed);
    let composed = compose_frame(&scene, pool, &config.recompose(), &mut rng)?;
    if !config.perturb {
        return Ok(StreamFrame {
            spec: spec.clone(),
            pose: PosePerturbation::default(),
            frame: composed,
        });
    }
    let perturb = config.perturbation();
    let pose = PosePerturbation::sample(&perturb, &mut rng);
    let frame = perturb_frame(&composed, &pose, &perturb)?;
    Ok(StreamFrame {
        spec: spec.clone(),
        pose,
        frame,
    })
}

/// Sequential, lazily produced epoch.
pub struct EpochStream<'a> {
    dbs: &'a Databases,
    config: PipelineConfig,
    pool: Vec<&'a ObjectRecord<f64>>,
    plan: EpochPlan,
    next: usize,
}

impl<'a> EpochStream<'a> {
    pub fn plan(&self) -> &EpochPlan {
        &self.plan
    }
}

impl Iterator for EpochStream<'_> {
    type Item = Result<StreamFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let spec = self.plan.frames.get(self.next)?;
        self.next += 1;
        Some(produce_frame(self.dbs, &self.pool, &self.config, spec))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.plan.len() - self.next;
        (n, Some(n))
    }
}

impl ExactSizeIterator for EpochStream<'_> {}

pub fn epoch_stream<'a>(dbs: &'a Databases, config: &PipelineConfig, stage: Stage, epoch: u64) -> Result<EpochStream<'a>> {
    let plan = plan_epoch(dbs, config, stage, epoch)?;
    Ok(EpochStream {
        dbs,
        config: config.clone(),
        pool: dbs.pool(stage),
        plan,
        next: 0,
    })
}

/// Worker count: `SCENE_FORGE_THREADS` when set, else the available cores.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Produces the frames of `plan` on `workers` threads, calling `sink` with
/// each frame as it completes (in any order). Content depends only on the
/// frame index.
pub fn produce_sharded<F>(
    dbs: &Databases,
    config: &PipelineConfig,
    plan: &EpochPlan,
    workers: usize,
    sink: F,
) -> Result<()>
where
    F: Fn(StreamFrame) -> Result<()> + Sync,
{
    let pool = dbs.pool(plan.stage);
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    threads.install(|| {
        plan.frames
            .par_iter()
            .try_for_each(|spec| sink(produce_frame(dbs, &pool, config, spec)?))
    })
}

/// As [`produce_sharded`], collecting the frames in index order.
pub fn collect_sharded(dbs: &Databases, config: &PipelineConfig, plan: &EpochPlan, workers: usize) -> Result<Vec<StreamFrame>> {
    let out = std::sync::Mutex::new(Vec::with_capacity(plan.len()));
    produce_sharded(dbs, config, plan, workers, |f| {
        out.lock().expect("no panics while held").push(f);
        Ok(())
    })?;
    let mut frames = out.into_inner().expect("no panics while held");
    frames.sort_by_key(|f| f.spec.index);
    Ok(frames)
}

#[derive(Serialize)]
struct FrameMeta<'a> {
    spec: &'a FrameSpec,
    pose: &'a PosePerturbation<f64>,
    n_existing: usize,
    plane: [f64; 4],
    report: &'a crate::recompose::InsertionReport,
}

/// Directory of frame `index` inside a stream dump.
pub fn frame_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("{index:06}"))
}

/// Dumps a frame as `image.png`, `depth.sfdg`, `labels.txt` (KITTI format)
/// and `frame.json`.
pub fn write_frame(out: &Path, f: &StreamFrame) -> Result<()> {
    let dir = frame_dir(out, f.spec.index);
    let fr = &f.frame;
    write_color(&dir.join("image.png"), &fr.image)?;
    write_grid(&dir.join("depth.sfdg"), &fr.depth)?;
    let labels: Vec<KittiLabel> = fr
        .labels
        .iter()
        .map(|b| KittiLabel::from_box(b, &fr.camera, projected_truncation(b, &fr.camera), 0))
        .collect();
    write_bytes(&dir.join("labels.txt"), labels_to_text(&labels).as_bytes())?;
    let p = &fr.plane;
    let meta = FrameMeta {
        spec: &f.spec,
        pose: &f.pose,
        n_existing: fr.n_existing,
        plane: [p.a, p.b, p.c, p.d],
        report: &fr.report,
    };
    write_bytes(&dir.join("frame.json"), serde_json::to_string_pretty(&meta)?.as_bytes())
}
