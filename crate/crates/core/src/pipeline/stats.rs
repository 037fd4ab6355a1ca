//! Single-threaded throughput of the two online stages.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::seeds::frame_rng;
use super::stream::{plan_epoch, Databases, Stage};
use crate::error::{Error, Result};
use crate::perturb::{perturb_frame, PosePerturbation};
use crate::recompose::{compose_frame, InsertionStatus};
use crate::scene::SceneRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub stage: Stage,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub recompose_seconds: f64,
    pub perturb_seconds: f64,
    pub recompose_fps: f64,
    pub perturb_fps: f64,
    pub mean_placed: f64,
}

/// Times recomposition and pose perturbation over `frames` seeded frames,
/// excluding disk reads. Scenes of the stage's plans are reused cyclically.
pub fn measure_throughput(dbs: &Databases, config: &PipelineConfig, stage: Stage, frames: usize) -> Result<ThroughputReport> {
    if frames == 0 {
        return Err(Error::Config("need at least one frame to time".into()));
    }
    let pool = dbs.pool(stage);
    let mut specs = Vec::with_capacity(frames);
    let mut epoch = 0;
    while specs.len() < frames {
        let plan = plan_epoch(dbs, config, stage, epoch)?;
        if plan.is_empty() {
            return Err(Error::Config(format!("stage {stage:?} plans no frames")));
        }
        specs.extend(plan.frames.into_iter().take(frames - specs.len()));
        epoch += 1;
    }
    let mut scenes: HashMap<(String, &'static str), SceneRecord<f64>> = HashMap::new();
    for s in &specs {
        let key = (s.scene_id.clone(), s.kind.name());
        if !scenes.contains_key(&key) {
            scenes.insert(key, dbs.scenes.load(&s.scene_id, s.kind)?);
        }
    }

    let recompose = config.recompose();
    let perturb = config.perturbation();
    let mut composed = Vec::with_capacity(frames);
    let mut poses = Vec::with_capacity(frames);
    let t0 = Instant::now();
    for s in &specs {
        let scene = &scenes[&(s.scene_id.clone(), s.kind.name())];
        let mut rng = frame_rng(s.seed);
        composed.push(compose_frame(scene, &pool, &recompose, &mut rng)?);
        poses.push(PosePerturbation::sample(&perturb, &mut rng));
    }
    let recompose_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    for (f, pose) in composed.iter().zip(&poses) {
        std::hint::black_box(perturb_frame(f, pose, &perturb)?);
    }
    let perturb_seconds = t1.elapsed().as_secs_f64();

    let placed: usize = composed.iter().map(|f| f.report.count(InsertionStatus::Placed)).sum();
    let (width, height) = (composed[0].camera.width, composed[0].camera.height);
    Ok(ThroughputReport {
        stage,
        frames,
        width,
        height,
        recompose_seconds,
        perturb_seconds,
        recompose_fps: frames as f64 / recompose_seconds,
        perturb_fps: frames as f64 / perturb_seconds,
        mean_placed: placed as f64 / frames as f64,
    })
}
