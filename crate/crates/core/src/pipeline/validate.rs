//! Cross-module invariant checks over seeded frames of a built database.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::seeds::frame_rng;
use super::stream::{plan_epoch, produce_frame, Databases, FrameSpec, Stage};
use crate::error::Result;
use crate::geometry::{bev_overlap, Box3D, CameraIntrinsics, ColorImage, DepthMap};
use crate::objects::ObjectRecord;
use crate::recompose::{compose_frame_traced, Placement, RecomposedFrame};
use crate::scene::SceneRecord;

pub const GROUND_TOLERANCE: f64 = 1e-6;
const MAX_EXAMPLES: usize = 10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantCount {
    pub pass: usize,
    pub fail: usize,
    pub examples: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub stage: Stage,
    pub frames: usize,
    pub invariants: BTreeMap<String, InvariantCount>,
}

impl ValidationReport {
    pub fn failures(&self) -> usize {
        self.invariants.values().map(|c| c.fail).sum()
    }

    pub fn get(&self, name: &str) -> Option<&InvariantCount> {
        self.invariants.get(name)
    }

    fn record(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) {
        let c = self.invariants.entry(name.to_string()).or_default();
        if ok {
            c.pass += 1;
        } else {
            c.fail += 1;
            if c.examples.len() < MAX_EXAMPLES {
                c.examples.push(detail());
            }
        }
    }
}

/// Sequential per-pixel minimum over the scene and every patch, first
/// surface winning ties. Unobserved scene pixels are not surfaces.
pub fn zbuffer_oracle(
    scene_image: &ColorImage,
    scene_depth: &DepthMap<f64>,
    placements: &[Placement<f64>],
) -> (ColorImage, DepthMap<f64>) {
    let mut best: Vec<Option<(f64, [u8; 3])>> = scene_depth
        .as_slice()
        .iter()
        .zip(scene_image.as_slice())
        .map(|(&z, &c)| (z != 0.0).then_some((z, c)))
        .collect();
    let w = scene_depth.width();
    for p in placements {
        for (u, v, z, c) in p.patch.pixels() {
            let slot = &mut best[v * w + u];
            if slot.map_or(true, |(bz, _)| z < bz) {
                *slot = Some((z, c));
            }
        }
    }
    let mut image = scene_image.clone();
    let mut depth = scene_depth.clone();
    for (i, b) in best.into_iter().enumerate() {
        if let Some((z, c)) = b {
            depth.as_mut_slice()[i] = z;
            image.as_mut_slice()[i] = c;
        }
    }
    (image, depth)
}

/// Image rectangle spanned by the projected corners of `b`.
fn projected_rect(b: &Box3D<f64>, camera: &CameraIntrinsics<f64>) -> [f64; 4] {
    let mut r = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in b.corners(camera.axis).iter().filter(|c| c.z > 0.0) {
        let (u, v) = camera.project_point(*c);
        r = [r[0].min(u), r[1].min(v), r[2].max(u), r[3].max(v)];
    }
    r
}

fn check_objects(report: &mut ValidationReport, pool: &[&ObjectRecord<f64>], config: &PipelineConfig) {
    for o in pool {
        let frac = o.in_box_fraction(config.box_margin + 1e-9, config.vertical_axis);
        report.record("object-in-box", frac == 1.0, || {
            format!("{}: {:.4} of points inside the grown box", o.id, frac)
        });
    }
}

fn check_frame(
    report: &mut ValidationReport,
    dbs: &Databases,
    pool: &[&ObjectRecord<f64>],
    config: &PipelineConfig,
    spec: &FrameSpec,
) -> Result<()> {
    let tag = format!("frame {} ({} {})", spec.index, spec.scene_id, spec.kind.name());
    let scene: SceneRecord<f64> = dbs.scenes.load(&spec.scene_id, spec.kind)?;
    let mut rng = frame_rng(spec.seed);
    let (frame, placements): (RecomposedFrame<f64>, _) = compose_frame_traced(&scene, pool, &config.recompose(), &mut rng)?;

    for p in &placements {
        let r = frame.plane.residual(p.label.position).abs();
        report.record("ground-attachment", r < GROUND_TOLERANCE, || {
            format!("{tag}: {} off the plane by {r:e} m", p.object_id)
        });
    }

    let n = frame.labels.len();
    for i in frame.n_existing..n {
        let a = frame.labels[i].bev_corners(0.0);
        let hit = (0..n).find(|&j| j != i && bev_overlap(&a, &frame.labels[j].bev_corners(0.0)));
        report.record("collision-free", hit.is_none(), || {
            format!("{tag}: label {i} overlaps label {}", hit.unwrap_or(0))
        });
    }

    let tau = frame.report.tau_o;
    for o in &frame.report.objects {
        report.record("occlusion-bound", o.ratio <= tau, || {
            format!("{tag}: label {} hidden {:.3} > τ {tau}", o.label_index, o.ratio)
        });
    }

    let (image, depth) = zbuffer_oracle(&scene.image, &scene.depth, &placements);
    let same_depth = depth
        .as_slice()
        .iter()
        .zip(frame.depth.as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    report.record("zbuffer-oracle", same_depth && image == frame.image, || {
        format!("{tag}: composited frame differs from the per-pixel minimum")
    });

    for p in &placements {
        let rect = projected_rect(&p.label, &frame.camera);
        let (cu, cv) = p.patch.splat_centroid();
        let inside = cu >= rect[0] - 1.0 && cu <= rect[2] + 1.0 && cv >= rect[1] - 1.0 && cv <= rect[3] + 1.0;
        report.record("label-projection", inside, || {
            format!("{tag}: {} renders at ({cu:.1}, {cv:.1}) outside its box {rect:?}", p.object_id)
        });
        let source = dbs.objects.get(&p.object_id);
        let same = source.is_some_and(|s| {
            s.bbox.dims.h.to_bits() == p.label.dims.h.to_bits()
                && s.bbox.dims.w.to_bits() == p.label.dims.w.to_bits()
                && s.bbox.dims.l.to_bits() == p.label.dims.l.to_bits()
                && s.bbox.yaw.to_bits() == p.label.yaw.to_bits()
        });
        report.record("dims-yaw-preserved", same, || format!("{tag}: {} changed shape", p.object_id));
    }

    let a = produce_frame(dbs, pool, config, spec)?;
    let b = produce_frame(dbs, pool, config, spec)?;
    report.record("determinism", a == b, || format!("{tag}: two productions differ"));
    Ok(())
}

/// Checks `frames` seeded frames of `stage` (walking epochs 0, 1, ... as
/// needed) and every object of the stage's pool.
pub fn validate(dbs: &Databases, config: &PipelineConfig, stage: Stage, frames: usize) -> Result<ValidationReport> {
    let pool = dbs.pool(stage);
    let mut report = ValidationReport {
        stage,
        frames: 0,
        invariants: BTreeMap::new(),
    };
    check_objects(&mut report, &pool, config);
    let mut epoch = 0;
    while report.frames < frames {
        let plan = plan_epoch(dbs, config, stage, epoch)?;
        if plan.is_empty() {
            break;
        }
        for spec in plan.frames.iter().take(frames - report.frames) {
            check_frame(&mut report, dbs, &pool, config, spec)?;
            report.frames += 1;
        }
        epoch += 1;
    }
    Ok(report)
}
