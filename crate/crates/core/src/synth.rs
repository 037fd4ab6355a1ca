//! Ray-cast synthetic driving scenes in the KITTI directory layout.
//!
//! A scene is a ground plane, a fronto-parallel wall and a handful of
//! box-shaped cars. Every preprocessed input the pipeline consumes is written
//! alongside: instance masks, a dense depth map whose object silhouettes are
//! smeared into the background, a perfect inpainting, ground planes and 2D
//! tracks. Consecutive frames of a clip share their objects while the camera
//! drives forward.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    bev_overlap, Box3D, CameraIntrinsics, ColorImage, DepthMap, Dims, Grid, GroundPlane, ObjectClass, Vec3,
    VerticalAxis,
};
use crate::io::binary::write_bytes;
use crate::io::kitti::{encode_velodyne, labels_to_text, plane_to_text, KittiCalib, KittiLabel};
use crate::io::png::{write_color, write_instance_mask};
use crate::objects::projected_truncation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub scenes: usize,
    pub frames_per_clip: usize,
    /// Inclusive range of cars per clip.
    pub objects: [usize; 2],
    pub wall_depth: f64,
    /// Adds one car beyond 50 m to the first clip.
    pub far_object: bool,
    /// Forward camera motion between consecutive frames of a clip (meters).
    pub ego_step: f64,
    pub lidar_row_step: usize,
    pub lidar_col_step: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 384,
            height: 128,
            scenes: 6,
            frames_per_clip: 3,
            objects: [1, 5],
            wall_depth: 65.0,
            far_object: false,
            ego_step: 1.5,
            lidar_row_step: 2,
            lidar_col_step: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config(format!("image {}x{} too small", self.width, self.height)));
        }
        if self.frames_per_clip == 0 || self.lidar_row_step == 0 || self.lidar_col_step == 0 {
            return Err(Error::Config("frames_per_clip and LiDAR steps must be ≥ 1".into()));
        }
        if self.objects[0] > self.objects[1] {
            return Err(Error::Config(format!("objects range {:?} is empty", self.objects)));
        }
        if !(self.wall_depth > 20.0) {
            return Err(Error::Config(format!("wall_depth {} must exceed 20 m", self.wall_depth)));
        }
        Ok(())
    }

    /// KITTI-like focal length scaled to the image width.
    pub fn camera(&self) -> Result<CameraIntrinsics<f64>> {
        let f = 721.5377 * self.width as f64 / 1242.0;
        CameraIntrinsics::new(
            f,
            f,
            self.width as f64 / 2.0,
            self.height as f64 * 0.46,
            self.width,
            self.height,
            VerticalAxis::YUp,
        )
    }
}

/// One rendered frame. Everything is in the camera frame with y up.
#[derive(Clone, Debug)]
pub struct SynthScene {
    pub id: String,
    pub clip: String,
    pub camera: CameraIntrinsics<f64>,
    pub plane: GroundPlane<f64>,
    pub labels: Vec<Box3D<f64>>,
    /// Per label: persistent track id within the clip.
    pub track_ids: Vec<u32>,
    pub occlusion: Vec<i32>,
    pub truncation: Vec<f64>,
    pub image: ColorImage,
    pub depth: DepthMap<f64>,
    /// `depth` with silhouettes blended into the background.
    pub dense_depth: DepthMap<f64>,
    /// Label index + 1 of the visible object, 0 for background.
    pub instances: Grid<u16>,
    pub inpainted: ColorImage,
    pub lidar: Vec<Vec3<f64>>,
    pub wall_depth: f64,
}

impl SynthScene {
    pub fn instance_mask(&self, label_index: usize) -> Grid<bool> {
        let id = label_index as u16 + 1;
        self.instances.map(|&i| i == id)
    }
}

struct Clip {
    plane: GroundPlane<f64>,
    cars: Vec<Box3D<f64>>,
}

fn clip_rng(seed: u64, clip: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (clip as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn sample_clip(config: &SynthConfig, clip: usize, camera: &CameraIntrinsics<f64>) -> Result<Clip> {
    let mut rng = clip_rng(config.seed, clip);
    let tilt = 0.01;
    let plane = GroundPlane::new(
        rng.gen_range(-tilt..tilt),
        1.0,
        rng.gen_range(-tilt..tilt),
        rng.gen_range(1.55..1.75),
    )?;
    let n = rng.gen_range(config.objects[0]..=config.objects[1]);
    let travel = config.ego_step * (config.frames_per_clip - 1) as f64;
    let z_lo = 6.0 + travel;
    let z_hi = (40.0f64).min(config.wall_depth - 10.0).max(z_lo + 1.0);
    let half_fov = camera.cx / camera.fx;
    let mut cars: Vec<Box3D<f64>> = Vec::new();
    let mut attempts = 0;
    while cars.len() < n && attempts < 200 {
        attempts += 1;
        let z = rng.gen_range(z_lo..z_hi);
        let x_max = 0.8 * (z - travel) * half_fov;
        let x = rng.gen_range(-x_max..x_max);
        let dims = Dims {
            h: rng.gen_range(1.4..1.7),
            w: rng.gen_range(1.5..1.9),
            l: rng.gen_range(3.5..4.5),
        };
        let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let b = Box3D::new(Vec3::new(x, plane.height_at(x, z)?, z), dims, yaw, ObjectClass::Car)?;
        if cars.iter().any(|c| bev_overlap(&c.bev_corners(0.5), &b.bev_corners(0.0))) {
            continue;
        }
        cars.push(b);
    }
    if config.far_object && clip == 0 {
        let z = (config.wall_depth - 5.0).max(55.0).min(config.wall_depth - 1.0).max(50.5);
        let x = 2.0;
        let dims = Dims { h: 1.5, w: 1.7, l: 4.0 };
        cars.push(Box3D::new(Vec3::new(x, plane.height_at(x, z)?, z), dims, 0.3, ObjectClass::Car)?);
    }
    Ok(Clip { plane, cars })
}

/// Ray parameter of the entry into `b` along `ray` (whose z is 1) and the
/// local axis of the entry face.
fn ray_box(b: &Box3D<f64>, ray: Vec3<f64>) -> Option<(f64, usize)> {
    let o = b.local(Vec3::zero(), VerticalAxis::YUp);
    let r = b.local(ray, VerticalAxis::YUp);
    let o = [o.0, o.1, o.2];
    let e = [r.0 - o[0], r.1 - o[1], r.2 - o[2]];
    let lo = [-b.dims.l / 2.0, 0.0, -b.dims.w / 2.0];
    let hi = [b.dims.l / 2.0, b.dims.h, b.dims.w / 2.0];
    let (mut t0, mut t1, mut face) = (f64::NEG_INFINITY, f64::INFINITY, 0);
    for k in 0..3 {
        if e[k].abs() < 1e-15 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - o[k]) / e[k];
        let c = (hi[k] - o[k]) / e[k];
        let (near, far) = if a < c { (a, c) } else { (c, a) };
        if near > t0 {
            t0 = near;
            face = k;
        }
        t1 = t1.min(far);
    }
    (t0 <= t1 && t0 > 0.0).then_some((t0, face))
}

fn ground_color(x: f64, z: f64) -> [u8; 3] {
    let stripe = ((x * 2.0).floor() as i64 + (z * 0.5).floor() as i64).rem_euclid(2) as u8;
    let lane = if (x.abs() - 1.8).abs() < 0.08 { 120 } else { 0 };
    let g = 80 + stripe * 25;
    [g.saturating_add(lane), g.saturating_add(lane), (g + 5).saturating_add(lane)]
}

fn wall_color(x: f64, y: f64) -> [u8; 3] {
    let brick = ((x * 1.5).floor() as i64 + (y * 3.0).floor() as i64).rem_euclid(3) as u8;
    [150 + brick * 20, 90 + brick * 10, 70]
}

fn car_color(index: usize, face: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 6] = [[200, 30, 30], [30, 60, 200], [230, 200, 40], [40, 160, 60], [220, 220, 220], [120, 40, 160]];
    let shade = [0.75, 1.0, 0.9][face];
    PALETTE[index % PALETTE.len()].map(|c| (c as f64 * shade) as u8)
}

fn occlusion_level(visible: usize, alone: usize) -> i32 {
    let f = if alone == 0 { 0.0 } else { visible as f64 / alone as f64 };
    match f {
        f if f >= 0.8 => 0,
        f if f >= 0.5 => 1,
        f if f >= 0.2 => 2,
        _ => 3,
    }
}

/// Renders frame `index` of the dataset described by `config`.
pub fn synth_scene(config: &SynthConfig, index: usize) -> Result<SynthScene> {
    config.validate()?;
    let camera = config.camera()?;
    let clip_index = index / config.frames_per_clip;
    let step = (index % config.frames_per_clip) as f64 * config.ego_step;
    let clip = sample_clip(config, clip_index, &camera)?;
    let plane = GroundPlane::new(clip.plane.a, clip.plane.b, clip.plane.c, clip.plane.d + clip.plane.c * step)?;
    let labels: Vec<Box3D<f64>> = clip
        .cars
        .iter()
        .map(|b| {
            let (x, z) = (b.position.x, b.position.z - step);
            Box3D::new(Vec3::new(x, plane.height_at(x, z)?, z), b.dims, b.yaw, b.class.clone())
        })
        .collect::<Result<_>>()?;
    let wall_depth = config.wall_depth - step;

    let (w, h) = (config.width, config.height);
    let mut image = Grid::filled(w, h, [0u8; 3]);
    let mut inpainted = Grid::filled(w, h, [0u8; 3]);
    let mut depth = Grid::filled(w, h, 0.0);
    let mut instances = Grid::filled(w, h, 0u16);
    let mut alone = vec![0usize; labels.len()];
    for v in 0..h {
        for u in 0..w {
            let ray = camera.ray(u as f64, v as f64);
            let denom = plane.normal().dot(ray);
            let t_ground = if denom.abs() > 1e-12 { -plane.d / denom } else { -1.0 };
            let (bg_t, bg_color) = if t_ground > 0.0 && t_ground < wall_depth {
                let p = ray * t_ground;
                (t_ground, ground_color(p.x, p.z + step))
            } else {
                let p = ray * wall_depth;
                (wall_depth, wall_color(p.x, p.y))
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, b) in labels.iter().enumerate() {
                if let Some((t, face)) = ray_box(b, ray) {
                    if t < bg_t {
                        alone[i] += 1;
                        if best.map_or(true, |(bt, _, _)| t < bt) {
                            best = Some((t, i, face));
                        }
                    }
                }
            }
            inpainted.set(u, v, bg_color);
            match best {
                Some((t, i, face)) => {
                    depth.set(u, v, t);
                    image.set(u, v, car_color(i, face));
                    instances.set(u, v, i as u16 + 1);
                }
                None => {
                    depth.set(u, v, bg_t);
                    image.set(u, v, bg_color);
                }
            }
        }
    }

    // Completion-style smearing: object pixels on a silhouette take the
    // 3x3 mean depth, which pulls them toward the background.
    let mut dense_depth = depth.clone();
    for v in 0..h {
        for u in 0..w {
            let id = *instances.get(u, v);
            if id == 0 {
                continue;
            }
            let (mut sum, mut n, mut edge) = (0.0, 0.0, false);
            for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    let (uu, vv) = (u as i64 + du, v as i64 + dv);
                    if let (Some(&z), Some(&j)) = (depth.try_get(uu, vv), instances.try_get(uu, vv)) {
                        sum += z;
                        n += 1.0;
                        edge |= j != id;
                    }
                }
            }
            if edge {
                dense_depth.set(u, v, sum / n);
            }
        }
    }

    let mut lidar = Vec::new();
    for v in (0..h).step_by(config.lidar_row_step) {
        for u in (0..w).step_by(config.lidar_col_step) {
            let z = *depth.get(u, v);
            if z < 80.0 {
                lidar.push(camera.unproject_pixel(u as f64, v as f64, z));
            }
        }
    }

    let mut visible = vec![0usize; labels.len()];
    for &i in instances.as_slice() {
        if i > 0 {
            visible[i as usize - 1] += 1;
        }
    }
    let occlusion = visible.iter().zip(&alone).map(|(&vis, &a)| occlusion_level(vis, a)).collect();
    let truncation = labels.iter().map(|b| projected_truncation(b, &camera)).collect();
    Ok(SynthScene {
        id: format!("{index:06}"),
        clip: format!("clip_{clip_index:03}"),
        camera,
        plane,
        track_ids: (0..labels.len() as u32).collect(),
        labels,
        occlusion,
        truncation,
        image,
        depth,
        dense_depth,
        instances,
        inpainted,
        lidar,
        wall_depth,
    })
}

/// KITTI-format label lines of a scene, truncation rounded as on disk.
pub fn kitti_labels(scene: &SynthScene) -> Vec<KittiLabel> {
    scene
        .labels
        .iter()
        .enumerate()
        .map(|(i, b)| KittiLabel::from_box(b, &scene.camera, scene.truncation[i], scene.occlusion[i]))
        .collect()
}

/// Writes `config.scenes` frames under `root` and returns their ids.
///
/// Layout: `image_2/ velodyne/ calib/ label_2/ planes/ masks/ densedepth/
/// inpaint/ tracks/<clip>.csv ImageSets/train.txt`.
pub fn write_dataset(root: &Path, config: &SynthConfig) -> Result<Vec<String>> {
    config.validate()?;
    let mut ids = Vec::new();
    let mut tracks: Vec<(String, String)> = Vec::new();
    for index in 0..config.scenes {
        let s = synth_scene(config, index)?;
        let calib = KittiCalib::from_intrinsics(&s.camera);
        write_color(&root.join("image_2").join(format!("{}.png", s.id)), &s.image)?;
        write_color(&root.join("inpaint").join(format!("{}.png", s.id)), &s.inpainted)?;
        write_instance_mask(&root.join("masks").join(format!("{}.png", s.id)), &s.instances)?;
        crate::io::write_grid(&root.join("densedepth").join(format!("{}.sfdg", s.id)), &s.dense_depth)?;
        write_bytes(&root.join("calib").join(format!("{}.txt", s.id)), calib.to_text().as_bytes())?;
        write_bytes(
            &root.join("planes").join(format!("{}.txt", s.id)),
            plane_to_text(&s.plane, VerticalAxis::YUp).as_bytes(),
        )?;
        let labels = kitti_labels(&s);
        write_bytes(&root.join("label_2").join(format!("{}.txt", s.id)), labels_to_text(&labels).as_bytes())?;
        let velo: Vec<[f32; 4]> = s
            .lidar
            .iter()
            .map(|p| {
                let q = calib.rect_to_velo([p.x, -p.y, p.z])?;
                Ok([q[0] as f32, q[1] as f32, q[2] as f32, 0.5])
            })
            .collect::<Result<_>>()?;
        write_bytes(&root.join("velodyne").join(format!("{}.bin", s.id)), &encode_velodyne(&velo))?;

        let entry = match tracks.last_mut() {
            Some((clip, text)) if *clip == s.clip => text,
            _ => {
                tracks.push((s.clip.clone(), "frame_id,track_id,u1,v1,u2,v2\n".to_string()));
                &mut tracks.last_mut().expect("just pushed").1
            }
        };
        for (i, l) in labels.iter().enumerate() {
            if s.instances.as_slice().contains(&(i as u16 + 1)) {
                let [u1, v1, u2, v2] = l.bbox;
                let _ = writeln!(entry, "{},{},{u1:.2},{v1:.2},{u2:.2},{v2:.2}", s.id, s.track_ids[i]);
            }
        }
        ids.push(s.id);
    }
    for (clip, text) in &tracks {
        write_bytes(&root.join("tracks").join(format!("{clip}.csv")), text.as_bytes())?;
    }
    let mut split = ids.join("\n");
    split.push('\n');
    write_bytes(&root.join("ImageSets/train.txt"), split.as_bytes())?;
    Ok(ids)
}
