//! Sparse supervision: one labeled occurrence per tracked instance, plus an
//! optional budget of fully annotated clips.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::seeds::{derive_seed, frame_rng, PLAN_INDEX};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Grid, Vec3};

/// One row of a track file: `frame_id,track_id,u1,v1,u2,v2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackBox {
    pub frame_id: String,
    pub track_id: u32,
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl TrackBox {
    pub fn rect(&self) -> [f64; 4] {
        [self.u1, self.v1, self.u2, self.v2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipTracks {
    pub clip: String,
    pub boxes: Vec<TrackBox>,
}

impl ClipTracks {
    pub fn frames(&self) -> BTreeSet<&str> {
        self.boxes.iter().map(|b| b.frame_id.as_str()).collect()
    }
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackBox>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Every `<clip>.csv` under `dir`, sorted by clip name. A missing directory
/// means no tracks.
pub fn load_tracks(dir: &Path) -> Result<Vec<ClipTracks>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            Ok(ClipTracks {
                clip: p.file_stem().expect("csv file").to_string_lossy().into_owned(),
                boxes: read_tracks(p)?,
            })
        })
        .collect()
}

/// One frame of a track with the depths of its foreground LiDAR returns.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackObservation {
    pub frame_id: String,
    pub rect: [f64; 4],
    pub fg_depths: Vec<f64>,
}

/// A track with observations in frame order.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackStats {
    pub clip: String,
    pub track_id: u32,
    pub observations: Vec<TrackObservation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsePick {
    pub clip: String,
    pub track_id: u32,
    pub frame_id: String,
    pub rect: [f64; 4],
    /// Object matched in the chosen frame, when one is.
    pub object_id: Option<String>,
    /// Median foreground LiDAR depth in the chosen frame (meters).
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseSelection {
    pub picks: Vec<SparsePick>,
    /// `(clip, track)` pairs without foreground LiDAR in any frame.
    pub excluded: Vec<(String, u32)>,
}

impl SparseSelection {
    pub fn object_ids(&self) -> BTreeSet<&str> {
        self.picks.iter().filter_map(|p| p.object_id.as_deref()).collect()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Picks, per track, the frame whose foreground LiDAR has the smallest median
/// depth; ties go to the earliest frame.
pub fn select_sparse(tracks: &[TrackStats]) -> Result<SparseSelection> {
    if tracks.is_empty() {
        return Err(Error::Invalid("no tracks to select from".into()));
    }
    let mut out = SparseSelection::default();
    for t in tracks {
        let mut best: Option<(f64, &TrackObservation)> = None;
        for obs in &t.observations {
            if let Some(m) = median(&obs.fg_depths) {
                if best.map_or(true, |(b, _)| m < b) {
                    best = Some((m, obs));
                }
            }
        }
        match best {
            Some((score, obs)) => out.picks.push(SparsePick {
                clip: t.clip.clone(),
                track_id: t.track_id,
                frame_id: obs.frame_id.clone(),
                rect: obs.rect,
                object_id: None,
                score,
            }),
            None => {
                log::warn!("track {}/{} has no foreground LiDAR; excluded", t.clip, t.track_id);
                out.excluded.push((t.clip.clone(), t.track_id));
            }
        }
    }
    Ok(out)
}

/// Depths of the LiDAR returns that project inside `rect` onto a foreground pixel.
pub fn foreground_depths(
    lidar: &[Vec3<f64>],
    camera: &CameraIntrinsics<f64>,
    instances: &Grid<u16>,
    rect: [f64; 4],
) -> Vec<f64> {
    lidar
        .iter()
        .filter(|p| p.z > 0.0)
        .filter_map(|&p| {
            let pr = camera.project_to_pixel(p);
            let (u, v) = (pr.u as f64, pr.v as f64);
            let inside = pr.in_frame && u >= rect[0] && u <= rect[2] && v >= rect[1] && v <= rect[3];
            (inside && *instances.get(pr.u as usize, pr.v as usize) != 0).then_some(p.z)
        })
        .collect()
}

/// Intersection over union of two `[u1, v1, u2, v2]` rectangles.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let area = |r: [f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Minimum IoU between a track box and a label's 2D box to call them the same object.
pub const MATCH_IOU: f64 = 0.5;

/// Index of the label box best matching `rect`, if any reaches [`MATCH_IOU`].
pub fn match_label(rect: [f64; 4], labels: impl IntoIterator<Item = (usize, [f64; 4])>) -> Option<usize> {
    labels
        .into_iter()
        .map(|(i, b)| (i, iou(rect, b)))
        .filter(|&(_, s)| s >= MATCH_IOU)
        .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

/// Clip of every frame: the track file listing it, or a singleton clip
/// named after the frame.
pub fn clip_of_frames<'a>(frames: impl IntoIterator<Item = &'a str>, tracks: &[ClipTracks]) -> BTreeMap<String, String> {
    let mut listed = BTreeMap::new();
    for t in tracks {
        for f in t.frames() {
            listed.entry(f.to_string()).or_insert_with(|| t.clip.clone());
        }
    }
    frames
        .into_iter()
        .map(|f| {
            let clip = listed.get(f).cloned().unwrap_or_else(|| f.to_string());
            (f.to_string(), clip)
        })
        .collect()
}

/// Clips chosen for full annotation: a seeded shuffle of the clips, taken in
/// order until their labeled objects first reach `percent` of all labeled
/// objects.
pub fn choose_annotated_clips(label_counts: &BTreeMap<String, usize>, percent: f64, seed: u64) -> BTreeSet<String> {
    let total: usize = label_counts.values().sum();
    let target = percent / 100.0 * total as f64;
    let mut clips: Vec<&String> = label_counts.keys().collect();
    clips.shuffle(&mut frame_rng(derive_seed(seed, 100, 0, PLAN_INDEX)));
    let mut chosen = BTreeSet::new();
    let mut count = 0usize;
    for c in clips {
        if (count as f64) >= target {
            break;
        }
        count += label_counts[c];
        chosen.insert(c.clone());
    }
    chosen
}
