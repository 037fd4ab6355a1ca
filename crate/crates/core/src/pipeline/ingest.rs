//! Discovery and validation of a KITTI-layout dataset.
//!
//! ```text
//! <root>/image_2/<id>.png        velodyne/<id>.bin   calib/<id>.txt
//! <root>/label_2/<id>.txt        planes/<id>.txt
//! <root>/masks/<id>.png          instance ids; value k is line k of the label file
//! <root>/densedepth/<id>.{sfdg,png}
//! <root>/inpaint/<id>.png
//! <root>/ImageSets/<split>.txt   optional id list
//! <root>/tracks/<clip>.csv       optional 2D tracks
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::kitti::{parse_calib, parse_labels, read_text, KittiCalib, KittiLabel};

/// Resolved inputs of one frame. Calibration and labels are parsed eagerly.
#[derive(Clone, Debug)]
pub struct SceneInput {
    pub id: String,
    pub image: Option<PathBuf>,
    pub velodyne: Option<PathBuf>,
    pub plane: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub dense_depth: Option<PathBuf>,
    pub inpaint: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub calib: Option<KittiCalib>,
    pub labels: Option<Vec<KittiLabel>>,
    /// Names of the inputs that were not found.
    pub missing: Vec<&'static str>,
}

impl SceneInput {
    /// Everything except the plane, which can be fitted, must be present.
    pub fn buildable(&self) -> bool {
        self.missing.iter().all(|&m| m == "planes")
    }

    /// Non-DontCare labels with their line index.
    pub fn object_labels(&self) -> impl Iterator<Item = (usize, &KittiLabel)> {
        self.labels
            .iter()
            .flatten()
            .enumerate()
            .filter(|(_, l)| !l.is_dont_care())
    }
}

#[derive(Clone, Debug)]
pub struct Inventory {
    pub root: PathBuf,
    pub scenes: Vec<SceneInput>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MissingReport {
    pub complete: usize,
    pub incomplete: BTreeMap<String, Vec<&'static str>>,
}

impl Inventory {
    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SceneInput> {
        self.scenes.iter().find(|s| s.id == id)
    }

    pub fn missing(&self) -> MissingReport {
        let mut r = MissingReport::default();
        for s in &self.scenes {
            if s.missing.is_empty() {
                r.complete += 1;
            } else {
                r.incomplete.insert(s.id.clone(), s.missing.clone());
            }
        }
        r
    }
}

fn existing(path: PathBuf) -> Option<PathBuf> {
    path.is_file().then_some(path)
}

fn scene_ids(root: &Path, split: Option<&str>) -> Result<Vec<String>> {
    if let Some(split) = split {
        let path = root.join("ImageSets").join(format!("{split}.txt"));
        let text = read_text(&path)?;
        return Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect());
    }
    let dir = root.join("image_2");
    let mut ids: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    ids.sort();
    Ok(ids)
}

fn resolve(root: &Path, id: &str) -> Result<SceneInput> {
    let mut missing = Vec::new();
    let mut find = |name: &'static str, path: Option<PathBuf>| {
        if path.is_none() {
            missing.push(name);
        }
        path
    };
    let image = find("image_2", existing(root.join("image_2").join(format!("{id}.png"))));
    let velodyne = find("velodyne", existing(root.join("velodyne").join(format!("{id}.bin"))));
    let calib_path = find("calib", existing(root.join("calib").join(format!("{id}.txt"))));
    let label_path = find("label_2", existing(root.join("label_2").join(format!("{id}.txt"))));
    let plane = find("planes", existing(root.join("planes").join(format!("{id}.txt"))));
    let mask = find("masks", existing(root.join("masks").join(format!("{id}.png"))));
    let dense_depth = find(
        "densedepth",
        existing(root.join("densedepth").join(format!("{id}.sfdg")))
            .or_else(|| existing(root.join("densedepth").join(format!("{id}.png")))),
    );
    let inpaint = find("inpaint", existing(root.join("inpaint").join(format!("{id}.png"))));

    let calib = calib_path
        .map(|p| read_text(&p).and_then(|t| parse_calib(&t, &p)))
        .transpose()?;
    let labels = label_path
        .map(|p| read_text(&p).and_then(|t| parse_labels(&t, &p)))
        .transpose()?;
    let (width, height) = match &image {
        Some(p) => {
            let (w, h) = image::image_dimensions(p).map_err(|e| Error::Image {
                path: p.clone(),
                source: e,
            })?;
            (w as usize, h as usize)
        }
        None => (0, 0),
    };
    Ok(SceneInput {
        id: id.to_string(),
        image,
        velodyne,
        plane,
        mask,
        dense_depth,
        inpaint,
        width,
        height,
        calib,
        labels,
        missing,
    })
}

/// Lists the frames of `split` (or every image) and parses their text inputs.
/// Missing files are recorded per scene; malformed calibration or label files
/// are errors naming the offending line.
pub fn ingest_kitti(root: &Path, split: Option<&str>) -> Result<Inventory> {
    if !root.join("image_2").is_dir() {
        return Err(Error::Config(format!("{} has no image_2 directory", root.display())));
    }
    let scenes = scene_ids(root, split)?
        .iter()
        .map(|id| resolve(root, id))
        .collect::<Result<Vec<_>>>()?;
    for s in &scenes {
        if !s.missing.is_empty() {
            log::warn!("scene {}: missing {}", s.id, s.missing.join(", "));
        }
    }
    Ok(Inventory {
        root: root.to_path_buf(),
        scenes,
    })
}
