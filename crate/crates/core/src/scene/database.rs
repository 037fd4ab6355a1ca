//! On-disk scene database:
//!
//! ```text
//! scenedb/index.json
//! scenedb/<id>/{image.png, depth.sfdg, calib.txt, plane.txt, labels.txt, freespace.sffs, scene.json}
//! scenedb/<id>/empty/{image.png, depth.sfdg}
//! ```
//!
//! Scenes are loaded on demand; only the index is held in memory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::record::{SceneKind, SceneRecord};
use crate::error::{Error, Result};
use crate::freespace::FreespaceMap;
use crate::io::binary::{read_grid, write_bytes, write_grid};
use crate::io::kitti::{labels_to_text, parse_labels, plane_to_text, read_calib, read_plane, read_text, KittiCalib, KittiLabel};
use crate::io::png::{read_color, write_color};
use crate::geometry::VerticalAxis;
use crate::objects::projected_truncation;
use crate::Real;

pub const INDEX_FILE: &str = "index.json";
const FREESPACE_FILE: &str = "freespace.sffs";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct SceneMeta {
    scene_id: String,
    width: usize,
    height: usize,
    lidar_path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Index {
    scenes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SceneDatabase {
    root: PathBuf,
    ids: Vec<String>,
    axis: VerticalAxis,
}

pub fn scene_dir(root: &Path, scene_id: &str) -> PathBuf {
    root.join(scene_id)
}

/// Writes the raw scene, its empty variant and the shared freespace map.
pub fn write_scene<T: Real>(root: &Path, raw: &SceneRecord<T>, empty: &SceneRecord<T>) -> Result<()> {
    raw.validate()?;
    empty.validate()?;
    if raw.kind != SceneKind::Raw || empty.kind != SceneKind::Empty || raw.scene_id != empty.scene_id {
        return Err(Error::Invalid(format!(
            "scene pair mismatch: {} ({}) / {} ({})",
            raw.scene_id,
            raw.kind.name(),
            empty.scene_id,
            empty.kind.name()
        )));
    }
    let dir = scene_dir(root, &raw.scene_id);
    let camera = raw.camera.cast::<f64>();
    write_color(&dir.join("image.png"), &raw.image)?;
    write_grid(&dir.join("depth.sfdg"), &raw.depth)?;
    write_bytes(&dir.join("calib.txt"), KittiCalib::from_intrinsics(&camera).to_text().as_bytes())?;
    write_bytes(&dir.join("plane.txt"), plane_to_text(&raw.plane.cast(), camera.axis).as_bytes())?;
    let labels: Vec<KittiLabel> = raw
        .labels
        .iter()
        .map(|b| KittiLabel::from_box(&b.cast(), &camera, projected_truncation(b, &raw.camera), 0))
        .collect();
    write_bytes(&dir.join("labels.txt"), labels_to_text(&labels).as_bytes())?;
    let fs_path = dir.join(FREESPACE_FILE);
    match &raw.freespace {
        Some(map) => map.write(&fs_path)?,
        None if fs_path.exists() => fs::remove_file(&fs_path).map_err(|e| Error::io(&fs_path, e))?,
        None => {}
    }
    let meta = SceneMeta {
        scene_id: raw.scene_id.clone(),
        width: raw.camera.width,
        height: raw.camera.height,
        lidar_path: raw.lidar_path.clone(),
    };
    write_bytes(&dir.join("scene.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    write_color(&dir.join("empty/image.png"), &empty.image)?;
    write_grid(&dir.join("empty/depth.sfdg"), &empty.depth)
}

/// Writes the index listing `ids` (sorted) as the database content.
pub fn write_index(root: &Path, ids: &[String]) -> Result<()> {
    let mut scenes = ids.to_vec();
    scenes.sort();
    scenes.dedup();
    write_bytes(&root.join(INDEX_FILE), serde_json::to_string_pretty(&Index { scenes })?.as_bytes())
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

impl SceneDatabase {
    pub fn open(root: &Path, axis: VerticalAxis) -> Result<Self> {
        let index: Index = read_json(&root.join(INDEX_FILE))?;
        Ok(Self {
            root: root.to_path_buf(),
            ids: index.scenes,
            axis,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn axis(&self) -> VerticalAxis {
        self.axis
    }

    pub fn load_freespace(&self, scene_id: &str) -> Result<Option<FreespaceMap>> {
        let path = scene_dir(&self.root, scene_id).join(FREESPACE_FILE);
        if path.exists() {
            FreespaceMap::read(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn write_freespace(&self, scene_id: &str, map: &FreespaceMap) -> Result<()> {
        map.write(&scene_dir(&self.root, scene_id).join(FREESPACE_FILE))
    }

    pub fn load<T: Real>(&self, scene_id: &str, kind: SceneKind) -> Result<SceneRecord<T>> {
        let dir = scene_dir(&self.root, scene_id);
        let meta: SceneMeta = read_json(&dir.join("scene.json"))?;
        let calib = read_calib(&dir.join("calib.txt"))?;
        let camera = calib.intrinsics(meta.width, meta.height, self.axis)?.cast::<T>();
        let plane = read_plane(&dir.join("plane.txt"), self.axis)?.cast::<T>();
        let sub = match kind {
            SceneKind::Raw => dir.clone(),
            SceneKind::Empty => dir.join("empty"),
        };
        let image = read_color(&sub.join("image.png"))?;
        let depth = read_grid::<T>(&sub.join("depth.sfdg"))?;
        let labels = match kind {
            SceneKind::Empty => Vec::new(),
            SceneKind::Raw => {
                let path = dir.join("labels.txt");
                parse_labels(&read_text(&path)?, &path)?
                    .iter()
                    .filter(|l| !l.is_dont_care())
                    .map(|l| l.to_box(self.axis).map(|b| b.cast::<T>()))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let record = SceneRecord {
            scene_id: scene_id.to_string(),
            kind,
            image,
            depth,
            camera,
            plane,
            labels,
            freespace: self.load_freespace(scene_id)?.map(Arc::new),
            lidar_path: meta.lidar_path,
        };
        record.validate()?;
        Ok(record)
    }
}
