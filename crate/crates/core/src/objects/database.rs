//! On-disk object database: `objdb/<class>/<id>/{points.bin, meta.json}`
//! plus an `index.json` fixing the load order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::record::{Membership, ObjectQuality, ObjectRecord};
use crate::error::{Error, Result};
use crate::geometry::{Box3D, ObjectClass};
use crate::io::binary::{read_points, write_bytes, write_points};
use crate::Real;

pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ObjectMeta<T> {
    id: String,
    #[serde(rename = "box")]
    bbox: Box3D<T>,
    quality: ObjectQuality<T>,
    source_scene_id: String,
    instance_id: Option<u32>,
    membership: Membership,
    points: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Index {
    /// Paths relative to the database root, in record order.
    objects: Vec<String>,
}

/// Records ordered by (source scene, id).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjectDatabase<T> {
    records: Vec<ObjectRecord<T>>,
}

fn class_dir(class: &ObjectClass) -> String {
    class
        .name()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

impl<T: Real + Serialize + DeserializeOwned> ObjectDatabase<T> {
    pub fn new(mut records: Vec<ObjectRecord<T>>) -> Self {
        records.sort_by(|a, b| {
            (a.source_scene_id.as_str(), a.id.as_str()).cmp(&(b.source_scene_id.as_str(), b.id.as_str()))
        });
        Self { records }
    }

    pub fn records(&self) -> &[ObjectRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ObjectRecord<T>> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records whose membership passes `keep`, in database order.
    pub fn filtered(&self, keep: impl Fn(&Membership) -> bool) -> Vec<&ObjectRecord<T>> {
        self.records.iter().filter(|r| keep(&r.membership)).collect()
    }

    pub fn relative_path(record: &ObjectRecord<T>) -> String {
        format!("{}/{}", class_dir(&record.bbox.class), record.id)
    }

    /// Writes every record. A previous database at `root` is replaced.
    pub fn write(&self, root: &Path) -> Result<()> {
        if root.join(INDEX_FILE).exists() {
            let old: Index = serde_json::from_str(&crate::io::kitti::read_text(&root.join(INDEX_FILE))?)?;
            for rel in old.objects {
                let dir = root.join(&rel);
                if dir.exists() {
                    fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                }
            }
        }
        let mut index = Index::default();
        for record in &self.records {
            let rel = Self::relative_path(record);
            let dir = root.join(&rel);
            write_points(&dir.join("points.bin"), &record.model)?;
            let meta = ObjectMeta {
                id: record.id.clone(),
                bbox: record.bbox.clone(),
                quality: record.quality.clone(),
                source_scene_id: record.source_scene_id.clone(),
                instance_id: record.instance_id,
                membership: record.membership,
                points: record.model.len(),
            };
            write_bytes(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
            index.objects.push(rel);
        }
        write_bytes(&root.join(INDEX_FILE), serde_json::to_string_pretty(&index)?.as_bytes())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let index_path = root.join(INDEX_FILE);
        let index: Index = serde_json::from_str(&crate::io::kitti::read_text(&index_path)?)
            .map_err(|e| Error::Format {
                path: index_path.clone(),
                msg: e.to_string(),
            })?;
        let mut records = Vec::with_capacity(index.objects.len());
        for rel in &index.objects {
            let dir: PathBuf = root.join(rel);
            let meta_path = dir.join("meta.json");
            let meta: ObjectMeta<T> = serde_json::from_str(&crate::io::kitti::read_text(&meta_path)?)
                .map_err(|e| Error::Format {
                    path: meta_path.clone(),
                    msg: e.to_string(),
                })?;
            let model = read_points(&dir.join("points.bin"))?;
            if model.len() != meta.points {
                return Err(Error::Format {
                    path: meta_path,
                    msg: format!("meta lists {} points, points.bin holds {}", meta.points, model.len()),
                });
            }
            meta.bbox.validate()?;
            records.push(ObjectRecord {
                id: meta.id,
                model,
                bbox: meta.bbox,
                source_scene_id: meta.source_scene_id,
                quality: meta.quality,
                instance_id: meta.instance_id,
                membership: meta.membership,
            });
        }
        Ok(Self::new(records))
    }
}
