//! Pipeline configuration, read from a flat TOML file.
//!
//! ```toml
//! seed = 7
//! vertical_axis = "y_up"          # or "y_down"
//! dataset_root = "data/kitti"      # relative paths resolve against the config file
//! split = "train"                  # ImageSets/<split>.txt; omit for every image
//! output_root = "out"              # objdb/, scenedb/ and manifest.json go here
//! supervision = "full"             # or "sparse"
//! annotation_ratio = 10.0          # k: percent of labeled objects in fully annotated clips (sparse)
//! quality_rules = "kitti"          # "kitti" | "kitti_strict" | "waymo"
//!
//! n_nb = 5
//! r_fs = 0.5
//! freespace_rows = 140
//! freespace_cols = 160
//! n_re_raw = [0, 10]
//! n_re_empty = [5, 15]
//! tau_set = [0.1, 0.3, 0.5, 0.7]
//! d_r = 0.2
//! max_angle_deg = 2.0
//! max_eps_z = 2.0
//! r_empty = 0.5
//! batch_size = 16
//! ```
//!
//! Every key is optional except `seed`, which may also come from the command
//! line. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freespace::FreespaceConfig;
use crate::geometry::VerticalAxis;
use crate::objects::{QualityRules, RectifyConfig};
use crate::perturb::PerturbConfig;
use crate::recompose::RecomposeConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    #[default]
    Full,
    Sparse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub vertical_axis: VerticalAxis,
    pub dataset_root: PathBuf,
    pub split: Option<String>,
    pub output_root: PathBuf,
    pub supervision: Supervision,
    pub annotation_ratio: f64,
    pub quality_rules: QualityRules,

    pub n_nb: usize,
    pub dilation_radius: usize,
    pub anchor_radius_px: f64,
    pub box_margin: f64,
    pub foreground_dilation: usize,
    /// RANSAC settings for scenes without a precomputed plane.
    pub plane_iterations: usize,
    pub plane_threshold: f64,

    pub r_fs: f64,
    pub freespace_rows: usize,
    pub freespace_cols: usize,
    pub ground_band: f64,

    pub n_re_raw: [usize; 2],
    pub n_re_empty: [usize; 2],
    pub tau_set: Vec<f64>,
    pub d_r: f64,
    pub selection_retries: usize,
    pub collision_margin: f64,
    pub visibility_tolerance: f64,

    pub perturb: bool,
    pub max_angle_deg: f64,
    pub max_eps_z: f64,
    pub fill_kernel: usize,
    pub smooth_sigma: f64,

    pub r_empty: f64,
    pub batch_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rectify = RectifyConfig::default();
        let freespace = FreespaceConfig::default();
        let recompose = RecomposeConfig::default();
        let perturb = PerturbConfig::default();
        Self {
            seed: None,
            vertical_axis: VerticalAxis::YUp,
            dataset_root: PathBuf::from("data"),
            split: None,
            output_root: PathBuf::from("out"),
            supervision: Supervision::Full,
            annotation_ratio: 0.0,
            quality_rules: QualityRules::Kitti,
            n_nb: rectify.n_nb,
            dilation_radius: rectify.dilation_radius,
            anchor_radius_px: rectify.anchor_radius_px,
            box_margin: rectify.box_margin,
            foreground_dilation: crate::scene::FOREGROUND_DILATION,
            plane_iterations: 200,
            plane_threshold: 0.1,
            r_fs: freespace.resolution,
            freespace_rows: freespace.rows,
            freespace_cols: freespace.cols,
            ground_band: freespace.ground_band,
            n_re_raw: recompose.n_re_raw,
            n_re_empty: recompose.n_re_empty,
            tau_set: recompose.tau_set,
            d_r: recompose.d_r,
            selection_retries: recompose.selection_retries,
            collision_margin: recompose.collision_margin,
            visibility_tolerance: recompose.visibility_tolerance,
            perturb: true,
            max_angle_deg: perturb.max_angle_deg,
            max_eps_z: perturb.max_eps_z,
            fill_kernel: perturb.kernel,
            smooth_sigma: perturb.sigma,
            r_empty: 0.5,
            batch_size: 16,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.dataset_root, &mut config.output_root] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::Config("no seed given (config key `seed` or --seed)".into()));
        }
        if !(0.0..=1.0).contains(&self.r_empty) {
            return Err(Error::Config(format!("r_empty {} outside [0, 1]", self.r_empty)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if !(0.0..=100.0).contains(&self.annotation_ratio) {
            return Err(Error::Config(format!("annotation_ratio {} outside [0, 100]", self.annotation_ratio)));
        }
        if self.n_nb == 0 {
            return Err(Error::Config("n_nb must be ≥ 1".into()));
        }
        if !(self.r_fs > 0.0) || self.freespace_rows == 0 || self.freespace_cols == 0 {
            return Err(Error::Config("freespace grid must be non-degenerate".into()));
        }
        self.recompose().validate()?;
        self.perturbation().validate()
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("no seed given (config key `seed` or --seed)".into()))
    }

    pub fn objdb_root(&self) -> PathBuf {
        self.output_root.join("objdb")
    }

    pub fn scenedb_root(&self) -> PathBuf {
        self.output_root.join("scenedb")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_root.join("manifest.json")
    }

    pub fn tracks_dir(&self) -> PathBuf {
        self.dataset_root.join("tracks")
    }

    pub fn rectify(&self) -> RectifyConfig {
        RectifyConfig {
            n_nb: self.n_nb,
            dilation_radius: self.dilation_radius,
            anchor_radius_px: self.anchor_radius_px,
            box_margin: self.box_margin,
        }
    }

    pub fn freespace(&self) -> FreespaceConfig {
        FreespaceConfig {
            rows: self.freespace_rows,
            cols: self.freespace_cols,
            resolution: self.r_fs,
            ground_band: self.ground_band,
        }
    }

    pub fn recompose(&self) -> RecomposeConfig {
        RecomposeConfig {
            n_re_raw: self.n_re_raw,
            n_re_empty: self.n_re_empty,
            tau_set: self.tau_set.clone(),
            d_r: self.d_r,
            selection_retries: self.selection_retries,
            collision_margin: self.collision_margin,
            visibility_tolerance: self.visibility_tolerance,
        }
    }

    pub fn perturbation(&self) -> PerturbConfig {
        PerturbConfig {
            max_angle_deg: self.max_angle_deg,
            max_eps_z: self.max_eps_z,
            kernel: self.fill_kernel,
            sigma: self.smooth_sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = PipelineConfig::from_toml_str("seed = 3\nr_empty = 0.25\nn_re_empty = [2, 4]\n").unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.r_empty, 0.25);
        assert_eq!(c.n_re_empty, [2, 4]);
        assert_eq!(c.n_nb, 5);
        assert_eq!(c.batch_size, 16);
        assert_eq!((c.freespace_rows, c.freespace_cols, c.r_fs), (140, 160, 0.5));
        assert_eq!(c.tau_set, vec![0.1, 0.3, 0.5, 0.7]);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml_str("sed = 3").is_err());
        assert!(PipelineConfig::from_toml_str("").unwrap().validate().is_err());
        for bad in ["r_empty = 1.5", "n_re_raw = [4, 2]", "batch_size = 0", "tau_set = []"] {
            let c = PipelineConfig::from_toml_str(&format!("seed = 1\n{bad}")).unwrap();
            assert!(c.validate().is_err(), "{bad}");
        }
        assert!(PipelineConfig::from_toml_str("seed = 1\nquality_rules = \"nope\"").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = PipelineConfig {
            seed: Some(11),
            supervision: Supervision::Sparse,
            ..Default::default()
        };
        assert_eq!(PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 1\ndataset_root = \"kitti\"\n").unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.dataset_root, dir.path().join("kitti"));
        assert_eq!(c.objdb_root(), dir.path().join("out/objdb"));
    }
}
