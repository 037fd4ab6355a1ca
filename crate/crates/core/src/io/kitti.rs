//! KITTI object-benchmark text and binary formats.
//!
//! Everything on disk is in the KITTI rectified camera frame (y down). The
//! `*_in` / `*_from` helpers convert to and from the configured
//! [`VerticalAxis`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, CameraIntrinsics, Dims, GroundPlane, ObjectClass, Vec3, VerticalAxis};

/// Velodyne axes (x fwd, y left, z up) to camera axes (x right, y down, z fwd).
pub const VELO_AXES: [[f64; 4]; 3] = [
    [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
];

#[derive(Clone, Debug, PartialEq)]
pub struct KittiCalib {
    pub p2: [[f64; 4]; 3],
    pub r0_rect: [[f64; 3]; 3],
    pub tr_velo_to_cam: [[f64; 4]; 3],
}

impl KittiCalib {
    pub fn from_intrinsics(k: &CameraIntrinsics<f64>) -> Self {
        Self {
            p2: [
                [k.fx, 0.0, k.cx, 0.0],
                [0.0, k.fy, k.cy, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ],
            r0_rect: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            tr_velo_to_cam: VELO_AXES,
        }
    }

    pub fn intrinsics(
        &self,
        width: usize,
        height: usize,
        axis: VerticalAxis,
    ) -> Result<CameraIntrinsics<f64>> {
        CameraIntrinsics::new(
            self.p2[0][0],
            self.p2[1][1],
            self.p2[0][2],
            self.p2[1][2],
            width,
            height,
            axis,
        )
    }

    /// Velodyne point to the rectified camera frame (y down).
    pub fn velo_to_rect(&self, p: [f64; 3]) -> [f64; 3] {
        let t = &self.tr_velo_to_cam;
        let cam = [0, 1, 2].map(|r| t[r][0] * p[0] + t[r][1] * p[1] + t[r][2] * p[2] + t[r][3]);
        let r = &self.r0_rect;
        [0, 1, 2].map(|i| r[i][0] * cam[0] + r[i][1] * cam[1] + r[i][2] * cam[2])
    }

    /// Rectified camera point (y down) back to Velodyne coordinates.
    pub fn rect_to_velo(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let to_m = |m: [[f64; 3]; 3]| nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
        let r0 = to_m(self.r0_rect);
        let t = &self.tr_velo_to_cam;
        let rot = to_m([0, 1, 2].map(|i| [t[i][0], t[i][1], t[i][2]]));
        let trans = nalgebra::Vector3::new(t[0][3], t[1][3], t[2][3]);
        let full = r0 * rot;
        let inv = full
            .try_inverse()
            .ok_or_else(|| Error::Invalid("singular calibration".into()))?;
        let q = inv * (nalgebra::Vector3::new(p[0], p[1], p[2]) - r0 * trans);
        Ok([q.x, q.y, q.z])
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |vals: &[f64]| {
            vals.iter()
                .map(|v| format!("{v:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let p2: Vec<f64> = self.p2.iter().flatten().copied().collect();
        let r0: Vec<f64> = self.r0_rect.iter().flatten().copied().collect();
        let tr: Vec<f64> = self.tr_velo_to_cam.iter().flatten().copied().collect();
        let _ = writeln!(s, "P2: {}", row(&p2));
        let _ = writeln!(s, "R0_rect: {}", row(&r0));
        let _ = writeln!(s, "Tr_velo_to_cam: {}", row(&tr));
        s
    }
}

fn parse_floats(path: &Path, line_no: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("not a number: {f:?}"),
            })
        })
        .collect()
}

pub fn parse_calib(text: &str, path: &Path) -> Result<KittiCalib> {
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        let fields: Vec<&str> = rest.split_whitespace().collect();
        let want = match key.trim() {
            "P2" | "Tr_velo_to_cam" => 12,
            "R0_rect" => 9,
            _ => continue,
        };
        if fields.len() != want {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("{} expects {want} values, found {}", key.trim(), fields.len()),
            });
        }
        let v = parse_floats(path, line_no, &fields)?;
        match key.trim() {
            "P2" => p2 = Some([0, 1, 2].map(|r| [v[4 * r], v[4 * r + 1], v[4 * r + 2], v[4 * r + 3]])),
            "Tr_velo_to_cam" => {
                tr = Some([0, 1, 2].map(|r| [v[4 * r], v[4 * r + 1], v[4 * r + 2], v[4 * r + 3]]))
            }
            _ => r0 = Some([0, 1, 2].map(|r| [v[3 * r], v[3 * r + 1], v[3 * r + 2]])),
        }
    }
    let p2 = p2.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: text.lines().count(),
        msg: "missing P2".into(),
    })?;
    Ok(KittiCalib {
        p2,
        r0_rect: r0.unwrap_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
        tr_velo_to_cam: tr.unwrap_or(VELO_AXES),
    })
}

pub fn read_calib(path: &Path) -> Result<KittiCalib> {
    let text = read_text(path)?;
    parse_calib(&text, path)
}

/// Ground plane file: coefficients on the 4th line (a single-line file is also accepted).
pub fn parse_plane(text: &str, path: &Path, axis: VerticalAxis) -> Result<GroundPlane<f64>> {
    let lines: Vec<&str> = text.lines().collect();
    let (idx, line) = if lines.len() >= 4 {
        (3, lines[3])
    } else if let Some(l) = lines.iter().find(|l| !l.trim().is_empty()) {
        (lines.iter().position(|x| x == l).unwrap_or(0), *l)
    } else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "empty plane file".into(),
        });
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: format!("expected 4 plane coefficients, found {}", fields.len()),
        });
    }
    let v = parse_floats(path, idx + 1, &fields)?;
    let flip = match axis {
        VerticalAxis::YDown => 1.0,
        VerticalAxis::YUp => -1.0,
    };
    GroundPlane::new(v[0], flip * v[1], v[2], v[3]).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: idx + 1,
        msg: e.to_string(),
    })
}

pub fn read_plane(path: &Path, axis: VerticalAxis) -> Result<GroundPlane<f64>> {
    let text = read_text(path)?;
    parse_plane(&text, path, axis)
}

pub fn plane_to_text(plane: &GroundPlane<f64>, axis: VerticalAxis) -> String {
    let flip = match axis {
        VerticalAxis::YDown => 1.0,
        VerticalAxis::YUp => -1.0,
    };
    format!(
        "# Plane\nWidth 4\nHeight 1\n{:e} {:e} {:e} {:e}\n",
        plane.a,
        flip * plane.b,
        plane.c,
        plane.d
    )
}

/// One line of a KITTI `label_2` file, in the on-disk (y down) frame.
#[derive(Clone, Debug, PartialEq)]
pub struct KittiLabel {
    pub class: ObjectClass,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// left, top, right, bottom (pixels)
    pub bbox: [f64; 4],
    pub dims: Dims<f64>,
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiLabel {
    pub fn is_dont_care(&self) -> bool {
        self.class.name() == "DontCare"
    }

    pub fn to_box(&self, axis: VerticalAxis) -> Result<Box3D<f64>> {
        let [x, y, z] = self.location;
        let y = match axis {
            VerticalAxis::YDown => y,
            VerticalAxis::YUp => -y,
        };
        Box3D::new(Vec3::new(x, y, z), self.dims, self.rotation_y, self.class.clone())
    }

    /// Label for a box in the configured frame; 2D box and alpha are derived
    /// from the camera.
    pub fn from_box(
        b: &Box3D<f64>,
        camera: &CameraIntrinsics<f64>,
        truncation: f64,
        occlusion: i32,
    ) -> Self {
        let corners = b.corners(camera.axis);
        let (mut l, mut t, mut r, mut btm) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in corners.iter().filter(|c| c.z > 0.0) {
            let (u, v) = camera.project_point(*c);
            l = l.min(u);
            r = r.max(u);
            t = t.min(v);
            btm = btm.max(v);
        }
        let clampw = |x: f64| x.clamp(0.0, camera.width as f64 - 1.0);
        let clamph = |x: f64| x.clamp(0.0, camera.height as f64 - 1.0);
        let bbox = if l.is_finite() {
            [clampw(l), clamph(t), clampw(r), clamph(btm)]
        } else {
            [0.0; 4]
        };
        let y = match camera.axis {
            VerticalAxis::YDown => b.position.y,
            VerticalAxis::YUp => -b.position.y,
        };
        let mut alpha = b.yaw - b.position.x.atan2(b.position.z);
        while alpha > std::f64::consts::PI {
            alpha -= 2.0 * std::f64::consts::PI;
        }
        while alpha < -std::f64::consts::PI {
            alpha += 2.0 * std::f64::consts::PI;
        }
        Self {
            class: b.class.clone(),
            truncation,
            occlusion,
            alpha,
            bbox,
            dims: b.dims,
            location: [b.position.x, y, b.position.z],
            rotation_y: b.yaw,
            score: None,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {:.2} {} {:.6} {:.2} {:.2} {:.2} {:.2} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            self.class.name(),
            self.truncation,
            self.occlusion,
            self.alpha,
            self.bbox[0],
            self.bbox[1],
            self.bbox[2],
            self.bbox[3],
            self.dims.h,
            self.dims.w,
            self.dims.l,
            self.location[0],
            self.location[1],
            self.location[2],
            self.rotation_y
        );
        if let Some(sc) = self.score {
            let _ = write!(s, " {sc:.4}");
        }
        s
    }
}

pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<KittiLabel>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 15 && fields.len() != 16 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected 15 or 16 fields, found {}", fields.len()),
            });
        }
        let v = parse_floats(path, line_no, &fields[1..])?;
        out.push(KittiLabel {
            class: ObjectClass::parse(fields[0]),
            truncation: v[0],
            occlusion: v[1] as i32,
            alpha: v[2],
            bbox: [v[3], v[4], v[5], v[6]],
            dims: Dims {
                h: v[7],
                w: v[8],
                l: v[9],
            },
            location: [v[10], v[11], v[12]],
            rotation_y: v[13],
            score: v.get(14).copied(),
        });
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<KittiLabel>> {
    let text = read_text(path)?;
    parse_labels(&text, path)
}

pub fn labels_to_text(labels: &[KittiLabel]) -> String {
    let mut s = String::new();
    for l in labels {
        s.push_str(&l.to_line());
        s.push('\n');
    }
    s
}

/// Velodyne scan: little-endian `f32` quadruples `(x, y, z, intensity)`.
pub fn decode_velodyne(bytes: &[u8], path: &Path) -> Result<Vec<[f32; 4]>> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("length {} is not a multiple of 16", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            [0, 1, 2, 3].map(|k| f32::from_le_bytes([c[4 * k], c[4 * k + 1], c[4 * k + 2], c[4 * k + 3]]))
        })
        .collect())
}

pub fn encode_velodyne(points: &[[f32; 4]]) -> Vec<u8> {
    points
        .iter()
        .flat_map(|p| p.iter().flat_map(|v| v.to_le_bytes()))
        .collect()
}

pub fn read_velodyne(path: &Path) -> Result<Vec<[f32; 4]>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_velodyne(&bytes, path)
}

/// Loads a scan and expresses it in the camera frame under `axis`.
pub fn read_lidar_in_camera(
    path: &Path,
    calib: &KittiCalib,
    axis: VerticalAxis,
) -> Result<Vec<Vec3<f64>>> {
    let raw = read_velodyne(path)?;
    Ok(raw
        .iter()
        .map(|p| {
            let [x, y, z] = calib.velo_to_rect([p[0] as f64, p[1] as f64, p[2] as f64]);
            match axis {
                VerticalAxis::YDown => Vec3::new(x, y, z),
                VerticalAxis::YUp => Vec3::new(x, -y, z),
            }
        })
        .collect())
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(PathBuf::from(path), e))
}
