//! Pinhole camera model and the 2D↔3D transforms between depth maps and
//! camera-frame point clouds.
//!
//! Camera frame: x right, z forward. The vertical axis direction is set by
//! [`VerticalAxis`], carried on [`CameraIntrinsics`] so every consumer of a
//! camera reads the same convention. Image space is u right, v down, with
//! pixel `(u, v)` centered on integer coordinates.

use serde::{Deserialize, Serialize};

use super::grid::{DepthMap, Mask};
use super::vec::Vec3;
use crate::error::{Error, Result};
use crate::{is_observed, Real};

/// Which way the camera-frame y axis points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerticalAxis {
    #[default]
    YUp,
    YDown,
}

impl VerticalAxis {
    /// `+1` when y grows upward, `-1` otherwise.
    #[inline]
    pub fn up_sign<T: Real>(self) -> T {
        match self {
            VerticalAxis::YUp => T::one(),
            VerticalAxis::YDown => -T::one(),
        }
    }

    /// Sign relating image rows to camera y: `y = sign · (v − cy) · z / fy`.
    #[inline]
    pub fn row_sign<T: Real>(self) -> T {
        -self.up_sign::<T>()
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "y_up" | "up" => Some(Self::YUp),
            "y_down" | "down" => Some(Self::YDown),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub axis: VerticalAxis,
}

/// Integer pixel assignment of one projected point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection<T> {
    pub u: i64,
    pub v: i64,
    pub z: T,
    pub in_frame: bool,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: usize,
        height: usize,
        axis: VerticalAxis,
    ) -> Result<Self> {
        let w = T::of(width as f64);
        let h = T::of(height as f64);
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(Error::Invalid(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(cx > T::zero() && cx < w && cy > T::zero() && cy < h) {
            return Err(Error::Invalid(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            axis,
        })
    }

    pub fn with_axis(mut self, axis: VerticalAxis) -> Self {
        self.axis = axis;
        self
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::of(self.fx.to_f64_lossy()),
            fy: U::of(self.fy.to_f64_lossy()),
            cx: U::of(self.cx.to_f64_lossy()),
            cy: U::of(self.cy.to_f64_lossy()),
            width: self.width,
            height: self.height,
            axis: self.axis,
        }
    }

    /// Viewing ray through image point `(u, v)`, scaled so that its z component is 1.
    #[inline]
    pub fn ray(&self, u: T, v: T) -> Vec3<T> {
        Vec3::new(
            (u - self.cx) / self.fx,
            self.axis.row_sign::<T>() * (v - self.cy) / self.fy,
            T::one(),
        )
    }

    /// Back-projects image point `(u, v)` at depth `z`.
    #[inline]
    pub fn unproject_pixel(&self, u: T, v: T, z: T) -> Vec3<T> {
        Vec3::new(
            (u - self.cx) * z / self.fx,
            self.axis.row_sign::<T>() * (v - self.cy) * z / self.fy,
            z,
        )
    }

    /// Continuous image coordinates of a point with `z > 0`.
    #[inline]
    pub fn project_point(&self, p: Vec3<T>) -> (T, T) {
        (
            self.fx * p.x / p.z + self.cx,
            self.axis.row_sign::<T>() * self.fy * p.y / p.z + self.cy,
        )
    }

    /// Round-to-nearest pixel assignment; points outside the image are flagged.
    #[inline]
    pub fn project_to_pixel(&self, p: Vec3<T>) -> Projection<T> {
        let (uf, vf) = self.project_point(p);
        let u = uf.round().to_i64().unwrap_or(i64::MIN);
        let v = vf.round().to_i64().unwrap_or(i64::MIN);
        Projection {
            u,
            v,
            z: p.z,
            in_frame: self.contains_pixel(u, v),
        }
    }

    #[inline]
    pub fn contains_pixel(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    fn check_dims<P: Clone>(&self, grid: &super::grid::Grid<P>) -> Result<()> {
        if grid.dims() != (self.width, self.height) {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", grid.width(), grid.height()),
            ));
        }
        Ok(())
    }
}

/// Back-projects every selected, observed pixel of `depth` into the camera
/// frame, in row-major pixel order.
pub fn unproject<T: Real>(
    depth: &DepthMap<T>,
    camera: &CameraIntrinsics<T>,
    mask: Option<&Mask>,
) -> Result<Vec<Vec3<T>>> {
    camera.check_dims(depth)?;
    if let Some(m) = mask {
        camera.check_dims(m)?;
    }
    let mut out = Vec::new();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if let Some(m) = mask {
                if !*m.get(u, v) {
                    continue;
                }
            }
            let z = *depth.get(u, v);
            if is_observed(z) {
                out.push(camera.unproject_pixel(T::of(u as f64), T::of(v as f64), z));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(out)
}

/// Projects points to integer pixels. Every point must have `z > 0`.
pub fn project<T: Real>(
    points: &[Vec3<T>],
    camera: &CameraIntrinsics<T>,
) -> Result<Vec<Projection<T>>> {
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if !(p.z > T::zero()) {
                Err(Error::Domain(format!("point {i} has non-positive depth {}", p.z)))
            } else {
                Ok(camera.project_to_pixel(p))
            }
        })
        .collect()
}
