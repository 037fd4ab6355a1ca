//! Oriented 3D boxes and their bird's-eye-view footprints.
//!
//! Yaw follows the KITTI `rotation_y` convention expressed in the BEV `(x, z)`
//! plane: the box length axis points along `(cos yaw, −sin yaw)`. It does not
//! depend on the vertical axis convention.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::camera::VerticalAxis;
use super::vec::Vec3;
use crate::error::{Error, Result};
use crate::Real;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectClass {
    Car,
    Van,
    Truck,
    Pedestrian,
    PersonSitting,
    Cyclist,
    Tram,
    Misc,
    Other(String),
}

/// Coarse grouping used by dataset-specific quality rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Vehicle,
    Pedestrian,
    Cyclist,
    Other,
}

impl ObjectClass {
    pub fn parse(s: &str) -> Self {
        match s {
            "Car" => Self::Car,
            "Van" => Self::Van,
            "Truck" => Self::Truck,
            "Pedestrian" => Self::Pedestrian,
            "Person_sitting" => Self::PersonSitting,
            "Cyclist" => Self::Cyclist,
            "Tram" => Self::Tram,
            "Misc" => Self::Misc,
            other => Self::Other(other.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Car => "Car",
            Self::Van => "Van",
            Self::Truck => "Truck",
            Self::Pedestrian => "Pedestrian",
            Self::PersonSitting => "Person_sitting",
            Self::Cyclist => "Cyclist",
            Self::Tram => "Tram",
            Self::Misc => "Misc",
            Self::Other(s) => s,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Self::Car | Self::Van | Self::Truck | Self::Tram => Category::Vehicle,
            Self::Pedestrian | Self::PersonSitting => Category::Pedestrian,
            Self::Cyclist => Category::Cyclist,
            Self::Other(s) if s.eq_ignore_ascii_case("vehicle") => Category::Vehicle,
            _ => Category::Other,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dims<T> {
    pub h: T,
    pub w: T,
    pub l: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3D<T> {
    /// Bottom-center of the box, camera frame.
    pub position: Vec3<T>,
    pub dims: Dims<T>,
    pub yaw: T,
    pub class: ObjectClass,
}

impl<T: Real> Box3D<T> {
    pub fn new(position: Vec3<T>, dims: Dims<T>, yaw: T, class: ObjectClass) -> Result<Self> {
        let b = Self {
            position,
            dims,
            yaw,
            class,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if !(d.h > T::zero() && d.w > T::zero() && d.l > T::zero()) {
            return Err(Error::Invalid(format!(
                "box dims must be positive (h={}, w={}, l={})",
                d.h, d.w, d.l
            )));
        }
        if !(self.position.z > T::zero()) {
            return Err(Error::Invalid(format!(
                "box depth must be positive (z={})",
                self.position.z
            )));
        }
        Ok(())
    }

    /// Geometric center (bottom-center lifted by half the height).
    pub fn center(&self, axis: VerticalAxis) -> Vec3<T> {
        let mut c = self.position;
        c.y = c.y + axis.up_sign::<T>() * self.dims.h * T::half();
        c
    }

    /// Point expressed in box-local `(along-length, up, across-width)` coordinates.
    #[inline]
    pub fn local(&self, p: Vec3<T>, axis: VerticalAxis) -> (T, T, T) {
        let dx = p.x - self.position.x;
        let dz = p.z - self.position.z;
        let (s, c) = self.yaw.sin_cos();
        let along = dx * c - dz * s;
        let across = dx * s + dz * c;
        let up = (p.y - self.position.y) * axis.up_sign::<T>();
        (along, up, across)
    }

    /// Inside test against the box grown by `margin` on every face.
    #[inline]
    pub fn contains(&self, p: Vec3<T>, margin: T, axis: VerticalAxis) -> bool {
        let (along, up, across) = self.local(p, axis);
        along.abs() <= self.dims.l * T::half() + margin
            && across.abs() <= self.dims.w * T::half() + margin
            && up >= -margin
            && up <= self.dims.h + margin
    }

    /// BEV footprint `(x, z)` corners, grown by `margin`, counter-clockwise.
    pub fn bev_corners(&self, margin: T) -> [(T, T); 4] {
        let hl = self.dims.l * T::half() + margin;
        let hw = self.dims.w * T::half() + margin;
        let (s, c) = self.yaw.sin_cos();
        let along = (c, -s);
        let across = (s, c);
        let (x0, z0) = (self.position.x, self.position.z);
        let corner = |a: T, b: T| {
            (
                x0 + along.0 * a + across.0 * b,
                z0 + along.1 * a + across.1 * b,
            )
        };
        [corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)]
    }

    pub fn corners(&self, axis: VerticalAxis) -> [Vec3<T>; 8] {
        let bev = self.bev_corners(T::zero());
        let y0 = self.position.y;
        let y1 = y0 + axis.up_sign::<T>() * self.dims.h;
        let mut out = [Vec3::zero(); 8];
        for (i, &(x, z)) in bev.iter().enumerate() {
            out[i] = Vec3::new(x, y0, z);
            out[i + 4] = Vec3::new(x, y1, z);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Box3D<U> {
        Box3D {
            position: self.position.cast(),
            dims: Dims {
                h: U::of(self.dims.h.to_f64_lossy()),
                w: U::of(self.dims.w.to_f64_lossy()),
                l: U::of(self.dims.l.to_f64_lossy()),
            },
            yaw: U::of(self.yaw.to_f64_lossy()),
            class: self.class.clone(),
        }
    }

    pub fn translated(&self, offset: Vec3<T>) -> Self {
        let mut b = self.clone();
        b.position = b.position + offset;
        b
    }
}

/// Positive-area overlap of two convex quadrilaterals (separating-axis test).
/// Footprints that only touch are not overlapping.
pub fn bev_overlap<T: Real>(a: &[(T, T); 4], b: &[(T, T); 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let (x0, z0) = poly[i];
            let (x1, z1) = poly[(i + 1) % 4];
            let axis = (z0 - z1, x1 - x0);
            let (amin, amax) = span(a, axis);
            let (bmin, bmax) = span(b, axis);
            if amax <= bmin || bmax <= amin {
                return false;
            }
        }
    }
    true
}

fn span<T: Real>(poly: &[(T, T); 4], axis: (T, T)) -> (T, T) {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &(x, z) in poly {
        let d = x * axis.0 + z * axis.1;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}
