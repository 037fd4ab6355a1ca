//! Ground plane `a·x + b·y + c·z + d = 0` and its RANSAC estimation.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::camera::VerticalAxis;
use super::vec::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::Real;

const DEGENERATE_B: f64 = 1e-9;

/// Plane with unit normal `(a, b, c)`; `b` is never ~0 so height is a function of `(x, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Real> GroundPlane<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Result<Self> {
        let n = (a * a + b * b + c * c).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::Invalid("plane normal has zero length".into()));
        }
        let plane = Self {
            a: a / n,
            b: b / n,
            c: c / n,
            d: d / n,
        };
        if plane.b.abs() < T::of(DEGENERATE_B) {
            return Err(Error::DegeneratePlane {
                b: plane.b.to_f64_lossy(),
            });
        }
        Ok(plane)
    }

    /// Horizontal plane whose surface sits `height` below the camera.
    pub fn level(height: T, axis: VerticalAxis) -> Self {
        // y_ground = -up·height  =>  y + up·height = 0
        Self {
            a: T::zero(),
            b: T::one(),
            c: T::zero(),
            d: axis.up_sign::<T>() * height,
        }
    }

    #[inline]
    pub fn normal(&self) -> Vec3<T> {
        Vec3::new(self.a, self.b, self.c)
    }

    /// The y coordinate of the plane above/below `(x, z)`.
    #[inline]
    pub fn height_at(&self, x: T, z: T) -> Result<T> {
        if self.b.abs() < T::of(DEGENERATE_B) {
            return Err(Error::DegeneratePlane {
                b: self.b.to_f64_lossy(),
            });
        }
        Ok(-(self.a * x + self.c * z + self.d) / self.b)
    }

    #[inline]
    pub fn residual(&self, p: Vec3<T>) -> T {
        self.a * p.x + self.b * p.y + self.c * p.z + self.d
    }

    /// Signed distance from the plane, positive on the "up" side.
    #[inline]
    pub fn height_above(&self, p: Vec3<T>, axis: VerticalAxis) -> T {
        let r = self.residual(p);
        if self.b * axis.up_sign::<T>() > T::zero() {
            r
        } else {
            -r
        }
    }

    /// Orthogonal projection of `p` onto the plane.
    #[inline]
    pub fn project_onto(&self, p: Vec3<T>) -> Vec3<T> {
        p - self.normal() * self.residual(p)
    }

    /// The same physical plane expressed after the rigid map `p ↦ R·p + t`.
    pub fn transformed(&self, rot: &Mat3<T>, t: Vec3<T>) -> Result<Self> {
        let n = rot.mul_vec(self.normal());
        Self::new(n.x, n.y, n.z, self.d - n.dot(t))
    }

    pub fn cast<U: Real>(&self) -> GroundPlane<U> {
        GroundPlane {
            a: U::of(self.a.to_f64_lossy()),
            b: U::of(self.b.to_f64_lossy()),
            c: U::of(self.c.to_f64_lossy()),
            d: U::of(self.d.to_f64_lossy()),
        }
    }

    /// Sign-canonical form with `b > 0`.
    pub fn canonical(&self) -> Self {
        if self.b < T::zero() {
            Self {
                a: -self.a,
                b: -self.b,
                c: -self.c,
                d: -self.d,
            }
        } else {
            *self
        }
    }
}

/// RANSAC plane fit: the hypothesis with the most inliers (`|dist| ≤ threshold`)
/// wins, then it is refit by least squares on its inlier set. The result is in
/// canonical sign (`b > 0`).
pub fn fit_ground_plane<T: Real, R: Rng>(
    points: &[Vec3<T>],
    iterations: usize,
    inlier_threshold: T,
    rng: &mut R,
) -> Result<GroundPlane<T>> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    let pts: Vec<Vector3<f64>> = points
        .iter()
        .map(|p| Vector3::new(p.x.to_f64_lossy(), p.y.to_f64_lossy(), p.z.to_f64_lossy()))
        .collect();
    let thr = inlier_threshold.to_f64_lossy();

    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..iterations.max(1) {
        let i = rng.gen_range(0..pts.len());
        let j = rng.gen_range(0..pts.len());
        let k = rng.gen_range(0..pts.len());
        if i == j || j == k || i == k {
            continue;
        }
        let n = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
        let len = n.norm();
        if len < 1e-12 {
            continue;
        }
        let n = n / len;
        let d = -n.dot(&pts[i]);
        let count = pts.iter().filter(|p| (n.dot(p) + d).abs() <= thr).count();
        if best.as_ref().map_or(true, |b| count > b.0) {
            best = Some((count, n, d));
        }
    }

    let (n, d) = match best {
        Some((_, n, d)) => (n, d),
        None => {
            // Random triples can miss a non-degenerate one on tiny inputs.
            exhaustive_hypothesis(&pts)
                .ok_or_else(|| Error::Fit("all points are collinear".into()))?
        }
    };
    let inliers: Vec<&Vector3<f64>> = pts.iter().filter(|p| (n.dot(p) + d).abs() <= thr).collect();
    let (n, d) = if inliers.len() >= 3 {
        least_squares_plane(&inliers).unwrap_or((n, d))
    } else {
        (n, d)
    };
    GroundPlane::new(T::of(n.x), T::of(n.y), T::of(n.z), T::of(d))
        .map(|p| p.canonical())
        .map_err(|e| Error::Fit(format!("fitted plane rejected: {e}")))
}

fn exhaustive_hypothesis(pts: &[Vector3<f64>]) -> Option<(Vector3<f64>, f64)> {
    let p0 = pts[0];
    let p1 = pts.iter().find(|p| (*p - p0).norm() > 1e-12)?;
    for p2 in pts {
        let n = (p1 - p0).cross(&(p2 - p0));
        if n.norm() > 1e-12 {
            let n = n.normalize();
            return Some((n, -n.dot(&p0)));
        }
    }
    None
}

fn least_squares_plane(pts: &[&Vector3<f64>]) -> Option<(Vector3<f64>, f64)> {
    let inv = 1.0 / pts.len() as f64;
    let centroid = pts.iter().fold(Vector3::zeros(), |acc, p| acc + *p) * inv;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let q = *p - centroid;
        cov += q * q.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let n = eig.eigenvectors.column(idx).into_owned();
    if n.norm() < 1e-12 {
        return None;
    }
    let n = n.normalize();
    Some((n, -n.dot(&centroid)))
}
