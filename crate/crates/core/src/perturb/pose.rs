use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, Mat3, Vec3};
use crate::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    /// Bound on |pitch| and |roll| (degrees).
    pub max_angle_deg: f64,
    /// Bound on |ε_z| (meters).
    pub max_eps_z: f64,
    /// Gap-fill and smoothing window (odd).
    pub kernel: usize,
    pub sigma: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            max_angle_deg: 2.0,
            max_eps_z: 2.0,
            kernel: 3,
            sigma: 1.0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_angle_deg >= 0.0 && self.max_eps_z >= 0.0) {
            return Err(Error::Config("perturbation bounds must be ≥ 0".into()));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma {} must be > 0", self.sigma)));
        }
        Ok(())
    }
}

/// Camera pitch `theta` and roll `alpha` (radians) and forward shift `eps_z`
/// (meters).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PosePerturbation<T> {
    pub theta: T,
    pub alpha: T,
    pub eps_z: T,
}

impl<T: Real> PosePerturbation<T> {
    pub fn from_degrees(theta_deg: T, alpha_deg: T, eps_z: T) -> Self {
        Self {
            theta: theta_deg.to_radians(),
            alpha: alpha_deg.to_radians(),
            eps_z,
        }
    }

    /// Independent uniform draws within the configured bounds.
    pub fn sample<R: Rng + ?Sized>(config: &PerturbConfig, rng: &mut R) -> Self {
        let a = config.max_angle_deg.to_radians();
        let e = config.max_eps_z;
        let mut draw = |b: f64| if b > 0.0 { rng.gen_range(-b..=b) } else { 0.0 };
        let theta = draw(a);
        let alpha = draw(a);
        let eps_z = draw(e);
        Self {
            theta: T::of(theta),
            alpha: T::of(alpha),
            eps_z: T::of(eps_z),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.theta == T::zero() && self.alpha == T::zero() && self.eps_z == T::zero()
    }
}

/// Rigid map `p ↦ R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    #[inline]
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// `(Rᵀ, −Rᵀ·t)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }
}

/// `R = Rx(θ)·Rz(α)`, `t = (0, 0, ε_z)`.
pub fn perturbation_matrix<T: Real>(p: &PosePerturbation<T>) -> RigidTransform<T> {
    let (o, z) = (T::one(), T::zero());
    let (st, ct) = p.theta.sin_cos();
    let (sa, ca) = p.alpha.sin_cos();
    let rx = Mat3::from_rows([[o, z, z], [z, ct, -st], [z, st, ct]]);
    let rz = Mat3::from_rows([[ca, -sa, z], [sa, ca, z], [z, z, o]]);
    RigidTransform {
        rotation: rx.mul_mat(&rz),
        translation: Vec3::new(z, z, p.eps_z),
    }
}

/// Moves every point and every label position; colors, dims and yaw are
/// untouched. Points may end up behind the camera; renderers skip them.
pub fn transform_scene<T: Real>(
    points: &[Vec3<T>],
    labels: &[Box3D<T>],
    transform: &RigidTransform<T>,
) -> (Vec<Vec3<T>>, Vec<Box3D<T>>) {
    let moved = points.iter().map(|&p| transform.apply(p)).collect();
    let labels = labels
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.position = transform.apply(b.position);
            b
        })
        .collect();
    (moved, labels)
}
