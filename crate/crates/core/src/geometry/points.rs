use serde::{Deserialize, Serialize};

use super::grid::Rgb;
use super::vec::Vec3;
use crate::error::{Error, Result};
use crate::Real;

/// Camera-frame points with one color each; the unit of object decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TexturedPointSet<T> {
    positions: Vec<Vec3<T>>,
    colors: Vec<Rgb>,
}

impl<T: Real> TexturedPointSet<T> {
    pub fn new(positions: Vec<Vec3<T>>, colors: Vec<Rgb>) -> Result<Self> {
        if positions.len() != colors.len() {
            return Err(Error::dims(
                format!("{} colors", positions.len()),
                colors.len(),
            ));
        }
        if positions.is_empty() {
            return Err(Error::EmptySelection);
        }
        if let Some(i) = positions.iter().position(|p| !(p.z > T::zero())) {
            return Err(Error::Domain(format!(
                "point {i} has non-positive depth {}",
                positions[i].z
            )));
        }
        Ok(Self { positions, colors })
    }

    pub fn positions(&self) -> &[Vec3<T>] {
        &self.positions
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Vec3<T> {
        let n = T::of(self.positions.len() as f64);
        let sum = self
            .positions
            .iter()
            .fold(Vec3::zero(), |acc, &p| acc + p);
        sum * (T::one() / n)
    }

    /// Rigid translation of every point.
    pub fn translated(&self, offset: Vec3<T>) -> Result<Self> {
        Self::new(
            self.positions.iter().map(|&p| p + offset).collect(),
            self.colors.clone(),
        )
    }

    pub fn into_parts(self) -> (Vec<Vec3<T>>, Vec<Rgb>) {
        (self.positions, self.colors)
    }
}
