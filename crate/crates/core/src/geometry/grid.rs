//! Dense row-major image grids: depth maps, color images and pixel masks.

use crate::error::{Error, Result};
use crate::Real;

pub type Rgb = [u8; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

/// Per-pixel depth in meters; `0` = unobserved, `+inf` = infinitely far.
pub type DepthMap<T> = Grid<T>;
pub type ColorImage = Grid<Rgb>;
pub type Mask = Grid<bool>;

impl<P: Clone> Grid<P> {
    pub fn filled(width: usize, height: usize, value: P) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<P>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims(
                format!("{} values for {width}x{height}", width * height),
                data.len(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &P {
        &self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: P) {
        let i = v * self.width + u;
        self.data[i] = value;
    }

    /// Bounds-checked access with signed coordinates.
    #[inline]
    pub fn try_get(&self, u: i64, v: i64) -> Option<&P> {
        if u < 0 || v < 0 || u as usize >= self.width || v as usize >= self.height {
            None
        } else {
            Some(&self.data[v as usize * self.width + u as usize])
        }
    }

    #[inline]
    pub fn as_slice(&self) -> &[P] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [P] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<P> {
        self.data
    }

    pub fn same_dims<Q>(&self, other: &Grid<Q>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_dims<Q>(&self, other: &Grid<Q>) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ))
        }
    }

    pub fn map<Q>(&self, f: impl FnMut(&P) -> Q) -> Grid<Q> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    /// Selected pixel coordinates `(u, v)` in row-major order.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                if self.data[v * self.width + u] {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.ensure_dims(other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        self.ensure_dims(other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }
}

impl<T: Real> DepthMap<T> {
    pub fn observed_mask(&self) -> Mask {
        self.map(|&z| crate::is_observed(z))
    }
}
