//! Depth substitution that removes foreground objects from a scene.

use crate::error::Result;
use crate::geometry::morph::dilate_disk;
use crate::geometry::{CameraIntrinsics, DepthMap, GroundPlane, Grid, Mask};
use crate::Real;

pub const FOREGROUND_DILATION: usize = 2;

/// Union of all instance masks, dilated to swallow segmentation halos.
pub fn foreground_mask(instances: &Grid<u16>, dilation_radius: usize) -> Mask {
    dilate_disk(&instances.map(|&id| id != 0), dilation_radius)
}

/// Per column, every foreground pixel takes the depth of the pixel directly
/// above the column's topmost foreground pixel; INF if that pixel is row 0.
pub fn background_depth<T: Real>(depth: &DepthMap<T>, fg: &Mask) -> Result<DepthMap<T>> {
    depth.ensure_dims(fg)?;
    let mut out = depth.clone();
    for u in 0..depth.width() {
        let Some(top) = (0..depth.height()).find(|&v| *fg.get(u, v)) else {
            continue;
        };
        let fill = if top == 0 {
            T::infinity()
        } else {
            *depth.get(u, top - 1)
        };
        for v in top..depth.height() {
            if *fg.get(u, v) {
                out.set(u, v, fill);
            }
        }
    }
    Ok(out)
}

/// Depth of the plane along each pixel ray; INF at and above the horizon.
pub fn ground_depth<T: Real>(plane: &GroundPlane<T>, camera: &CameraIntrinsics<T>) -> Result<DepthMap<T>> {
    let plane = GroundPlane::new(plane.a, plane.b, plane.c, plane.d)?;
    let n = plane.normal();
    let eps = T::of(1e-12);
    Ok(Grid::from_fn(camera.width, camera.height, |u, v| {
        let ray = camera.ray(T::from_usize(u).unwrap(), T::from_usize(v).unwrap());
        let denom = n.dot(ray);
        if denom.abs() < eps {
            return T::infinity();
        }
        let t = -plane.d / denom;
        if t > T::zero() {
            t
        } else {
            T::infinity()
        }
    }))
}

/// Foreground depth is the nearer of the column background fill and the
/// ground; everything else is copied. An unobserved background fill defers
/// to the ground.
pub fn empty_scene_depth<T: Real>(
    depth: &DepthMap<T>,
    fg: &Mask,
    plane: &GroundPlane<T>,
    camera: &CameraIntrinsics<T>,
) -> Result<DepthMap<T>> {
    camera_dims_match(depth, camera)?;
    let bg = background_depth(depth, fg)?;
    let ground = ground_depth(plane, camera)?;
    let mut out = depth.clone();
    for (i, z) in out.as_mut_slice().iter_mut().enumerate() {
        if fg.as_slice()[i] {
            *z = nearer(bg.as_slice()[i], ground.as_slice()[i]);
        }
    }
    Ok(out)
}

fn nearer<T: Real>(bg: T, ground: T) -> T {
    if bg == T::zero() {
        ground
    } else {
        bg.min(ground)
    }
}

pub(crate) fn camera_dims_match<T: Real, P: Clone>(grid: &Grid<P>, camera: &CameraIntrinsics<T>) -> Result<()> {
    if grid.dims() != (camera.width, camera.height) {
        return Err(crate::Error::dims(
            format!("{}x{}", camera.width, camera.height),
            format!("{}x{}", grid.width(), grid.height()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VerticalAxis;

    fn column(values: &[f64]) -> DepthMap<f64> {
        Grid::from_vec(1, values.len(), values.to_vec()).unwrap()
    }

    fn col_mask(rows: &[usize], h: usize) -> Mask {
        Grid::from_fn(1, h, |_, v| rows.contains(&v))
    }

    #[test]
    fn empty_foreground_is_identity() {
        let d = Grid::from_fn(4, 3, |u, v| (u * 3 + v) as f64 + 1.0);
        let fg = Grid::filled(4, 3, false);
        assert_eq!(background_depth(&d, &fg).unwrap(), d);
    }

    #[test]
    fn column_fill_from_above() {
        let mut vals: Vec<f64> = (0..12).map(|v| 40.0 - v as f64).collect();
        vals[4] = 20.0;
        let out = background_depth(&column(&vals), &col_mask(&[5, 6, 7, 8, 9], 12)).unwrap();
        for v in 5..=9 {
            assert_eq!(*out.get(0, v), 20.0);
        }
        assert_eq!(*out.get(0, 10), vals[10]);
    }

    #[test]
    fn disjoint_spans_share_the_topmost_fill() {
        let mut vals = vec![50.0; 12];
        vals[2] = 30.0;
        let out = background_depth(&column(&vals), &col_mask(&[3, 4, 8, 9], 12)).unwrap();
        for v in [3, 4, 8, 9] {
            assert_eq!(*out.get(0, v), 30.0);
        }
    }

    #[test]
    fn foreground_at_top_row_is_infinite() {
        let out = background_depth(&column(&[5.0, 5.0, 5.0]), &col_mask(&[0, 1], 3)).unwrap();
        assert!(out.get(0, 0).is_infinite() && out.get(0, 1).is_infinite());
    }

    #[test]
    fn ground_depth_similar_triangles() {
        let k = CameraIntrinsics::<f64>::new(700.0, 700.0, 50.0, 20.0, 100, 40, VerticalAxis::YUp).unwrap();
        let g = ground_depth(&GroundPlane::level(1.65, VerticalAxis::YUp), &k).unwrap();
        assert!(g.get(50, 20).is_infinite());
        assert!((g.get(50, 21) - 1155.0).abs() < 1e-9);
        assert!((g.get(50, 30) - 115.5).abs() < 1e-9);
        for v in 0..=20 {
            assert!((0..100).all(|u| g.get(u, v).is_infinite()));
        }
        let kd = k.with_axis(VerticalAxis::YDown);
        let gd = ground_depth(&GroundPlane::level(1.65, VerticalAxis::YDown), &kd).unwrap();
        assert_eq!(gd, g);
    }

    #[test]
    fn empty_depth_takes_the_minimum() {
        let k = CameraIntrinsics::<f64>::new(10.0, 10.0, 1.5, 1.5, 3, 4, VerticalAxis::YUp).unwrap();
        let plane = GroundPlane::level(1.2, VerticalAxis::YUp);
        let d = Grid::filled(3, 4, 20.0);
        let mut fg = Grid::filled(3, 4, false);
        fg.set(1, 3, true);
        let out = empty_scene_depth(&d, &fg, &plane, &k).unwrap();
        // ray at v = 3: z = 1.2·10/1.5 = 8
        assert!((out.get(1, 3) - 8.0).abs() < 1e-12);
        assert_eq!(*out.get(0, 3), 20.0);
        assert_eq!(empty_scene_depth(&d, &Grid::filled(3, 4, false), &plane, &k).unwrap(), d);
    }

    #[test]
    fn foreground_mask_dilates_union() {
        let mut inst = Grid::filled(7, 7, 0u16);
        inst.set(1, 1, 3);
        inst.set(5, 5, 9);
        let m = foreground_mask(&inst, 1);
        assert_eq!(m.count(), 10);
        assert!(*m.get(1, 0) && *m.get(5, 6) && !*m.get(3, 3));
    }
}
