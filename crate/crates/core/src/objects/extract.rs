//! Textured point model extraction and outlier detection.

use crate::error::{Error, Result};
use crate::geometry::morph::dilate_disk;
use crate::geometry::{
    unproject, Box3D, CameraIntrinsics, ColorImage, DepthMap, Grid, Mask, TexturedPointSet, Vec3,
};
use crate::{is_observed, Real};

use super::record::{Membership, ObjectQuality, ObjectRecord, ObjectSource};

pub const MIN_OBJECT_POINTS: usize = 10;

/// Back-projects the masked pixels into a textured point model.
pub fn extract_object<T: Real>(
    depth: &DepthMap<T>,
    image: &ColorImage,
    mask: &Mask,
    camera: &CameraIntrinsics<T>,
    bbox: &Box3D<T>,
    source: &ObjectSource,
) -> Result<ObjectRecord<T>> {
    bbox.validate()?;
    depth.ensure_dims(image)?;
    depth.ensure_dims(mask)?;
    if !mask.any() {
        return Err(Error::Extraction(format!(
            "empty mask for object {}",
            source.object_id()
        )));
    }
    let positions = match unproject(depth, camera, Some(mask)) {
        Ok(p) => p,
        Err(Error::EmptySelection) => {
            return Err(Error::Extraction(format!(
                "no observed depth under mask of object {}",
                source.object_id()
            )))
        }
        Err(e) => return Err(e),
    };
    if positions.len() < MIN_OBJECT_POINTS {
        return Err(Error::TooSparse {
            count: positions.len(),
            min: MIN_OBJECT_POINTS,
        });
    }
    // Same row-major traversal as `unproject`.
    let colors = mask
        .pixels()
        .into_iter()
        .filter(|&(u, v)| is_observed(*depth.get(u, v)))
        .map(|(u, v)| *image.get(u, v))
        .collect();
    Ok(ObjectRecord {
        id: source.object_id(),
        model: TexturedPointSet::new(positions, colors)?,
        bbox: bbox.clone(),
        source_scene_id: source.scene_id.clone(),
        quality: ObjectQuality {
            depth: bbox.position.z,
            occlusion_level: source.occlusion_level,
            truncation: source.truncation,
            waymo: source.waymo,
        },
        instance_id: source.instance_id,
        membership: Membership::default(),
    })
}

/// Pixels whose point lies outside the box, dilated by a disk of
/// `dilation_radius` and clipped to the foreground mask.
///
/// `positions[i]` must be the point of pixel `pixels[i]`.
pub fn find_outliers<T: Real>(
    positions: &[Vec3<T>],
    pixels: &[(usize, usize)],
    bbox: &Box3D<T>,
    mask: &Mask,
    dilation_radius: usize,
    camera: &CameraIntrinsics<T>,
) -> Result<Mask> {
    if positions.len() != pixels.len() {
        return Err(Error::dims(
            format!("{} pixels", positions.len()),
            pixels.len(),
        ));
    }
    let mut outside = Grid::filled(mask.width(), mask.height(), false);
    for (&p, &(u, v)) in positions.iter().zip(pixels) {
        if !bbox.contains(p, T::zero(), camera.axis) {
            outside.set(u, v, true);
        }
    }
    dilate_disk(&outside, dilation_radius).intersect(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Dims, ObjectClass, VerticalAxis};

    pub(crate) fn camera() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(500.0, 500.0, 40.0, 30.0, 80, 60, VerticalAxis::YUp).unwrap()
    }

    /// Fronto-parallel face of a box at z = 10: every masked pixel sees the face.
    fn face_fixture() -> (DepthMap<f64>, ColorImage, Mask, Box3D<f64>) {
        let k = camera();
        let bbox = Box3D::new(
            Vec3::new(0.0, -1.0, 10.5),
            Dims { h: 1.0, w: 1.0, l: 1.0 },
            0.0,
            ObjectClass::Car,
        )
        .unwrap();
        let mut depth = Grid::filled(80, 60, 30.0);
        let mut mask = Grid::filled(80, 60, false);
        for v in 0..60 {
            for u in 0..80 {
                let p = k.unproject_pixel(u as f64, v as f64, 10.0);
                if p.x.abs() < 0.45 && p.y > -0.95 && p.y < -0.05 {
                    depth.set(u, v, 10.0);
                    mask.set(u, v, true);
                }
            }
        }
        let image = Grid::from_fn(80, 60, |u, v| [u as u8, v as u8, 9]);
        (depth, image, mask, bbox)
    }

    #[test]
    fn perfect_geometry_stays_in_box() {
        let (depth, image, mask, bbox) = face_fixture();
        let rec = extract_object(&depth, &image, &mask, &camera(), &bbox, &ObjectSource::default()).unwrap();
        assert_eq!(rec.model.len(), mask.count());
        assert_eq!(rec.in_box_fraction(0.0, VerticalAxis::YUp), 1.0);
        assert_eq!(rec.quality.depth, bbox.position.z);
        // Colors follow the mask traversal.
        let first = mask.pixels()[0];
        assert_eq!(rec.model.colors()[0], [first.0 as u8, first.1 as u8, 9]);
    }

    #[test]
    fn centroid_matches_analytic() {
        let (depth, image, mask, bbox) = face_fixture();
        let k = camera();
        let rec = extract_object(&depth, &image, &mask, &k, &bbox, &ObjectSource::default()).unwrap();
        // Independent centroid: average the pinhole rays of the masked pixels.
        let px = mask.pixels();
        let n = px.len() as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(u, v) in &px {
            sx += (u as f64 - 40.0) / 500.0 * 10.0;
            sy += -(v as f64 - 30.0) / 500.0 * 10.0;
        }
        let c = rec.model.centroid();
        assert!((c.x - sx / n).abs() < 1e-6 && (c.y - sy / n).abs() < 1e-6 && (c.z - 10.0).abs() < 1e-6);
    }

    #[test]
    fn extraction_errors() {
        let (depth, image, mask, bbox) = face_fixture();
        let empty = Grid::filled(80, 60, false);
        assert!(matches!(
            extract_object(&depth, &image, &empty, &camera(), &bbox, &ObjectSource::default()),
            Err(Error::Extraction(_))
        ));
        let mut tiny = Grid::filled(80, 60, false);
        let px = mask.pixels();
        for &(u, v) in px.iter().take(5) {
            tiny.set(u, v, true);
        }
        assert!(matches!(
            extract_object(&depth, &image, &tiny, &camera(), &bbox, &ObjectSource::default()),
            Err(Error::TooSparse { count: 5, .. })
        ));
    }

    #[test]
    fn outliers_empty_when_all_inside() {
        let (depth, image, mask, bbox) = face_fixture();
        let k = camera();
        let rec = extract_object(&depth, &image, &mask, &k, &bbox, &ObjectSource::default()).unwrap();
        let out = find_outliers(rec.model.positions(), &mask.pixels(), &bbox, &mask, 3, &k).unwrap();
        assert_eq!(out.count(), 0);
    }

    #[test]
    fn outlier_dilation_is_a_clipped_disk() {
        let (mut depth, image, mask, bbox) = face_fixture();
        let k = camera();
        let px = mask.pixels();
        // Push the top-left mask pixel far behind the box.
        let (cu, cv) = px[0];
        depth.set(cu, cv, 25.0);
        let rec = extract_object(&depth, &image, &mask, &k, &bbox, &ObjectSource::default()).unwrap();
        let exact = find_outliers(rec.model.positions(), &px, &bbox, &mask, 0, &k).unwrap();
        assert_eq!(exact.pixels(), vec![(cu, cv)]);
        let grown = find_outliers(rec.model.positions(), &px, &bbox, &mask, 2, &k).unwrap();
        // Oracle: enumerate the radius-2 disk around the corner and keep mask pixels.
        let mut expected = Vec::new();
        for v in 0..60i64 {
            for u in 0..80i64 {
                let (du, dv) = (u - cu as i64, v - cv as i64);
                if du * du + dv * dv <= 4 && *mask.get(u as usize, v as usize) {
                    expected.push((u as usize, v as usize));
                }
            }
        }
        assert_eq!(grown.pixels(), expected);
        assert!(grown.count() <= 13);
        assert_eq!(grown.intersect(&mask).unwrap(), grown);
    }
}
