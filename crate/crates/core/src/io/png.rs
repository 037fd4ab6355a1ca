use std::path::Path;

use image::{ImageBuffer, Luma, Rgb as ImgRgb};

use crate::error::{Error, Result};
use crate::geometry::{ColorImage, DepthMap, Grid};
use crate::Real;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_color(path: &Path) -> Result<ColorImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_rgb8();
    let (w, h) = img.dimensions();
    Grid::from_vec(
        w as usize,
        h as usize,
        img.pixels().map(|p| p.0).collect(),
    )
}

pub fn write_color(path: &Path, img: &ColorImage) -> Result<()> {
    ensure_parent(path)?;
    let buf: ImageBuffer<ImgRgb<u8>, Vec<u8>> = ImageBuffer::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.as_slice().iter().flat_map(|p| *p).collect(),
    )
    .expect("buffer sized from grid");
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Instance-id mask: 8- or 16-bit single channel, `0` is background.
pub fn read_instance_mask(path: &Path) -> Result<Grid<u16>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ids: Vec<u16> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as u16).collect(),
        other => other.into_luma16().pixels().map(|p| p.0[0]).collect(),
    };
    Grid::from_vec(w, h, ids)
}

pub fn write_instance_mask(path: &Path, mask: &Grid<u16>) -> Result<()> {
    ensure_parent(path)?;
    if mask.as_slice().iter().all(|&v| v <= u8::MAX as u16) {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
            mask.width() as u32,
            mask.height() as u32,
            mask.as_slice().iter().map(|&v| v as u8).collect(),
        )
        .expect("buffer sized from grid");
        buf.save(path).map_err(|e| image_err(path, e))
    } else {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
            mask.width() as u32,
            mask.height() as u32,
            mask.as_slice().to_vec(),
        )
        .expect("buffer sized from grid");
        buf.save(path).map_err(|e| image_err(path, e))
    }
}

/// 16-bit depth PNG in the KITTI depth-completion encoding (`value / 256` meters, 0 = none).
pub fn read_depth_png<T: Real>(path: &Path) -> Result<DepthMap<T>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_luma16();
    let (w, h) = img.dimensions();
    Grid::from_vec(
        w as usize,
        h as usize,
        img.pixels().map(|p| T::of(p.0[0] as f64 / 256.0)).collect(),
    )
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}
