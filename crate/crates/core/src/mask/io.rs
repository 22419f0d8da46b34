//! PNG/JPEG ingestion and PNG export of masks and label images.

use std::io::Write;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};

use super::{BinaryMask, GrayFrame, InstanceMask};
use crate::error::{Error, Result};

/// Ground-truth pixels at or above this intensity are foreground.
pub const GT_THRESHOLD: u8 = 128;

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage {
            path: path.to_path_buf(),
        });
    }
    Ok(img)
}

/// Loads an 8-bit grayscale (or convertible) image as intensity / 255.
pub fn load_gray(path: &Path) -> Result<GrayFrame> {
    let img = open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img
        .into_raw()
        .into_iter()
        .map(|v| f64::from(v) / 255.0)
        .collect();
    GrayFrame::new(w, h, values)
}

/// Loads a ground-truth mask; foreground iff intensity >= 128.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let bits = img
        .into_raw()
        .into_iter()
        .map(|v| v >= GT_THRESHOLD)
        .collect();
    BinaryMask::new(w, h, bits)
}

/// Loads a label image; distinct non-zero values become instances 1..=K.
pub fn load_instances(path: &Path) -> Result<InstanceMask> {
    let img = open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<u32> = img.into_raw().into_iter().map(u32::from).collect();
    InstanceMask::from_raw_labels(w, h, &raw)
}

/// Reads only the header to get `(width, height)`.
pub fn image_dims(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    Ok((w as usize, h as usize))
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    let raw = mask
        .bits()
        .iter()
        .map(|&b| if b { 255u8 } else { 0 })
        .collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .ok_or_else(|| Error::invalid("mask buffer size"))?;
    encode_png(DynamicImage::ImageLuma8(img))
}

/// Label images use 8-bit PNG while labels fit, 16-bit otherwise.
pub fn encode_labels_png(labels: &InstanceMask) -> Result<Vec<u8>> {
    let (w, h) = (labels.width() as u32, labels.height() as u32);
    let img = if labels.instance_count() <= u32::from(u8::MAX) {
        let raw = labels.labels().iter().map(|&l| l as u8).collect();
        DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, raw).ok_or_else(|| Error::invalid("label buffer size"))?,
        )
    } else {
        let raw: Vec<u16> = labels.labels().iter().map(|&l| l as u16).collect();
        DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw)
                .ok_or_else(|| Error::invalid("label buffer size"))?,
        )
    };
    encode_png(img)
}

pub fn encode_gray_png(frame: &GrayFrame) -> Result<Vec<u8>> {
    let raw = frame
        .values()
        .iter()
        .map(|&v| (v * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(frame.width() as u32, frame.height() as u32, raw)
        .ok_or_else(|| Error::invalid("frame buffer size"))?;
    encode_png(DynamicImage::ImageLuma8(img))
}

fn encode_png(img: DynamicImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: "<png>".into(),
            source,
        })?;
    Ok(buf.into_inner())
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask_png(mask)?)
}

pub fn save_labels(labels: &InstanceMask, path: &Path) -> Result<()> {
    write_atomic(path, &encode_labels_png(labels)?)
}

pub fn save_gray(frame: &GrayFrame, path: &Path) -> Result<()> {
    write_atomic(path, &encode_gray_png(frame)?)
}

/// Writes through a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
