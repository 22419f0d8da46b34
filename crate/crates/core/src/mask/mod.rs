//! Raster primitives shared by the metrics, dataset and fusion layers.

mod components;
mod edt;
mod gaussian;
pub mod io;
mod polygon;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use components::{connected_components, Connectivity};
pub use edt::{euclidean_distance_transform, DistanceField};
pub use gaussian::{gaussian_filter_7x7, gaussian_kernel_7x7};
pub use polygon::{mask_to_polygons, polygons_to_mask, Contour, Point};

/// Normalized grayscale prediction map, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("gray frame must be at least 1x1"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "gray frame {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("gray value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Binary mask as a 0/1 prediction map.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width,
            height: mask.height,
            values: mask
                .bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Thresholding rule that turns a prediction map into a binary mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarize {
    Fixed(f64),
    /// Threshold at twice the mean prediction, capped just below 1.
    Adaptive,
}

impl Default for Binarize {
    fn default() -> Self {
        Binarize::Fixed(0.5)
    }
}

impl std::str::FromStr for Binarize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(Binarize::Adaptive);
        }
        let t = s.strip_prefix("fixed:").ok_or_else(|| {
            Error::invalid(format!(
                "binarize policy `{s}`: expected fixed:<t> or adaptive"
            ))
        })?;
        let t: f64 = t
            .parse()
            .map_err(|_| Error::invalid(format!("binarize threshold `{t}` is not a number")))?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!(
                "binarize threshold {t} outside [0, 1]"
            )));
        }
        Ok(Binarize::Fixed(t))
    }
}

impl std::fmt::Display for Binarize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Binarize::Fixed(t) => write!(f, "fixed:{t}"),
            Binarize::Adaptive => f.write_str("adaptive"),
        }
    }
}

pub fn binarize(frame: &GrayFrame, policy: Binarize) -> BinaryMask {
    let threshold = match policy {
        Binarize::Fixed(t) => t,
        Binarize::Adaptive => (2.0 * frame.mean()).min(1.0 - f64::EPSILON),
    };
    BinaryMask {
        width: frame.width,
        height: frame.height,
        bits: frame.values.iter().map(|&v| v >= threshold).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "mask {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    /// Builds a mask from a per-pixel predicate `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground fraction of the frame.
    pub fn area_ratio(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// Multi-instance label raster: 0 is background, `1..=instance_count` are instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    instance_count: u32,
}

impl InstanceMask {
    /// Labels must already form `{0} ∪ 1..=m` with `m <= instance_count`.
    pub fn new(width: usize, height: usize, labels: Vec<u32>, instance_count: u32) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::invalid("label count does not match dimensions"));
        }
        let max = labels.iter().copied().max().unwrap_or(0);
        if max > instance_count {
            return Err(Error::invalid(format!(
                "label {max} exceeds instance count {instance_count}"
            )));
        }
        let mut seen = vec![false; max as usize + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(gap) = seen.iter().skip(1).position(|s| !s) {
            return Err(Error::invalid(format!("instance labels skip {}", gap + 1)));
        }
        Ok(Self {
            width,
            height,
            labels,
            instance_count,
        })
    }

    /// Renumbers arbitrary raw label values (e.g. palette indices) to
    /// contiguous ids in ascending order of the raw value.
    pub fn from_raw_labels(width: usize, height: usize, raw: &[u32]) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::invalid("label count does not match dimensions"));
        }
        let mut values: Vec<u32> = raw.iter().copied().filter(|&v| v != 0).collect();
        values.sort_unstable();
        values.dedup();
        let labels = raw
            .iter()
            .map(|&v| {
                if v == 0 {
                    0
                } else {
                    values.binary_search(&v).map(|i| i as u32 + 1).unwrap_or(0)
                }
            })
            .collect();
        Ok(Self {
            width,
            height,
            labels,
            instance_count: values.len() as u32,
        })
    }

    /// Single-instance view of a binary mask.
    pub fn from_binary(mask: &BinaryMask) -> Self {
        let labels = mask.bits().iter().map(|&b| b as u32).collect();
        Self {
            width: mask.width(),
            height: mask.height(),
            labels,
            instance_count: u32::from(!mask.is_empty()),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn instance_count(&self) -> u32 {
        self.instance_count
    }

    pub fn instance(&self, label: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    /// Union of all instances.
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l != 0).collect(),
        }
    }
}

/// Inclusive pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

pub fn bbox_of(mask: &BinaryMask) -> Result<BBox> {
    let mut bbox: Option<BBox> = None;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                continue;
            }
            bbox = Some(match bbox {
                None => BBox {
                    x_min: x,
                    y_min: y,
                    x_max: x,
                    y_max: y,
                },
                Some(b) => BBox {
                    x_min: b.x_min.min(x),
                    y_min: b.y_min,
                    x_max: b.x_max.max(x),
                    y_max: y,
                },
            });
        }
    }
    bbox.ok_or(Error::EmptyForeground("bbox_of"))
}

/// Foreground centroid as `(row, col)`, each mean rounded half-up.
pub fn centroid(mask: &BinaryMask) -> Result<(usize, usize)> {
    let (mut sum_r, mut sum_c, mut n) = (0u64, 0u64, 0u64);
    for (i, _) in mask.bits.iter().enumerate().filter(|(_, &b)| b) {
        sum_r += (i / mask.width) as u64;
        sum_c += (i % mask.width) as u64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyForeground("centroid"));
    }
    // floor(sum / n + 1/2) in integers
    let round = |s: u64| ((2 * s + n) / (2 * n)) as usize;
    Ok((round(sum_r), round(sum_c)))
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
