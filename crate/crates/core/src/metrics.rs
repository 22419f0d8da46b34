//! Five-metric frame evaluation: S-measure, weighted F-measure, MAE, Dice and IoU.
//!
//! All sums run in row-major order in `f64`, so scores are reproducible
//! bit for bit across runs and thread counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{
    binarize, centroid, ensure_same_dims, euclidean_distance_transform, gaussian_filter_7x7,
    Binarize, BinaryMask, GrayFrame,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Object/region balance of the S-measure.
    pub alpha: f64,
    pub beta_sq: f64,
    pub wf_sigma: f64,
    /// Distance (pixels) at which background error weight reaches 1.5.
    pub wf_decay: f64,
    pub epsilon: f64,
    pub binarize: Binarize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta_sq: 1.0,
            wf_sigma: 5.0,
            wf_decay: 5.0,
            epsilon: f64::EPSILON,
            binarize: Binarize::default(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        for (name, v) in [
            ("beta_sq", self.beta_sq),
            ("wf_sigma", self.wf_sigma),
            ("wf_decay", self.wf_decay),
            ("epsilon", self.epsilon),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Binarize::Fixed(t) = self.binarize {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(format!(
                    "binarize threshold {t} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameScores {
    pub s_alpha: f64,
    pub f_beta_w: f64,
    pub mae: f64,
    pub dice: f64,
    pub iou: f64,
}

impl FrameScores {
    pub const PERFECT: FrameScores = FrameScores {
        s_alpha: 1.0,
        f_beta_w: 1.0,
        mae: 0.0,
        dice: 1.0,
        iou: 1.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [self.s_alpha, self.f_beta_w, self.mae, self.dice, self.iou]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            s_alpha: a[0],
            f_beta_w: a[1],
            mae: a[2],
            dice: a[3],
            iou: a[4],
        }
    }

    /// Component-wise mean, summed in iteration order.
    pub fn mean<'a>(scores: impl IntoIterator<Item = &'a FrameScores>) -> Option<FrameScores> {
        let mut sum = [0.0; 5];
        let mut n = 0usize;
        for s in scores {
            for (acc, v) in sum.iter_mut().zip(s.as_array()) {
                *acc += v;
            }
            n += 1;
        }
        (n > 0).then(|| FrameScores::from_array(sum.map(|v| v / n as f64)))
    }
}

pub fn mae(pred: &GrayFrame, gt: &BinaryMask) -> Result<f64> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    let sum: f64 = pred
        .values()
        .iter()
        .zip(gt.bits())
        .map(|(&p, &g)| (p - f64::from(u8::from(g))).abs())
        .sum();
    Ok(sum / pred.values().len() as f64)
}

fn overlap_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<(usize, usize, usize)> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    let (mut inter, mut p, mut g) = (0, 0, 0);
    for (&a, &b) in pred.bits().iter().zip(gt.bits()) {
        inter += usize::from(a && b);
        p += usize::from(a);
        g += usize::from(b);
    }
    Ok((inter, p, g))
}

/// `2|P∩G| / (|P|+|G|)`, 1 when both are empty.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, p, g) = overlap_counts(pred, gt)?;
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// `|P∩G| / |P∪G|`, 1 when both are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, p, g) = overlap_counts(pred, gt)?;
    let union = p + g - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Mean and sample standard deviation (0 for fewer than two values).
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn object_score(values: impl Iterator<Item = f64> + Clone, eps: f64) -> f64 {
    let (mean, std) = mean_std(values);
    2.0 * mean / (mean * mean + 1.0 + std + eps)
}

fn s_object(pred: &GrayFrame, gt: &BinaryMask, eps: f64) -> f64 {
    let pairs = pred.values().iter().copied().zip(gt.bits().iter().copied());
    let fg = pairs.clone().filter(|&(_, g)| g).map(|(p, _)| p);
    let bg = pairs.filter(|&(_, g)| !g).map(|(p, _)| 1.0 - p);
    let mu = gt.area_ratio();
    mu * object_score(fg, eps) + (1.0 - mu) * object_score(bg, eps)
}

/// SSIM-style similarity of one rectangular block.
fn block_ssim(
    pred: &GrayFrame,
    gt: &BinaryMask,
    xs: (usize, usize),
    ys: (usize, usize),
    eps: f64,
) -> f64 {
    let w = pred.width();
    let n = ((xs.1 - xs.0) * (ys.1 - ys.0)) as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in ys.0..ys.1 {
        for x in xs.0..xs.1 {
            sx += pred.values()[y * w + x];
            sy += f64::from(u8::from(gt.bits()[y * w + x]));
        }
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for y in ys.0..ys.1 {
        for x in xs.0..xs.1 {
            let dx = pred.values()[y * w + x] - mx;
            let dy = f64::from(u8::from(gt.bits()[y * w + x])) - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
    let a = 4.0 * mx * my * cxy;
    let b = (mx * mx + my * my) * (vx + vy);
    if a != 0.0 {
        a / (b + eps)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn s_region(pred: &GrayFrame, gt: &BinaryMask, eps: f64) -> f64 {
    let (w, h) = gt.dims();
    let (row, col) = centroid(gt).expect("mixed ground truth has foreground");
    // Top/left blocks include the centroid row/column.
    let (xm, ym) = (col + 1, row + 1);
    let total = (w * h) as f64;
    let blocks = [
        ((0, xm), (0, ym)),
        ((xm, w), (0, ym)),
        ((0, xm), (ym, h)),
        ((xm, w), (ym, h)),
    ];
    blocks
        .into_iter()
        .filter(|(xs, ys)| xs.1 > xs.0 && ys.1 > ys.0)
        .map(|(xs, ys)| {
            let weight = ((xs.1 - xs.0) * (ys.1 - ys.0)) as f64 / total;
            weight * block_ssim(pred, gt, xs, ys, eps)
        })
        .sum()
}

pub fn s_measure(pred: &GrayFrame, gt: &BinaryMask, cfg: &MetricConfig) -> Result<f64> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    let fg = gt.count();
    if fg == 0 {
        return Ok(1.0 - pred.mean());
    }
    if fg == gt.bits().len() {
        return Ok(pred.mean());
    }
    let s = cfg.alpha * s_object(pred, gt, cfg.epsilon)
        + (1.0 - cfg.alpha) * s_region(pred, gt, cfg.epsilon);
    Ok(s.clamp(0.0, 1.0))
}

/// Weighted F-measure. An empty ground truth scores 0 and logs a warning.
pub fn weighted_f(pred: &GrayFrame, gt: &BinaryMask, cfg: &MetricConfig) -> Result<f64> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    if gt.is_empty() {
        log::warn!("weighted F-measure on empty ground truth scored as 0");
        return Ok(0.0);
    }
    let (w, h) = gt.dims();
    let eps = cfg.epsilon;
    let dist = euclidean_distance_transform(gt)?;
    let err: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.bits())
        .map(|(&p, &g)| (p - f64::from(u8::from(g))).abs())
        .collect();
    // Background pixels inherit the error of their nearest foreground pixel.
    let spread: Vec<f64> = (0..w * h)
        .map(|i| {
            if gt.bits()[i] {
                err[i]
            } else {
                err[dist.nearest()[i]]
            }
        })
        .collect();
    let smoothed = gaussian_filter_7x7(&spread, w, h, cfg.wf_sigma);

    let (mut fg_sum, mut bg_sum, mut fg_n) = (0.0, 0.0, 0usize);
    for i in 0..w * h {
        if gt.bits()[i] {
            let e = if smoothed[i] < err[i] {
                smoothed[i]
            } else {
                err[i]
            };
            fg_sum += e;
            fg_n += 1;
        } else {
            let importance = 2.0 - (-dist.distance()[i] / cfg.wf_decay).exp2();
            bg_sum += err[i] * importance;
        }
    }
    let recall = 1.0 - fg_sum / fg_n as f64;
    let tp = fg_n as f64 - fg_sum;
    let precision = tp / (tp + bg_sum + eps);
    let q = (1.0 + cfg.beta_sq) * precision * recall / (recall + cfg.beta_sq * precision + eps);
    Ok(q.clamp(0.0, 1.0))
}

pub fn eval_frame(pred: &GrayFrame, gt: &BinaryMask, cfg: &MetricConfig) -> Result<FrameScores> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    let bin = binarize(pred, cfg.binarize);
    Ok(FrameScores {
        s_alpha: s_measure(pred, gt, cfg)?,
        f_beta_w: weighted_f(pred, gt, cfg)?,
        mae: mae(pred, gt)?,
        dice: dice(&bin, gt)?,
        iou: iou(&bin, gt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> BinaryMask {
        BinaryMask::from_fn(w, h, f)
    }

    fn four_px(offset: usize) -> BinaryMask {
        mask(8, 1, move |x, _| (offset..offset + 4).contains(&x))
    }

    #[test]
    fn mae_cases() {
        let gt = mask(4, 4, |x, _| x < 2);
        assert_eq!(mae(&GrayFrame::from_mask(&gt), &gt).unwrap(), 0.0);
        let pred = GrayFrame::filled(4, 4, 0.25).unwrap();
        assert_eq!(mae(&pred, &BinaryMask::empty(4, 4)).unwrap(), 0.25);
        assert!(matches!(
            mae(&pred, &BinaryMask::empty(3, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dice_and_iou_counts() {
        let (p, g) = (four_px(0), four_px(2));
        assert_eq!(dice(&p, &g).unwrap(), 0.5);
        assert_eq!(iou(&p, &g).unwrap(), 2.0 / 6.0);
        assert_eq!(dice(&p, &p).unwrap(), 1.0);
        assert_eq!(iou(&p, &p).unwrap(), 1.0);
        let e = BinaryMask::empty(8, 1);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert_eq!(dice(&p, &e).unwrap(), 0.0);
    }

    #[test]
    fn s_measure_edge_rules() {
        let cfg = MetricConfig::default();
        let pred = GrayFrame::filled(5, 5, 0.3).unwrap();
        let s = s_measure(&pred, &BinaryMask::empty(5, 5), &cfg).unwrap();
        assert!((s - 0.7).abs() < 1e-12);
        let s = s_measure(&pred, &BinaryMask::full(5, 5), &cfg).unwrap();
        assert!((s - 0.3).abs() < 1e-12);
    }

    #[test]
    fn s_measure_perfect_prediction() {
        let gt = mask(9, 7, |x, y| x > 2 && y < 5);
        let s = s_measure(&GrayFrame::from_mask(&gt), &gt, &MetricConfig::default()).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn s_measure_centroid_on_last_row_drops_empty_blocks() {
        // Foreground only on the bottom row puts the split below the frame.
        let gt = mask(6, 4, |_, y| y == 3);
        let s = s_measure(&GrayFrame::from_mask(&gt), &gt, &MetricConfig::default()).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_f_extremes() {
        let cfg = MetricConfig::default();
        let gt = mask(16, 16, |x, y| (5..11).contains(&x) && (4..12).contains(&y));
        let perfect = weighted_f(&GrayFrame::from_mask(&gt), &gt, &cfg).unwrap();
        assert!((perfect - 1.0).abs() < 1e-9);
        let zero = weighted_f(&GrayFrame::filled(16, 16, 0.0).unwrap(), &gt, &cfg).unwrap();
        assert!(zero < 1e-12, "{zero}");
        let empty = weighted_f(
            &GrayFrame::filled(16, 16, 0.5).unwrap(),
            &BinaryMask::empty(16, 16),
            &cfg,
        );
        assert_eq!(empty.unwrap(), 0.0);
    }

    #[test]
    fn eval_frame_perfect_and_complement() {
        let cfg = MetricConfig::default();
        let gt = mask(12, 10, |x, y| x + y < 9);
        let s = eval_frame(&GrayFrame::from_mask(&gt), &gt, &cfg).unwrap();
        for (a, b) in s.as_array().iter().zip(FrameScores::PERFECT.as_array()) {
            assert!((a - b).abs() < 1e-9);
        }
        let c = eval_frame(&GrayFrame::from_mask(&gt.not()), &gt, &cfg).unwrap();
        assert_eq!((c.mae, c.dice, c.iou), (1.0, 0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(MetricConfig::default().validate().is_ok());
        let bad = MetricConfig {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MetricConfig {
            wf_sigma: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
