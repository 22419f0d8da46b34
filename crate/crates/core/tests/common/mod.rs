//! Test-side generators and a scalar reference implementation of the metrics,
//! written from the formulas directly on 2-D grids without sharing any code
//! with the library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcod_core::mask::{BinaryMask, GrayFrame};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random mask drawn from a mix of shapes: i.i.d. noise, rectangles and
/// discs, or a few scattered pixels.
pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    match rng.random_range(0..4) {
        0 => {
            let p: f64 = rng.random_range(0.05..0.95);
            BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
        }
        1 => {
            let shapes: Vec<(f64, f64, f64, bool)> = (0..rng.random_range(1..4))
                .map(|_| {
                    (
                        rng.random_range(0.0..w as f64),
                        rng.random_range(0.0..h as f64),
                        rng.random_range(0.5..(w.max(h) as f64 / 2.0).max(1.0)),
                        rng.random_bool(0.5),
                    )
                })
                .collect();
            BinaryMask::from_fn(w, h, |x, y| {
                shapes.iter().any(|&(cx, cy, r, disc)| {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if disc {
                        dx * dx + dy * dy <= r * r
                    } else {
                        dx.abs() <= r && dy.abs() <= r * 0.6
                    }
                })
            })
        }
        2 => {
            let mut m = BinaryMask::empty(w, h);
            for _ in 0..rng.random_range(1..=4) {
                m.set(rng.random_range(0..w), rng.random_range(0..h), true);
            }
            m
        }
        _ => {
            let p: f64 = rng.random_range(0.0..1.0);
            BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
        }
    }
}

/// A random mask with at least one foreground and one background pixel.
pub fn random_mixed_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    assert!(w * h >= 2);
    loop {
        let m = random_mask(rng, w, h);
        if !m.is_empty() && m.count() < w * h {
            return m;
        }
    }
}

/// A ground truth of the kind a dataset holds: Bernoulli noise or blobs of
/// radius at least 2 px, with both foreground and background present.
pub fn random_gt(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    assert!(w * h >= 2);
    loop {
        let m = if rng.random_bool(0.5) {
            let p: f64 = rng.random_range(0.05..0.95);
            BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
        } else {
            let blobs: Vec<(f64, f64, f64)> = (0..rng.random_range(1..4))
                .map(|_| {
                    (
                        rng.random_range(0.0..w as f64),
                        rng.random_range(0.0..h as f64),
                        rng.random_range(2.0..(w.max(h) as f64 / 2.0).max(2.5)),
                    )
                })
                .collect();
            BinaryMask::from_fn(w, h, |x, y| {
                blobs.iter().any(|&(cx, cy, r)| {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    dx * dx + dy * dy <= r * r
                })
            })
        };
        if !m.is_empty() && m.count() < w * h {
            return m;
        }
    }
}

/// A random prediction map, loosely correlated with `gt` in some draws.
pub fn random_prediction(rng: &mut ChaCha8Rng, gt: &BinaryMask) -> GrayFrame {
    let (w, h) = gt.dims();
    let values: Vec<f64> = match rng.random_range(0..5) {
        0 => (0..w * h).map(|_| rng.random::<f64>()).collect(),
        1 => {
            let q: f64 = rng.random();
            gt.bits()
                .iter()
                .map(|&g| {
                    (q * f64::from(u8::from(g)) + (1.0 - q) * rng.random::<f64>()).clamp(0.0, 1.0)
                })
                .collect()
        }
        2 => (0..w * h)
            .map(|_| f64::from(u8::from(rng.random_bool(0.4))))
            .collect(),
        3 => vec![rng.random_range(0..=4) as f64 / 4.0; w * h],
        _ => {
            // 8-bit quantized, as read from PNG files.
            (0..w * h)
                .map(|_| f64::from(rng.random::<u8>()) / 255.0)
                .collect()
        }
    };
    GrayFrame::new(w, h, values).unwrap()
}

fn grid_f(frame: &GrayFrame) -> Vec<Vec<f64>> {
    (0..frame.height())
        .map(|y| (0..frame.width()).map(|x| frame.get(x, y)).collect())
        .collect()
}

fn grid_b(mask: &BinaryMask) -> Vec<Vec<bool>> {
    (0..mask.height())
        .map(|y| (0..mask.width()).map(|x| mask.get(x, y)).collect())
        .collect()
}

/// All-pairs nearest foreground pixel: `(squared distance, row-major index)`
/// per pixel, ties to the smallest index.
pub fn brute_nearest(mask: &BinaryMask) -> Vec<(u64, usize)> {
    let (w, h) = mask.dims();
    let fg: Vec<(i64, i64, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .map(|(x, y)| (x as i64, y as i64, y * w + x))
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut best = (u64::MAX, usize::MAX);
            for &(fx, fy, idx) in &fg {
                let d = ((fx - x) * (fx - x) + (fy - y) * (fy - y)) as u64;
                if d < best.0 || (d == best.0 && idx < best.1) {
                    best = (d, idx);
                }
            }
            out.push(best);
        }
    }
    out
}

pub fn oracle_mae(pred: &GrayFrame, gt: &BinaryMask) -> f64 {
    let (p, g) = (grid_f(pred), grid_b(gt));
    let mut total = 0.0;
    for y in 0..p.len() {
        for x in 0..p[0].len() {
            total += (p[y][x] - if g[y][x] { 1.0 } else { 0.0 }).abs();
        }
    }
    total / (p.len() * p[0].len()) as f64
}

fn counts(a: &BinaryMask, b: &BinaryMask) -> (f64, f64, f64) {
    let (ga, gb) = (grid_b(a), grid_b(b));
    let (mut i, mut na, mut nb) = (0.0, 0.0, 0.0);
    for y in 0..ga.len() {
        for x in 0..ga[0].len() {
            if ga[y][x] {
                na += 1.0;
            }
            if gb[y][x] {
                nb += 1.0;
            }
            if ga[y][x] && gb[y][x] {
                i += 1.0;
            }
        }
    }
    (i, na, nb)
}

pub fn oracle_dice(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (i, na, nb) = counts(a, b);
    if na + nb == 0.0 {
        1.0
    } else {
        2.0 * i / (na + nb)
    }
}

pub fn oracle_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (i, na, nb) = counts(a, b);
    if na + nb - i == 0.0 {
        1.0
    } else {
        i / (na + nb - i)
    }
}

const EPS: f64 = f64::EPSILON;

fn object(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + sd + EPS)
}

fn ssim_block(p: &[Vec<f64>], g: &[Vec<f64>], x0: usize, x1: usize, y0: usize, y1: usize) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            xs.push(p[y][x]);
            ys.push(g[y][x]);
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
    let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cxy = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / n;
    let a = 4.0 * mx * my * cxy;
    let b = (mx * mx + my * my) * (vx + vy);
    if a == 0.0 && b == 0.0 {
        1.0
    } else if a == 0.0 {
        0.0
    } else {
        a / (b + EPS)
    }
}

pub fn oracle_s_measure(pred: &GrayFrame, gt: &BinaryMask, alpha: f64) -> f64 {
    let (p, g) = (grid_f(pred), grid_b(gt));
    let (h, w) = (p.len(), p[0].len());
    let fg_vals: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| g[y][x])
        .map(|(x, y)| p[y][x])
        .collect();
    let n = (w * h) as f64;
    if fg_vals.is_empty() {
        return 1.0 - p.iter().flatten().sum::<f64>() / n;
    }
    if fg_vals.len() == w * h {
        return p.iter().flatten().sum::<f64>() / n;
    }
    let bg_vals: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| !g[y][x])
        .map(|(x, y)| 1.0 - p[y][x])
        .collect();
    let mu = fg_vals.len() as f64 / n;
    let so = mu * object(&fg_vals) + (1.0 - mu) * object(&bg_vals);

    let (cy, cx) = {
        let pts: Vec<(f64, f64)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| g[y][x])
            .map(|(x, y)| (y as f64, x as f64))
            .collect();
        let k = pts.len() as f64;
        let ry = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let rx = pts.iter().map(|p| p.1).sum::<f64>() / k;
        ((ry + 0.5).floor() as usize, (rx + 0.5).floor() as usize)
    };
    let gf: Vec<Vec<f64>> = g
        .iter()
        .map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect();
    let (xm, ym) = (cx + 1, cy + 1);
    let mut sr = 0.0;
    for (x0, x1, y0, y1) in [
        (0, xm, 0, ym),
        (xm, w, 0, ym),
        (0, xm, ym, h),
        (xm, w, ym, h),
    ] {
        if x1 > x0 && y1 > y0 {
            sr += ((x1 - x0) * (y1 - y0)) as f64 / n * ssim_block(&p, &gf, x0, x1, y0, y1);
        }
    }
    (alpha * so + (1.0 - alpha) * sr).clamp(0.0, 1.0)
}

/// Direct 2-D convolution with the normalized 7×7 Gaussian, zero padding.
pub fn oracle_gauss(field: &[Vec<f64>], sigma: f64) -> Vec<Vec<f64>> {
    let mut k = [[0.0; 7]; 7];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 3.0, j as f64 - 3.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (h, w) = (field.len() as i64, field[0].len() as i64);
    let mut out = vec![vec![0.0; w as usize]; h as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for i in 0..7i64 {
                for j in 0..7i64 {
                    let (sy, sx) = (y + i - 3, x + j - 3);
                    if sy >= 0 && sy < h && sx >= 0 && sx < w {
                        acc += k[i as usize][j as usize] / total * field[sy as usize][sx as usize];
                    }
                }
            }
            out[y as usize][x as usize] = acc;
        }
    }
    out
}

pub fn oracle_weighted_f(pred: &GrayFrame, gt: &BinaryMask) -> f64 {
    let (p, g) = (grid_f(pred), grid_b(gt));
    let (h, w) = (p.len(), p[0].len());
    if !g.iter().flatten().any(|&b| b) {
        return 0.0;
    }
    let near = brute_nearest(gt);
    let e: Vec<Vec<f64>> = (0..h)
        .map(|y| {
            (0..w)
                .map(|x| (p[y][x] - if g[y][x] { 1.0 } else { 0.0 }).abs())
                .collect()
        })
        .collect();
    let et: Vec<Vec<f64>> = (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    if g[y][x] {
                        e[y][x]
                    } else {
                        let idx = near[y * w + x].1;
                        e[idx / w][idx % w]
                    }
                })
                .collect()
        })
        .collect();
    let ea = oracle_gauss(&et, 5.0);
    let (mut fg_err, mut bg_err, mut n_fg) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if g[y][x] {
                fg_err += e[y][x].min(ea[y][x]);
                n_fg += 1.0;
            } else {
                let d = (near[y * w + x].0 as f64).sqrt();
                bg_err += e[y][x] * (2.0 - 2f64.powf(-d / 5.0));
            }
        }
    }
    let r = 1.0 - fg_err / n_fg;
    let tp = n_fg - fg_err;
    let pw = tp / (tp + bg_err + EPS);
    (2.0 * pw * r / (r + pw + EPS)).clamp(0.0, 1.0)
}
