//! Exact Euclidean distance transform with nearest-foreground indices.
//!
//! Separable lower-envelope construction: a column pass finds, for every
//! pixel, the nearest foreground pixel in its own column; a row pass then
//! takes the lower envelope of the parabolas `(x - x')² + g(x')`. All
//! arithmetic is integer. Ties between equidistant foreground pixels are
//! resolved by the smallest row-major index, which is folded into the
//! envelope as an infinitesimal perturbation `δ·index` of each parabola so
//! that the envelope itself carries the tie-break.

use std::cmp::Ordering;

use super::BinaryMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    squared: Vec<u64>,
    distance: Vec<f64>,
    nearest: Vec<usize>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Squared distances, exact.
    pub fn squared(&self) -> &[u64] {
        &self.squared
    }

    pub fn distance(&self) -> &[f64] {
        &self.distance
    }

    /// Row-major index of the nearest foreground pixel.
    pub fn nearest(&self) -> &[usize] {
        &self.nearest
    }
}

/// `(num + δ·eps) / den` with `den > 0` and `δ` a positive infinitesimal.
#[derive(Debug, Clone, Copy)]
struct Perturbed {
    num: i64,
    eps: i64,
    den: i64,
}

impl Perturbed {
    fn cmp(&self, other: &Perturbed) -> Ordering {
        (self.num * other.den)
            .cmp(&(other.num * self.den))
            .then((self.eps * other.den).cmp(&(other.eps * self.den)))
    }

    fn lt_int(&self, x: i64) -> bool {
        let rhs = x * self.den;
        self.num < rhs || (self.num == rhs && self.eps < 0)
    }
}

#[derive(Debug, Clone, Copy)]
enum Bound {
    NegInf,
    At(Perturbed),
    PosInf,
}

impl Bound {
    fn lt_int(&self, x: i64) -> bool {
        match self {
            Bound::NegInf => true,
            Bound::At(p) => p.lt_int(x),
            Bound::PosInf => false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Site {
    pos: i64,
    height: i64,
    key: i64,
}

fn intersect(q: &Site, r: &Site) -> Perturbed {
    Perturbed {
        num: (r.height + r.pos * r.pos) - (q.height + q.pos * q.pos),
        eps: r.key - q.key,
        den: 2 * (r.pos - q.pos),
    }
}

pub fn euclidean_distance_transform(mask: &BinaryMask) -> Result<DistanceField> {
    let (w, h) = mask.dims();
    if mask.is_empty() {
        return Err(Error::EmptyForeground("euclidean_distance_transform"));
    }

    // Column pass: nearest foreground row in the same column, upper wins ties.
    let mut col_near: Vec<Option<usize>> = vec![None; w * h];
    let mut below: Vec<Option<usize>> = vec![None; h];
    for x in 0..w {
        let mut next = None;
        for y in (0..h).rev() {
            if mask.get(x, y) {
                next = Some(y);
            }
            below[y] = next;
        }
        let mut prev = None;
        for y in 0..h {
            if mask.get(x, y) {
                prev = Some(y);
            }
            col_near[y * w + x] = match (prev, below[y]) {
                (Some(a), Some(b)) => Some(if y - a <= b - y { a } else { b }),
                (a, b) => a.or(b),
            };
        }
    }

    let mut squared = vec![0u64; w * h];
    let mut nearest = vec![0usize; w * h];
    let mut sites: Vec<Site> = Vec::with_capacity(w);
    let mut hull: Vec<Site> = Vec::with_capacity(w);
    let mut bounds: Vec<Bound> = Vec::with_capacity(w + 1);

    for y in 0..h {
        sites.clear();
        for x in 0..w {
            if let Some(ny) = col_near[y * w + x] {
                let dy = y as i64 - ny as i64;
                sites.push(Site {
                    pos: x as i64,
                    height: dy * dy,
                    key: (ny * w + x) as i64,
                });
            }
        }

        // bounds[k] is the left edge of hull[k]'s interval.
        hull.clear();
        bounds.clear();
        for site in &sites {
            while let Some(top) = hull.last() {
                let s = intersect(top, site);
                let dominated = match bounds[hull.len() - 1] {
                    Bound::At(z) => s.cmp(&z) != Ordering::Greater,
                    _ => false,
                };
                if !dominated {
                    bounds.push(Bound::At(s));
                    break;
                }
                hull.pop();
                bounds.pop();
            }
            if hull.is_empty() {
                bounds.push(Bound::NegInf);
            }
            hull.push(*site);
        }
        bounds.push(Bound::PosInf);

        let mut k = 0;
        for x in 0..w {
            let xi = x as i64;
            while bounds[k + 1].lt_int(xi) {
                k += 1;
            }
            let s = hull[k];
            let dx = xi - s.pos;
            squared[y * w + x] = (dx * dx + s.height) as u64;
            nearest[y * w + x] = s.key as usize;
        }
    }

    let distance = squared.iter().map(|&d| (d as f64).sqrt()).collect();
    Ok(DistanceField {
        width: w,
        height: h,
        squared,
        distance,
        nearest,
    })
}
