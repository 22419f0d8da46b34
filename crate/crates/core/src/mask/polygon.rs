//! Crack-following contour extraction and even-odd rasterization.
//!
//! Vertices live on the pixel-corner lattice: pixel `(x, y)` is the unit
//! square `[x, x+1] × [y, y+1]` and its center is `(x + 0.5, y + 0.5)`.
//! Outer boundaries have positive shoelace area in image coordinates, holes
//! negative. At a checkerboard junction the tracer stays on the pixel it
//! arrived along, so each loop encloses a 4-connected set.

use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

/// A closed boundary loop; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Point>,
    pub is_hole: bool,
}

impl Contour {
    /// Twice the signed shoelace area.
    pub fn doubled_area(&self) -> i64 {
        doubled_area(&self.points)
    }
}

fn doubled_area(points: &[Point]) -> i64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum()
}

const TOP: usize = 0;
const RIGHT: usize = 1;
const BOTTOM: usize = 2;
const LEFT: usize = 3;

struct Cracks<'a> {
    mask: &'a BinaryMask,
    boundary: Vec<[bool; 4]>,
    visited: Vec<[bool; 4]>,
}

impl<'a> Cracks<'a> {
    fn new(mask: &'a BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let fg = |x: isize, y: isize| {
            x >= 0
                && y >= 0
                && (x as usize) < w
                && (y as usize) < h
                && mask.get(x as usize, y as usize)
        };
        let mut boundary = vec![[false; 4]; w * h];
        for y in 0..h {
            for x in 0..w {
                if !mask.get(x, y) {
                    continue;
                }
                let (xi, yi) = (x as isize, y as isize);
                boundary[y * w + x] = [
                    !fg(xi, yi - 1),
                    !fg(xi + 1, yi),
                    !fg(xi, yi + 1),
                    !fg(xi - 1, yi),
                ];
            }
        }
        Self {
            mask,
            visited: vec![[false; 4]; w * h],
            boundary,
        }
    }

    fn open(&self, pixel: usize, side: usize) -> bool {
        self.boundary[pixel][side] && !self.visited[pixel][side]
    }

    fn start_of(&self, pixel: usize, side: usize) -> Point {
        let w = self.mask.width();
        let (x, y) = ((pixel % w) as i64, (pixel / w) as i64);
        match side {
            TOP => Point::new(x, y),
            RIGHT => Point::new(x + 1, y),
            BOTTOM => Point::new(x + 1, y + 1),
            _ => Point::new(x, y + 1),
        }
    }

    /// The crack leaving lattice vertex `v`; unique away from junctions.
    fn leaving(&self, v: Point) -> Option<(usize, usize)> {
        let (w, h) = (self.mask.width() as i64, self.mask.height() as i64);
        let candidates = [
            (v.x, v.y, TOP),
            (v.x - 1, v.y, RIGHT),
            (v.x - 1, v.y - 1, BOTTOM),
            (v.x, v.y - 1, LEFT),
        ];
        candidates.into_iter().find_map(|(x, y, side)| {
            if x < 0 || y < 0 || x >= w || y >= h {
                return None;
            }
            let p = (y * w + x) as usize;
            self.boundary[p][side].then_some((p, side))
        })
    }

    fn trace(&mut self, pixel: usize, side: usize) -> Vec<Point> {
        let start = (pixel, side);
        let mut points = Vec::new();
        let mut cur = start;
        loop {
            let (p, s) = cur;
            self.visited[p][s] = true;
            points.push(self.start_of(p, s));
            let turn = (s + 1) % 4;
            let next = if self.boundary[p][turn] {
                (p, turn)
            } else {
                self.leaving(self.start_of(p, turn))
                    .expect("crack boundaries are closed")
            };
            if next == start {
                break;
            }
            cur = next;
        }
        points
    }
}

fn drop_collinear(points: &[Point]) -> Vec<Point> {
    let n = points.len();
    let kept: Vec<Point> = (0..n)
        .filter(|&i| {
            let (a, b, c) = (points[(i + n - 1) % n], points[i], points[(i + 1) % n]);
            (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x) != 0
        })
        .map(|i| points[i])
        .collect();
    rotate_to_min(kept)
}

fn rotate_to_min(mut points: Vec<Point>) -> Vec<Point> {
    if let Some(i) = (0..points.len()).min_by_key(|&i| (points[i].y, points[i].x)) {
        points.rotate_left(i);
    }
    points
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (px, py) = (p.x as f64, p.y as f64);
    let (ax, ay, bx, by) = (a.x as f64, a.y as f64, b.x as f64, b.y as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return ((px - ax).powi(2) + (py - ay).powi(2)).sqrt();
    }
    let t = (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0);
    ((px - ax - t * dx).powi(2) + (py - ay - t * dy).powi(2)).sqrt()
}

/// Douglas–Peucker on an open path; endpoints are always kept.
fn douglas_peucker(path: &[Point], tolerance: f64, out: &mut Vec<Point>) {
    if path.len() < 3 {
        out.extend_from_slice(&path[..path.len().saturating_sub(1)]);
        return;
    }
    let (a, b) = (path[0], path[path.len() - 1]);
    let (far, dist) = path[1..path.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, &p)| (i + 1, segment_distance(p, a, b)))
        .fold(
            (0, -1.0),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    if dist > tolerance {
        douglas_peucker(&path[..=far], tolerance, out);
        douglas_peucker(&path[far..], tolerance, out);
    } else {
        out.push(a);
    }
}

fn simplify_ring(ring: Vec<Point>, tolerance: f64) -> Vec<Point> {
    if tolerance <= 0.0 || ring.len() <= 4 {
        return ring;
    }
    let anchor = ring[0];
    let far = (1..ring.len())
        .max_by(|&i, &j| {
            segment_distance(ring[i], anchor, anchor)
                .total_cmp(&segment_distance(ring[j], anchor, anchor))
                .then(j.cmp(&i))
        })
        .unwrap_or(1);
    let mut out = Vec::with_capacity(ring.len());
    douglas_peucker(&ring[..=far], tolerance, &mut out);
    let mut tail: Vec<Point> = ring[far..].to_vec();
    tail.push(anchor);
    douglas_peucker(&tail, tolerance, &mut out);
    // A loop that collapses below a triangle, or flips orientation, is kept exact.
    if out.len() < 3 || doubled_area(&out).signum() != doubled_area(&ring).signum() {
        return ring;
    }
    out
}

/// Traces every boundary loop of `mask` along pixel edges.
///
/// With `tolerance == 0` only collinear vertices are dropped and the even-odd
/// fill of the result reproduces `mask` exactly.
pub fn mask_to_polygons(mask: &BinaryMask, tolerance: f64) -> Vec<Contour> {
    let mut cracks = Cracks::new(mask);
    let mut contours = Vec::new();
    for pixel in 0..mask.bits().len() {
        for side in [TOP, RIGHT, BOTTOM, LEFT] {
            if !cracks.open(pixel, side) {
                continue;
            }
            let raw = cracks.trace(pixel, side);
            let ring = simplify_ring(drop_collinear(&raw), tolerance);
            let is_hole = doubled_area(&ring) < 0;
            contours.push(Contour {
                points: ring,
                is_hole,
            });
        }
    }
    contours
}

/// Even-odd fill sampled at pixel centers.
pub fn polygons_to_mask(contours: &[Contour], width: usize, height: usize) -> Result<BinaryMask> {
    for c in contours {
        if let Some(p) = c
            .points
            .iter()
            .find(|p| p.x < 0 || p.y < 0 || p.x > width as i64 || p.y > height as i64)
        {
            return Err(Error::invalid(format!(
                "polygon vertex ({}, {}) outside {width}x{height}",
                p.x, p.y
            )));
        }
    }
    let mut mask = BinaryMask::empty(width, height);
    let mut crossings = Vec::new();
    for y in 0..height {
        let yc = y as f64 + 0.5;
        crossings.clear();
        for c in contours {
            let n = c.points.len();
            for i in 0..n {
                let (a, b) = (c.points[i], c.points[(i + 1) % n]);
                let (ay, by) = (a.y as f64, b.y as f64);
                if (ay < yc) != (by < yc) {
                    let t = (yc - ay) / (by - ay);
                    crossings.push(a.x as f64 + t * (b.x - a.x) as f64);
                }
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let first = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let end = ((pair[1] - 0.5).ceil().max(0.0) as usize).min(width);
            for x in first..end {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}
