//! The propagation seam: anything that carries a reference mask through a
//! sequence of frames.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::io::{encode_mask_png, load_mask};
use crate::mask::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipFrame {
    pub index: usize,
    pub image: PathBuf,
}

pub struct PropagationRequest<'a> {
    pub reference: &'a ClipFrame,
    pub reference_mask: &'a BinaryMask,
    /// Targets in propagation order: nearest to the reference first.
    pub targets: &'a [ClipFrame],
    pub direction: Direction,
}

pub trait Propagator: Send + Sync {
    /// One mask per target, in `targets` order. Output masks must have the
    /// reference mask's dimensions.
    fn propagate(&self, request: &PropagationRequest<'_>) -> Vec<Result<BinaryMask>>;

    /// `false` serializes spans when the pipeline runs in parallel.
    fn thread_safe(&self) -> bool {
        true
    }
}

/// Copies the reference mask to every target.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticPropagator;

impl Propagator for StaticPropagator {
    fn propagate(&self, request: &PropagationRequest<'_>) -> Vec<Result<BinaryMask>> {
        request
            .targets
            .iter()
            .map(|_| Ok(request.reference_mask.clone()))
            .collect()
    }
}

/// Row-major 2×3 affine matrix `[a, b, tx, c, d, ty]` mapping `(x, y)` to
/// `(a·x + b·y + tx, c·x + d·y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Affine(pub [f64; 6]);

impl Affine {
    pub const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn translation(dx: f64, dy: f64) -> Self {
        Affine([1.0, 0.0, dx, 0.0, 1.0, dy])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Affine) -> Affine {
        let (a, b) = (&self.0, &other.0);
        Affine([
            a[0] * b[0] + a[1] * b[3],
            a[0] * b[1] + a[1] * b[4],
            a[0] * b[2] + a[1] * b[5] + a[2],
            a[3] * b[0] + a[4] * b[3],
            a[3] * b[1] + a[4] * b[4],
            a[3] * b[2] + a[4] * b[5] + a[5],
        ])
    }

    pub fn inverse(&self) -> Option<Affine> {
        let m = &self.0;
        let det = m[0] * m[4] - m[1] * m[3];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (a, b, c, d) = (m[4] / det, -m[1] / det, -m[3] / det, m[0] / det);
        Some(Affine([
            a,
            b,
            -(a * m[2] + b * m[5]),
            c,
            d,
            -(c * m[2] + d * m[5]),
        ]))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransformEntry {
    frame: usize,
    matrix: Affine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransformFixture {
    transforms: Vec<TransformEntry>,
}

/// Warps the reference mask with known per-frame poses.
///
/// Each frame `i` has a pose `T_i` from a shared canonical plane into frame
/// `i`; a target pixel center `p` samples the reference at `T_ref · T_i⁻¹ · p`
/// (nearest pixel, outside reads as background).
#[derive(Debug, Clone, Default)]
pub struct TransformPropagator {
    poses: BTreeMap<usize, Affine>,
}

impl TransformPropagator {
    pub fn new(poses: BTreeMap<usize, Affine>) -> Self {
        Self { poses }
    }

    /// Fixture file: `{"transforms": [{"frame": 0, "matrix": [a, b, tx, c, d, ty]}, ...]}`.
    pub fn from_fixture(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fixture: TransformFixture = serde_json::from_str(&text)?;
        Ok(Self::new(
            fixture
                .transforms
                .into_iter()
                .map(|t| (t.frame, t.matrix))
                .collect(),
        ))
    }

    pub fn to_fixture_json(&self) -> String {
        let fixture = TransformFixture {
            transforms: self
                .poses
                .iter()
                .map(|(&frame, &matrix)| TransformEntry { frame, matrix })
                .collect(),
        };
        serde_json::to_string_pretty(&fixture).expect("fixture serializes")
    }

    fn pose(&self, frame: usize) -> Result<Affine> {
        self.poses
            .get(&frame)
            .copied()
            .ok_or_else(|| Error::Propagator(format!("no transform for frame {frame}")))
    }

    pub fn warp(&self, reference: usize, mask: &BinaryMask, target: usize) -> Result<BinaryMask> {
        let inv = self
            .pose(target)?
            .inverse()
            .ok_or_else(|| Error::Propagator(format!("singular transform for frame {target}")))?;
        let to_ref = self.pose(reference)?.compose(&inv);
        let (w, h) = mask.dims();
        Ok(BinaryMask::from_fn(w, h, |x, y| {
            let (sx, sy) = to_ref.apply(x as f64 + 0.5, y as f64 + 0.5);
            let (fx, fy) = (sx.floor(), sy.floor());
            fx >= 0.0
                && fy >= 0.0
                && fx < w as f64
                && fy < h as f64
                && mask.get(fx as usize, fy as usize)
        }))
    }
}

impl Propagator for TransformPropagator {
    fn propagate(&self, request: &PropagationRequest<'_>) -> Vec<Result<BinaryMask>> {
        request
            .targets
            .iter()
            .map(|t| self.warp(request.reference.index, request.reference_mask, t.index))
            .collect()
    }
}

/// Runs an external program per propagation request.
///
/// Invocation: `<program> [args...] <forward|backward> <ref_image> <ref_mask.png> <frames.tsv>`.
/// `frames.tsv` holds one line per target, in propagation order:
/// `<frame index>\t<image path>\t<output mask path>`. The program writes a
/// PNG mask (foreground >= 128) to every output path and exits 0. A missing
/// output fails only that frame; a non-zero exit fails the whole request.
#[derive(Debug, Clone)]
pub struct SubprocessPropagator {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub single_threaded: bool,
}

impl SubprocessPropagator {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            single_threaded: false,
        }
    }

    fn run(&self, request: &PropagationRequest<'_>, dir: &Path) -> Result<Vec<PathBuf>> {
        let ref_mask = dir.join("reference.png");
        std::fs::write(&ref_mask, encode_mask_png(request.reference_mask)?)
            .map_err(|e| Error::io(&ref_mask, e))?;
        let list = dir.join("frames.tsv");
        let mut file = std::fs::File::create(&list).map_err(|e| Error::io(&list, e))?;
        let mut outputs = Vec::with_capacity(request.targets.len());
        for t in request.targets {
            let out = dir.join(format!("{:06}.png", t.index));
            writeln!(
                file,
                "{}\t{}\t{}",
                t.index,
                t.image.display(),
                out.display()
            )
            .map_err(|e| Error::io(&list, e))?;
            outputs.push(out);
        }
        drop(file);
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(request.direction.label())
            .arg(&request.reference.image)
            .arg(&ref_mask)
            .arg(&list)
            .status()
            .map_err(|e| Error::io(&self.program, e))?;
        if !status.success() {
            return Err(Error::Propagator(format!(
                "{} exited with {status}",
                self.program.display()
            )));
        }
        Ok(outputs)
    }
}

impl Propagator for SubprocessPropagator {
    fn propagate(&self, request: &PropagationRequest<'_>) -> Vec<Result<BinaryMask>> {
        let fail_all = |msg: String| {
            request
                .targets
                .iter()
                .map(|_| Err(Error::Propagator(msg.clone())))
                .collect()
        };
        let dir = match tempfile::tempdir() {
            Ok(d) => d,
            Err(e) => return fail_all(e.to_string()),
        };
        match self.run(request, dir.path()) {
            Ok(outputs) => outputs.iter().map(|p| load_mask(p)).collect(),
            Err(e) => fail_all(e.to_string()),
        }
    }

    fn thread_safe(&self) -> bool {
        !self.single_threaded
    }
}
