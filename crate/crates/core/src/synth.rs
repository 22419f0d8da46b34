//! Seeded synthetic datasets with known ground truth, for tests, benches and
//! demos. The generator does its own bookkeeping, so the counts it reports
//! are independent of the statistics code.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    write_manifest, Category, ClipRecord, DatasetManifest, FrameEntry, Motion, Scenario, Split,
};
use crate::error::{Error, Result};
use crate::fusion::{Affine, TransformPropagator};
use crate::mask::io::{save_gray, save_mask, write_atomic};
use crate::mask::{BinaryMask, GrayFrame};

/// An axis-aligned square moving at constant integer velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MovingSquare {
    pub width: usize,
    pub height: usize,
    pub side: usize,
    pub start: (i64, i64),
    pub velocity: (i64, i64),
}

impl MovingSquare {
    pub fn origin(&self, t: usize) -> (i64, i64) {
        (
            self.start.0 + self.velocity.0 * t as i64,
            self.start.1 + self.velocity.1 * t as i64,
        )
    }

    /// Mask at frame `t`; parts outside the image are clipped.
    pub fn mask(&self, t: usize) -> BinaryMask {
        let (x0, y0) = self.origin(t);
        let s = self.side as i64;
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as i64, y as i64);
            x >= x0 && x < x0 + s && y >= y0 && y < y0 + s
        })
    }

    /// Whether the square stays fully inside the image for frames `0..n`.
    pub fn fits(&self, n: usize) -> bool {
        let s = self.side as i64;
        [0, n.saturating_sub(1)].iter().all(|&t| {
            let (x, y) = self.origin(t);
            x >= 0 && y >= 0 && x + s <= self.width as i64 && y + s <= self.height as i64
        })
    }

    /// Per-frame translation poses reproducing the motion exactly.
    pub fn propagator(&self, n: usize) -> TransformPropagator {
        TransformPropagator::new(
            (0..n)
                .map(|t| {
                    let (dx, dy) = (self.velocity.0 * t as i64, self.velocity.1 * t as i64);
                    (t, Affine::translation(dx as f64, dy as f64))
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub name: String,
    pub clips: usize,
    pub width: usize,
    pub height: usize,
    /// Inclusive range of frames per clip.
    pub frames: (usize, usize),
    /// Every `annotate_every`-th frame (from frame 0) gets a GT mask.
    pub annotate_every: usize,
    pub fps: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            name: "synthetic".into(),
            clips: 9,
            width: 48,
            height: 32,
            frames: (7, 13),
            annotate_every: 1,
            fps: 6,
        }
    }
}

/// Counts tallied while generating.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthTruth {
    pub clips: usize,
    pub frames: usize,
    pub annotated_frames: usize,
    pub per_split: BTreeMap<Split, usize>,
    pub per_scenario: BTreeMap<Scenario, usize>,
    pub per_category: BTreeMap<Category, usize>,
    pub per_motion: BTreeMap<(Motion, Split), usize>,
    /// `(clip_id, frame index, foreground pixels)` per annotated frame.
    pub areas: Vec<(String, usize, usize)>,
    pub objects: BTreeMap<String, MovingSquare>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    pub truth: SynthTruth,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, all: &[T]) -> T {
    all[rng.random_range(0..all.len())]
}

fn random_square(rng: &mut ChaCha8Rng, cfg: &SynthConfig, n: usize) -> Result<MovingSquare> {
    let max_side = (cfg.width.min(cfg.height) / 3).max(1);
    for _ in 0..1000 {
        let side = rng.random_range(max_side.min(4)..=max_side);
        let velocity = (rng.random_range(-1..=1), rng.random_range(-1..=1));
        let span = |extent: usize, v: i64| {
            let travel = v.unsigned_abs() as usize * (n - 1);
            let free = extent.checked_sub(side + travel)?;
            let lo = if v < 0 { travel } else { 0 };
            Some(lo as i64..=(lo + free) as i64)
        };
        let (Some(xs), Some(ys)) = (span(cfg.width, velocity.0), span(cfg.height, velocity.1))
        else {
            continue;
        };
        let sq = MovingSquare {
            width: cfg.width,
            height: cfg.height,
            side,
            start: (rng.random_range(xs), rng.random_range(ys)),
            velocity,
        };
        debug_assert!(sq.fits(n));
        return Ok(sq);
    }
    Err(Error::invalid(
        "synthetic frame too small for the requested clip length",
    ))
}

/// Low-contrast texture: the object shares the background palette with a
/// slight tint.
fn render_frame(rng: &mut ChaCha8Rng, mask: &BinaryMask) -> RgbImage {
    let (w, h) = mask.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let base: u8 = rng.random_range(90..150);
        if mask.get(x as usize, y as usize) {
            Rgb([base.saturating_add(12), base, base.saturating_sub(8)])
        } else {
            Rgb([base, base, base])
        }
    })
}

fn encode_jpeg(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Jpeg)
        .map_err(|source| Error::Image {
            path: "<jpeg>".into(),
            source,
        })?;
    Ok(buf.into_inner())
}

/// Writes `<root>/<Train|Test>/<clip>/{Frame/NNNNN.jpg, GT/NNNNN.png}` and
/// `<root>/manifest.json`.
pub fn generate(root: &Path, cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.clips == 0
        || cfg.frames.0 < 2
        || cfg.frames.1 < cfg.frames.0
        || cfg.annotate_every == 0
        || cfg.fps == 0
    {
        return Err(Error::invalid(
            "synthetic config: need clips >= 1, 2 <= min frames <= max, stride and fps >= 1",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truth = SynthTruth::default();
    let mut clips = Vec::with_capacity(cfg.clips);
    for c in 0..cfg.clips {
        let clip_id = format!("clip{c:03}");
        // Both splits are always populated.
        let split = match c {
            0 => Split::Train,
            1 => Split::Test,
            _ => pick(&mut rng, Split::ALL),
        };
        let scenario = pick(&mut rng, Scenario::ALL);
        let category = pick(&mut rng, Category::ALL);
        let motion = pick(&mut rng, Motion::ALL);
        let n = rng.random_range(cfg.frames.0..=cfg.frames.1);
        let square = random_square(&mut rng, cfg, n)?;

        let clip_dir = PathBuf::from(split.label()).join(&clip_id);
        let mut frames = Vec::with_capacity(n);
        for t in 0..n {
            let mask = square.mask(t);
            let image = clip_dir.join("Frame").join(format!("{t:05}.jpg"));
            write_atomic(
                &root.join(&image),
                &encode_jpeg(&render_frame(&mut rng, &mask))?,
            )?;
            let gt = if t % cfg.annotate_every == 0 {
                let gt = clip_dir.join("GT").join(format!("{t:05}.png"));
                save_mask(&mask, &root.join(&gt))?;
                truth.annotated_frames += 1;
                truth.areas.push((clip_id.clone(), t, mask.count()));
                Some(gt)
            } else {
                None
            };
            frames.push(FrameEntry {
                index: t,
                image,
                gt,
                instances: None,
            });
        }

        truth.clips += 1;
        truth.frames += n;
        *truth.per_split.entry(split).or_default() += 1;
        *truth.per_scenario.entry(scenario).or_default() += 1;
        *truth.per_category.entry(category).or_default() += 1;
        *truth.per_motion.entry((motion, split)).or_default() += 1;
        truth.objects.insert(clip_id.clone(), square);
        clips.push(ClipRecord {
            clip_id,
            scenario: Some(scenario),
            category: Some(category),
            motion: Some(motion),
            split: Some(split),
            fps: Some(cfg.fps),
            width: cfg.width,
            height: cfg.height,
            frames,
        });
    }
    let manifest = DatasetManifest::new(cfg.name.clone(), root, clips);
    let manifest_path = root.join("manifest.json");
    write_manifest(&manifest, &manifest_path)?;
    Ok(SynthDataset {
        manifest,
        manifest_path,
        truth,
    })
}

/// Writes a noisy prediction map for every annotated frame to
/// `<pred_root>/<clip_id>/<stem>.png`. `quality` in [0, 1] sets how strongly
/// the map follows the GT.
pub fn write_predictions(
    manifest: &DatasetManifest,
    pred_root: &Path,
    seed: u64,
    quality: f64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for clip in &manifest.clips {
        for frame in clip.annotated_frames() {
            let gt = crate::dataset::load_frame_mask(manifest, frame)?;
            let values = gt
                .bits()
                .iter()
                .map(|&fg| {
                    let noise: f64 = rng.random();
                    let target = if fg { 1.0 } else { 0.0 };
                    quality * target + (1.0 - quality) * noise
                })
                .collect();
            let pred = GrayFrame::new(gt.width(), gt.height(), values)?;
            save_gray(
                &pred,
                &pred_root
                    .join(&clip.clip_id)
                    .join(format!("{}.png", frame.stem())),
            )?;
        }
    }
    Ok(())
}

/// Metadata-only manifest with the published MSVCOD composition: 162 clips,
/// 9486 frames at 6 fps, 121 train / 41 test, and the motion-pattern split.
/// It references no files and leaves scenario, category and frame size unset.
pub fn msvcod_skeleton() -> DatasetManifest {
    const MOTION_ROWS: [(Motion, usize, usize); 3] = [
        (Motion::ObjectMotion, 53, 20),
        (Motion::CameraMotion, 22, 7),
        (Motion::SimultaneousMotion, 46, 14),
    ];
    const TOTAL_FRAMES: usize = 9486;
    let labels: Vec<(Motion, Split)> = MOTION_ROWS
        .iter()
        .flat_map(|&(m, train, test)| {
            std::iter::repeat_n((m, Split::Train), train)
                .chain(std::iter::repeat_n((m, Split::Test), test))
        })
        .collect();
    let n = labels.len();
    let (base, extra) = (TOTAL_FRAMES / n, TOTAL_FRAMES % n);
    let clips = labels
        .into_iter()
        .enumerate()
        .map(|(i, (motion, split))| {
            let clip_id = format!("msvcod_{i:03}");
            let len = base + usize::from(i < extra);
            ClipRecord {
                frames: (0..len)
                    .map(|t| FrameEntry {
                        index: t,
                        image: PathBuf::from(&clip_id).join(format!("{t:05}.jpg")),
                        gt: None,
                        instances: None,
                    })
                    .collect(),
                clip_id,
                scenario: None,
                category: None,
                motion: Some(motion),
                split: Some(split),
                fps: Some(6),
                width: 0,
                height: 0,
            }
        })
        .collect();
    DatasetManifest::new("MSVCOD (skeleton)", "", clips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_motion() {
        let sq = MovingSquare {
            width: 10,
            height: 6,
            side: 2,
            start: (1, 1),
            velocity: (2, 1),
        };
        assert_eq!(sq.mask(0).count(), 4);
        assert!(sq.mask(2).get(5, 3));
        assert!(sq.fits(4));
        assert!(!sq.fits(5));
        let prop = sq.propagator(4);
        assert_eq!(prop.warp(0, &sq.mask(0), 3).unwrap(), sq.mask(3));
    }

    #[test]
    fn skeleton_composition() {
        let m = msvcod_skeleton();
        assert_eq!(m.clips.len(), 162);
        assert_eq!(m.clips.iter().map(|c| c.frames.len()).sum::<usize>(), 9486);
        m.check_structure().unwrap();
    }

    #[test]
    fn generated_dataset_is_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            clips: 3,
            annotate_every: 2,
            ..SynthConfig::default()
        };
        let ds = generate(dir.path(), &cfg).unwrap();
        let reloaded = crate::dataset::load_manifest(&ds.manifest_path).unwrap();
        assert_eq!(reloaded.clips, ds.manifest.clips);
        for (clip_id, sq) in &ds.truth.objects {
            let clip = reloaded.clip(clip_id).unwrap();
            assert!(sq.fits(clip.frames.len()));
            let f = &clip.frames[0];
            assert_eq!(
                crate::dataset::load_frame_mask(&reloaded, f).unwrap(),
                sq.mask(0)
            );
        }
        let again = generate(tempfile::tempdir().unwrap().path(), &cfg).unwrap();
        assert_eq!(again.truth, ds.truth);
    }
}
