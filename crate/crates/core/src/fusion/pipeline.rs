use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::propagator::{ClipFrame, Direction, Propagator};
use super::{fuse_bidirectional, propagate_targets, rank_candidates, CandidateSet, CandidateTag};
use crate::error::{Error, Result};
use crate::mask::io::load_mask;
use crate::mask::{
    ensure_same_dims, mask_to_polygons, polygons_to_mask, BinaryMask, Contour, Point,
};
use crate::par::Exec;

/// The frames of one clip, in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionClip {
    pub clip_id: String,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<ClipFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Intermediate frames whose forward/backward IoU falls below this are flagged.
    pub flag_threshold: f64,
    /// Anchor spacing in frame positions.
    pub cadence: usize,
    /// Douglas–Peucker tolerance for polygon export; 0 keeps polygons exact.
    pub tolerance: f64,
    pub exec: Exec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            flag_threshold: 0.7,
            cadence: 6,
            tolerance: 0.0,
            exec: Exec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cadence == 0 {
            return Err(Error::invalid("cadence must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.flag_threshold) {
            return Err(Error::invalid(format!(
                "flag threshold {} outside [0, 1]",
                self.flag_threshold
            )));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid(format!(
                "polygon tolerance {} must be >= 0",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum FlagReason {
    LowConsistency {
        consistency: f64,
    },
    PropagationFailed {
        direction: Direction,
        message: String,
    },
    MissingAnchor {
        anchor: usize,
    },
}

/// Where a frame's current mask came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FrameSource {
    Anchor,
    Candidate {
        tag: CandidateTag,
    },
    External {
        path: PathBuf,
    },
    /// No mask: the span was skipped.
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub index: usize,
    pub source: FrameSource,
    pub mask: Option<BinaryMask>,
    pub candidates: Option<CandidateSet>,
    pub ranking: Option<[CandidateTag; 4]>,
    pub flags: Vec<FlagReason>,
}

impl FrameResult {
    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    And,
    Fwd,
    Bwd,
    Or,
    External,
}

impl From<CandidateTag> for Choice {
    fn from(t: CandidateTag) -> Self {
        match t {
            CandidateTag::And => Choice::And,
            CandidateTag::Fwd => Choice::Fwd,
            CandidateTag::Bwd => Choice::Bwd,
            CandidateTag::Or => Choice::Or,
        }
    }
}

impl Choice {
    fn tag(self) -> Option<CandidateTag> {
        match self {
            Choice::And => Some(CandidateTag::And),
            Choice::Fwd => Some(CandidateTag::Fwd),
            Choice::Bwd => Some(CandidateTag::Bwd),
            Choice::Or => Some(CandidateTag::Or),
            Choice::External => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionEntry {
    pub frame: usize,
    pub choice: Choice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_path: Option<PathBuf>,
}

/// One correction round. Emitted rounds list the choice in effect for every
/// intermediate frame and the frames still flagged; a reviewer edits the
/// entries of flagged frames and feeds the file back to
/// [`apply_corrections`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionRound {
    pub clip_id: String,
    pub round: u32,
    pub entries: Vec<CorrectionEntry>,
    pub flagged: Vec<usize>,
}

impl CorrectionRound {
    pub fn from_json(text: &str) -> Result<Self> {
        let round: CorrectionRound = serde_json::from_str(text)?;
        if round.round == 0 {
            return Err(Error::invalid("correction round numbers start at 1"));
        }
        Ok(round)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("round serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstancePolygons {
    pub id: u32,
    pub polygons: Vec<Vec<[i64; 2]>>,
    pub holes: Vec<Vec<[i64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolygonExport {
    pub clip_id: String,
    pub frame: usize,
    pub instances: Vec<InstancePolygons>,
}

impl PolygonExport {
    /// Fills every ring of every instance (even-odd) back into a mask.
    pub fn rasterize(&self, width: usize, height: usize) -> Result<BinaryMask> {
        let ring = |pts: &Vec<[i64; 2]>, is_hole| Contour {
            points: pts.iter().map(|&[x, y]| Point::new(x, y)).collect(),
            is_hole,
        };
        let contours: Vec<Contour> = self
            .instances
            .iter()
            .flat_map(|i| {
                i.polygons
                    .iter()
                    .map(move |p| ring(p, false))
                    .chain(i.holes.iter().map(move |h| ring(h, true)))
            })
            .collect();
        polygons_to_mask(&contours, width, height)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("polygons serialize");
        s.push('\n');
        s
    }
}

/// Polygon export of a binary mask: one instance with id 1, none when empty.
pub fn export_polygons(
    clip_id: &str,
    frame: usize,
    mask: &BinaryMask,
    tolerance: f64,
) -> PolygonExport {
    let contours = mask_to_polygons(mask, tolerance);
    let mut instances = Vec::new();
    if !contours.is_empty() {
        let coords = |c: &Contour| c.points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>();
        instances.push(InstancePolygons {
            id: 1,
            polygons: contours.iter().filter(|c| !c.is_hole).map(coords).collect(),
            holes: contours.iter().filter(|c| c.is_hole).map(coords).collect(),
        });
    }
    PolygonExport {
        clip_id: clip_id.to_string(),
        frame,
        instances,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub clip_id: String,
    pub width: usize,
    pub height: usize,
    pub tolerance: f64,
    pub frames: Vec<FrameResult>,
    pub round: CorrectionRound,
    /// Anchors that were supplied but not used.
    pub notes: Vec<String>,
}

impl PipelineOutput {
    pub fn flagged(&self) -> Vec<usize> {
        self.frames
            .iter()
            .filter(|f| f.is_flagged())
            .map(|f| f.index)
            .collect()
    }

    pub fn frame(&self, index: usize) -> Option<&FrameResult> {
        self.frames.iter().find(|f| f.index == index)
    }

    /// Polygon exports of every frame that has a mask, anchors included.
    pub fn polygon_exports(&self) -> Vec<PolygonExport> {
        self.frames
            .iter()
            .filter_map(|f| {
                f.mask
                    .as_ref()
                    .map(|m| export_polygons(&self.clip_id, f.index, m, self.tolerance))
            })
            .collect()
    }

    fn rebuild_round(&mut self, round: u32) {
        let entries = self
            .frames
            .iter()
            .filter_map(|f| match &f.source {
                FrameSource::Candidate { tag } => Some(CorrectionEntry {
                    frame: f.index,
                    choice: (*tag).into(),
                    external_path: None,
                }),
                FrameSource::External { path } => Some(CorrectionEntry {
                    frame: f.index,
                    choice: Choice::External,
                    external_path: Some(path.clone()),
                }),
                FrameSource::Anchor | FrameSource::Missing => None,
            })
            .collect();
        self.round = CorrectionRound {
            clip_id: self.clip_id.clone(),
            round,
            entries,
            flagged: self.flagged(),
        };
    }
}

/// Frame positions expected to carry anchors: every `cadence`-th position
/// plus the last one.
pub fn anchor_positions(n_frames: usize, cadence: usize) -> Vec<usize> {
    if n_frames == 0 || cadence == 0 {
        return Vec::new();
    }
    let mut pos: Vec<usize> = (0..n_frames).step_by(cadence).collect();
    if *pos.last().expect("non-empty") != n_frames - 1 {
        pos.push(n_frames - 1);
    }
    pos
}

struct Span {
    left: usize,
    right: usize,
}

fn fill_span(
    clip: &FusionClip,
    prop: &dyn Propagator,
    anchors: &BTreeMap<usize, BinaryMask>,
    span: &Span,
    threshold: f64,
) -> Result<Vec<FrameResult>> {
    let frames = &clip.frames;
    let (left, right) = (&frames[span.left], &frames[span.right]);
    let inner = &frames[span.left + 1..span.right];
    let (Some(left_mask), Some(right_mask)) = (anchors.get(&left.index), anchors.get(&right.index))
    else {
        let missing = if anchors.contains_key(&left.index) {
            right.index
        } else {
            left.index
        };
        return Ok(inner
            .iter()
            .map(|f| FrameResult {
                index: f.index,
                source: FrameSource::Missing,
                mask: None,
                candidates: None,
                ranking: None,
                flags: vec![FlagReason::MissingAnchor { anchor: missing }],
            })
            .collect());
    };

    let backward_targets: Vec<ClipFrame> = inner.iter().rev().cloned().collect();
    let fwd = propagate_targets(prop, left, left_mask, inner, Direction::Forward);
    let mut bwd = propagate_targets(
        prop,
        right,
        right_mask,
        &backward_targets,
        Direction::Backward,
    );
    bwd.reverse();

    fwd.into_iter()
        .zip(bwd)
        .map(|(f, b)| {
            let cs = fuse_bidirectional(f.index, &f.mask, &b.mask)?;
            let ranking = rank_candidates(&cs, &[]);
            let mut flags = Vec::new();
            for (dir, failure) in [
                (Direction::Forward, f.failed),
                (Direction::Backward, b.failed),
            ] {
                if let Some(message) = failure {
                    flags.push(FlagReason::PropagationFailed {
                        direction: dir,
                        message,
                    });
                }
            }
            if cs.consistency < threshold {
                flags.push(FlagReason::LowConsistency {
                    consistency: cs.consistency,
                });
            }
            Ok(FrameResult {
                index: f.index,
                source: FrameSource::Candidate { tag: ranking[0] },
                mask: Some(cs.get(ranking[0]).clone()),
                candidates: Some(cs),
                ranking: Some(ranking),
                flags,
            })
        })
        .collect()
}

/// Fills a clip from its anchor masks (keyed by frame index).
///
/// Each span between consecutive expected anchor positions is propagated
/// forward from its left anchor and backward from its right anchor, fused,
/// and the top-ranked candidate is kept. A span with a missing anchor is
/// skipped and its frames flagged. Spans run concurrently unless the
/// propagator is single-threaded.
pub fn run_pipeline(
    clip: &FusionClip,
    prop: &dyn Propagator,
    anchors: &BTreeMap<usize, BinaryMask>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    if clip.frames.is_empty() {
        return Err(Error::invalid(format!(
            "clip `{}` has no frames",
            clip.clip_id
        )));
    }
    if let Some(w) = clip.frames.windows(2).find(|w| w[1].index <= w[0].index) {
        return Err(Error::invalid(format!(
            "clip `{}`: frame index {} does not increase",
            clip.clip_id, w[1].index
        )));
    }
    for m in anchors.values() {
        ensure_same_dims((clip.width, clip.height), m.dims())?;
    }

    let positions = anchor_positions(clip.frames.len(), cfg.cadence);
    let expected: BTreeSet<usize> = positions.iter().map(|&p| clip.frames[p].index).collect();
    let notes = anchors
        .keys()
        .filter(|k| !expected.contains(k))
        .map(|k| format!("anchor at frame {k} is off the cadence grid and was ignored"))
        .collect();

    let spans: Vec<Span> = positions
        .windows(2)
        .filter(|w| w[1] > w[0] + 1)
        .map(|w| Span {
            left: w[0],
            right: w[1],
        })
        .collect();
    let exec = if prop.thread_safe() {
        cfg.exec
    } else {
        Exec::Sequential
    };
    let filled = exec.map(&spans, |s| {
        fill_span(clip, prop, anchors, s, cfg.flag_threshold)
    });

    let mut by_index: BTreeMap<usize, FrameResult> = BTreeMap::new();
    for &p in &positions {
        let index = clip.frames[p].index;
        let result = match anchors.get(&index) {
            Some(m) => FrameResult {
                index,
                source: FrameSource::Anchor,
                mask: Some(m.clone()),
                candidates: None,
                ranking: None,
                flags: Vec::new(),
            },
            None => FrameResult {
                index,
                source: FrameSource::Missing,
                mask: None,
                candidates: None,
                ranking: None,
                flags: vec![FlagReason::MissingAnchor { anchor: index }],
            },
        };
        by_index.insert(index, result);
    }
    for span in filled {
        for r in span? {
            by_index.insert(r.index, r);
        }
    }

    let mut out = PipelineOutput {
        clip_id: clip.clip_id.clone(),
        width: clip.width,
        height: clip.height,
        tolerance: cfg.tolerance,
        frames: by_index.into_values().collect(),
        round: CorrectionRound {
            clip_id: clip.clip_id.clone(),
            round: 1,
            entries: Vec::new(),
            flagged: Vec::new(),
        },
        notes,
    };
    out.rebuild_round(1);
    Ok(out)
}

/// Applies a reviewed round to the pipeline state and returns the next round.
///
/// `corrections.round` must match the current round. Entries may name any
/// non-anchor frame; a candidate choice needs a fused frame, an external
/// choice needs `external_path` (resolved against `base_dir`). An entry that
/// changes a frame's mask source clears that frame's flags; entries equal to
/// the current state change nothing. Flags are never added, so the flagged
/// set can only shrink.
pub fn apply_corrections(
    output: &PipelineOutput,
    corrections: &CorrectionRound,
    base_dir: &Path,
) -> Result<PipelineOutput> {
    if corrections.clip_id != output.clip_id {
        return Err(Error::invalid(format!(
            "correction round is for clip `{}`, not `{}`",
            corrections.clip_id, output.clip_id
        )));
    }
    if corrections.round != output.round.round {
        return Err(Error::invalid(format!(
            "correction round {} does not match current round {}",
            corrections.round, output.round.round
        )));
    }
    let mut next = output.clone();
    let mut seen = BTreeSet::new();
    for entry in &corrections.entries {
        if !seen.insert(entry.frame) {
            return Err(Error::invalid(format!(
                "frame {} corrected twice",
                entry.frame
            )));
        }
        let frame = next
            .frames
            .iter_mut()
            .find(|f| f.index == entry.frame)
            .ok_or_else(|| {
                Error::invalid(format!("frame {} is not part of the clip", entry.frame))
            })?;
        if frame.source == FrameSource::Anchor {
            return Err(Error::invalid(format!(
                "frame {} is an anchor",
                entry.frame
            )));
        }
        let source = match (entry.choice.tag(), &entry.external_path) {
            (Some(tag), _) => {
                let cs = frame.candidates.as_ref().ok_or_else(|| {
                    Error::invalid(format!(
                        "frame {} has no candidates to choose from",
                        entry.frame
                    ))
                })?;
                if frame.source != (FrameSource::Candidate { tag }) {
                    frame.mask = Some(cs.get(tag).clone());
                }
                FrameSource::Candidate { tag }
            }
            (None, Some(path)) => {
                let source = FrameSource::External { path: path.clone() };
                if frame.source != source {
                    let mask = load_mask(&base_dir.join(path))?;
                    ensure_same_dims((output.width, output.height), mask.dims())?;
                    frame.mask = Some(mask);
                }
                source
            }
            (None, None) => {
                return Err(Error::invalid(format!(
                    "frame {}: external choice without external_path",
                    entry.frame
                )))
            }
        };
        if frame.source != source {
            frame.source = source;
            frame.flags.clear();
        }
    }
    next.rebuild_round(output.round.round + 1);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::super::{Affine, StaticPropagator, TransformPropagator};
    use super::*;

    fn clip(n: usize) -> FusionClip {
        FusionClip {
            clip_id: "c".into(),
            width: 12,
            height: 6,
            frames: (0..n)
                .map(|i| ClipFrame {
                    index: i,
                    image: PathBuf::from(format!("{i:05}.jpg")),
                })
                .collect(),
        }
    }

    fn square(x0: usize) -> BinaryMask {
        BinaryMask::from_fn(12, 6, move |x, y| {
            (x0..x0 + 3).contains(&x) && (1..4).contains(&y)
        })
    }

    #[test]
    fn anchor_grid() {
        assert_eq!(anchor_positions(13, 6), vec![0, 6, 12]);
        assert_eq!(anchor_positions(10, 6), vec![0, 6, 9]);
        assert_eq!(anchor_positions(1, 6), vec![0]);
        assert!(anchor_positions(0, 6).is_empty());
    }

    #[test]
    fn static_equal_anchors_reproduce() {
        let c = clip(13);
        let anchors = [0, 6, 12].into_iter().map(|i| (i, square(2))).collect();
        let out =
            run_pipeline(&c, &StaticPropagator, &anchors, &PipelineConfig::default()).unwrap();
        assert_eq!(out.frames.len(), 13);
        assert!(out
            .frames
            .iter()
            .all(|f| f.mask.as_ref() == Some(&square(2))));
        assert!(out.flagged().is_empty());
        assert_eq!(out.round.entries.len(), 10);
        assert!(out.round.entries.iter().all(|e| e.choice == Choice::And));
    }

    #[test]
    fn moving_square_is_exact() {
        let c = clip(13);
        let prop = TransformPropagator::new(
            (0..13)
                .map(|i| (i, Affine::translation((i / 2) as f64, 0.0)))
                .collect(),
        );
        let anchors = [0, 6, 12].into_iter().map(|i| (i, square(i / 2))).collect();
        let out = run_pipeline(&c, &prop, &anchors, &PipelineConfig::default()).unwrap();
        for f in &out.frames {
            assert_eq!(
                f.mask.as_ref(),
                Some(&square(f.index / 2)),
                "frame {}",
                f.index
            );
        }
        assert!(out.flagged().is_empty());
    }

    #[test]
    fn disagreeing_anchors_flag_everything() {
        let c = clip(7);
        let anchors = [(0, square(0)), (6, square(8))].into_iter().collect();
        let out =
            run_pipeline(&c, &StaticPropagator, &anchors, &PipelineConfig::default()).unwrap();
        assert_eq!(out.flagged(), vec![1, 2, 3, 4, 5]);
        assert_eq!(
            out.frame(3).unwrap().source,
            FrameSource::Candidate {
                tag: CandidateTag::Or
            }
        );
    }

    #[test]
    fn missing_anchor_skips_span() {
        let c = clip(13);
        let anchors = [(0, square(0)), (6, square(0))].into_iter().collect();
        let out =
            run_pipeline(&c, &StaticPropagator, &anchors, &PipelineConfig::default()).unwrap();
        assert_eq!(out.flagged(), (7..13).collect::<Vec<_>>());
        assert!(out.frame(9).unwrap().mask.is_none());
        assert_eq!(out.polygon_exports().len(), 7);
    }

    #[test]
    fn off_grid_anchor_noted() {
        let c = clip(7);
        let anchors = [(0, square(0)), (3, square(0)), (6, square(0))]
            .into_iter()
            .collect();
        let out =
            run_pipeline(&c, &StaticPropagator, &anchors, &PipelineConfig::default()).unwrap();
        assert_eq!(out.notes.len(), 1);
    }

    #[test]
    fn corrections_shrink_flags() {
        let c = clip(7);
        let anchors = [(0, square(0)), (6, square(8))].into_iter().collect();
        let out =
            run_pipeline(&c, &StaticPropagator, &anchors, &PipelineConfig::default()).unwrap();

        // Resubmitting the round unchanged resolves nothing.
        let same = apply_corrections(&out, &out.round, Path::new(".")).unwrap();
        assert_eq!(same.flagged(), out.flagged());
        assert_eq!(same.round.round, 2);

        let mut edit = out.round.clone();
        edit.entries.retain(|e| e.frame <= 2);
        for e in &mut edit.entries {
            e.choice = Choice::Fwd;
        }
        let next = apply_corrections(&out, &edit, Path::new(".")).unwrap();
        assert_eq!(next.flagged(), vec![3, 4, 5]);
        assert_eq!(next.frame(1).unwrap().mask.as_ref(), Some(&square(0)));
        assert!(apply_corrections(&next, &edit, Path::new(".")).is_err());
    }

    #[test]
    fn external_correction() {
        let dir = tempfile::tempdir().unwrap();
        crate::mask::io::save_mask(&square(4), &dir.path().join("fix.png")).unwrap();
        let c = clip(7);
        let anchors = [(0, square(0)), (6, square(8))].into_iter().collect();
        let out =
            run_pipeline(&c, &StaticPropagator, &anchors, &PipelineConfig::default()).unwrap();
        let edit = CorrectionRound {
            clip_id: "c".into(),
            round: 1,
            entries: vec![CorrectionEntry {
                frame: 3,
                choice: Choice::External,
                external_path: Some("fix.png".into()),
            }],
            flagged: vec![],
        };
        let next = apply_corrections(&out, &edit, dir.path()).unwrap();
        assert_eq!(next.frame(3).unwrap().mask.as_ref(), Some(&square(4)));
        assert!(!next.flagged().contains(&3));
        let back = CorrectionRound::from_json(&next.round.to_json()).unwrap();
        assert_eq!(back, next.round);
    }

    #[test]
    fn polygon_export_round_trip() {
        let ring = BinaryMask::from_fn(12, 6, |x, y| {
            (1..6).contains(&x) && (1..5).contains(&y) && !(x == 3 && y == 2)
        });
        let e = export_polygons("c", 0, &ring, 0.0);
        assert_eq!(e.instances[0].holes.len(), 1);
        let json = e.to_json();
        let back: PolygonExport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rasterize(12, 6).unwrap(), ring);
        assert!(export_polygons("c", 0, &BinaryMask::empty(3, 3), 0.0)
            .instances
            .is_empty());
    }
}
