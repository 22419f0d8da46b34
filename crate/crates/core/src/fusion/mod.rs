//! Batch core of semi-automatic mask annotation: reference selection,
//! bidirectional propagation between corrected anchors, AND/OR candidate
//! fusion, deterministic ranking, and polygon export for correction rounds.

mod pipeline;
mod propagator;

use serde::{Deserialize, Serialize};

pub use pipeline::{
    anchor_positions, apply_corrections, export_polygons, run_pipeline, Choice, CorrectionEntry,
    CorrectionRound, FlagReason, FrameResult, FrameSource, FusionClip, InstancePolygons,
    PipelineConfig, PipelineOutput, PolygonExport,
};
pub use propagator::{
    Affine, ClipFrame, Direction, PropagationRequest, Propagator, StaticPropagator,
    SubprocessPropagator, TransformPropagator,
};

use crate::error::{Error, Result};
use crate::mask::{ensure_same_dims, BinaryMask};
use crate::metrics::iou;

/// Index of the first frame that shows the object.
pub fn select_reference_frame(presence: &[bool]) -> Result<usize> {
    presence
        .iter()
        .position(|&p| p)
        .ok_or_else(|| Error::invalid("no frame contains the object"))
}

/// Masks carried from `reference` (a position in `frames`) in one direction,
/// returned in temporal order with the reference frame keeping its mask.
/// Frames whose propagation failed get an empty mask and `failed = true`.
pub fn propagate(
    prop: &dyn Propagator,
    frames: &[ClipFrame],
    reference: usize,
    reference_mask: &BinaryMask,
    direction: Direction,
) -> Result<Vec<PropagatedFrame>> {
    if reference >= frames.len() {
        return Err(Error::invalid(format!(
            "reference position {reference} outside clip of {} frames",
            frames.len()
        )));
    }
    let targets: Vec<ClipFrame> = match direction {
        Direction::Forward => frames[reference + 1..].to_vec(),
        Direction::Backward => frames[..reference].iter().rev().cloned().collect(),
    };
    let mut out = propagate_targets(
        prop,
        &frames[reference],
        reference_mask,
        &targets,
        direction,
    );
    out.push(PropagatedFrame {
        index: frames[reference].index,
        mask: reference_mask.clone(),
        failed: None,
    });
    out.sort_by_key(|f| f.index);
    Ok(out)
}

pub(crate) fn propagate_targets(
    prop: &dyn Propagator,
    reference: &ClipFrame,
    reference_mask: &BinaryMask,
    targets: &[ClipFrame],
    direction: Direction,
) -> Vec<PropagatedFrame> {
    let request = PropagationRequest {
        reference,
        reference_mask,
        targets,
        direction,
    };
    let mut results = prop.propagate(&request);
    if results.len() != targets.len() {
        let msg = format!(
            "propagator returned {} masks for {} frames",
            results.len(),
            targets.len()
        );
        results = targets
            .iter()
            .map(|_| Err(Error::Propagator(msg.clone())))
            .collect();
    }
    let dims = reference_mask.dims();
    targets
        .iter()
        .zip(results)
        .map(|(t, r)| {
            let r = r.and_then(|m| ensure_same_dims(dims, m.dims()).map(|_| m));
            match r {
                Ok(mask) => PropagatedFrame {
                    index: t.index,
                    mask,
                    failed: None,
                },
                Err(e) => PropagatedFrame {
                    index: t.index,
                    mask: BinaryMask::empty(dims.0, dims.1),
                    failed: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedFrame {
    pub index: usize,
    pub mask: BinaryMask,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateTag {
    And,
    Fwd,
    Bwd,
    Or,
}

impl CandidateTag {
    /// Tie-break order.
    pub const ORDER: [CandidateTag; 4] = [
        CandidateTag::And,
        CandidateTag::Fwd,
        CandidateTag::Bwd,
        CandidateTag::Or,
    ];
}

/// The four pseudo-labels of one intermediate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub frame: usize,
    pub fwd: BinaryMask,
    pub bwd: BinaryMask,
    pub and_mask: BinaryMask,
    pub or_mask: BinaryMask,
    /// IoU of the forward and backward masks.
    pub consistency: f64,
}

impl CandidateSet {
    pub fn get(&self, tag: CandidateTag) -> &BinaryMask {
        match tag {
            CandidateTag::And => &self.and_mask,
            CandidateTag::Fwd => &self.fwd,
            CandidateTag::Bwd => &self.bwd,
            CandidateTag::Or => &self.or_mask,
        }
    }
}

pub fn fuse_bidirectional(
    frame: usize,
    fwd: &BinaryMask,
    bwd: &BinaryMask,
) -> Result<CandidateSet> {
    Ok(CandidateSet {
        frame,
        and_mask: fwd.and(bwd)?,
        or_mask: fwd.or(bwd)?,
        consistency: iou(fwd, bwd)?,
        fwd: fwd.clone(),
        bwd: bwd.clone(),
    })
}

/// Orders the candidates best-first.
///
/// With neighbor masks: by mean IoU against them, ties in `ORDER`. Without:
/// `(and, fwd, bwd, or)` when the two directions agree (consistency >= 0.5),
/// otherwise `(or, fwd, bwd, and)`.
pub fn rank_candidates(cs: &CandidateSet, neighbors: &[BinaryMask]) -> [CandidateTag; 4] {
    let usable: Vec<&BinaryMask> = neighbors
        .iter()
        .filter(|n| n.dims() == cs.fwd.dims())
        .collect();
    if usable.is_empty() {
        return if cs.consistency >= 0.5 {
            CandidateTag::ORDER
        } else {
            [
                CandidateTag::Or,
                CandidateTag::Fwd,
                CandidateTag::Bwd,
                CandidateTag::And,
            ]
        };
    }
    let score = |tag: CandidateTag| {
        let sum: f64 = usable
            .iter()
            .map(|n| iou(cs.get(tag), n).expect("dims checked"))
            .sum();
        sum / usable.len() as f64
    };
    let mut ranked: Vec<(CandidateTag, f64)> =
        CandidateTag::ORDER.iter().map(|&t| (t, score(t))).collect();
    // Stable sort keeps ORDER among equal scores.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    [ranked[0].0, ranked[1].0, ranked[2].0, ranked[3].0]
}
