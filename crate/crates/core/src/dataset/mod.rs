//! Dataset manifests, directory ingestion, validation and statistics.

mod manifest;
mod scan;
mod stats;
mod validate;

use serde::Serialize;

pub use manifest::{
    load_manifest, write_manifest, Category, ClipRecord, DatasetManifest, FrameEntry, Motion,
    Scenario, Split, StructureProblem, MANIFEST_VERSION,
};
pub use scan::{scan_directory, Layout, ScanOutcome};
pub use stats::{compute_stats, DatasetStats, GroupCount, MotionRow, ScaleSeries};
pub use validate::{
    validate_dataset, Coverage, FrameRef, LabelCount, ScaleSummary, ValidationReport, Violation,
    ViolationKind,
};

use crate::error::{Error, Result};
use crate::mask::io::{load_instances, load_mask};
use crate::mask::{bbox_of, BBox, BinaryMask, InstanceMask};
use crate::par::Exec;

/// Camouflage region of an annotated frame: the GT mask, or the union of
/// instances when only an instance map is present.
pub fn load_frame_mask(manifest: &DatasetManifest, frame: &FrameEntry) -> Result<BinaryMask> {
    match (&frame.gt, &frame.instances) {
        (Some(gt), _) => load_mask(&manifest.resolve(gt)),
        (None, Some(inst)) => Ok(load_instances(&manifest.resolve(inst))?.foreground()),
        (None, None) => Err(Error::invalid(format!(
            "frame {} has no annotation",
            frame.index
        ))),
    }
}

/// Instance map of an annotated frame; a plain GT mask is one instance.
pub fn load_frame_instances(
    manifest: &DatasetManifest,
    frame: &FrameEntry,
) -> Result<InstanceMask> {
    match (&frame.instances, &frame.gt) {
        (Some(inst), _) => load_instances(&manifest.resolve(inst)),
        (None, Some(gt)) => Ok(InstanceMask::from_binary(&load_mask(
            &manifest.resolve(gt),
        )?)),
        (None, None) => Err(Error::invalid(format!(
            "frame {} has no annotation",
            frame.index
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceBox {
    pub id: u32,
    #[serde(flatten)]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameBoxes {
    pub clip_id: String,
    pub frame: usize,
    pub boxes: Vec<InstanceBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoxExport {
    pub frames: Vec<FrameBoxes>,
    pub flags: Vec<String>,
}

/// Boxes of every instance of `labels`, in label order.
pub fn instance_boxes(labels: &InstanceMask) -> (Vec<InstanceBox>, Vec<u32>) {
    let mut boxes = Vec::new();
    let mut empty = Vec::new();
    for id in 1..=labels.instance_count() {
        match bbox_of(&labels.instance(id)) {
            Ok(bbox) => boxes.push(InstanceBox { id, bbox }),
            Err(_) => empty.push(id),
        }
    }
    (boxes, empty)
}

/// One box per instance per annotated frame, in manifest order.
pub fn export_bboxes(manifest: &DatasetManifest, exec: Exec) -> BoxExport {
    let jobs: Vec<(&ClipRecord, &FrameEntry)> = manifest
        .clips
        .iter()
        .flat_map(|c| c.annotated_frames().map(move |f| (c, f)))
        .collect();
    let results = exec.map(&jobs, |(_, f)| {
        load_frame_instances(manifest, f).map(|l| instance_boxes(&l))
    });
    let mut out = BoxExport {
        frames: Vec::new(),
        flags: Vec::new(),
    };
    for ((clip, frame), res) in jobs.iter().zip(results) {
        match res {
            Ok((boxes, empty)) => {
                if boxes.is_empty() && empty.is_empty() {
                    out.flags.push(format!(
                        "clip `{}` frame {}: no instances",
                        clip.clip_id, frame.index
                    ));
                }
                for id in empty {
                    out.flags.push(format!(
                        "clip `{}` frame {}: instance {id} is empty, skipped",
                        clip.clip_id, frame.index
                    ));
                }
                out.frames.push(FrameBoxes {
                    clip_id: clip.clip_id.clone(),
                    frame: frame.index,
                    boxes,
                });
            }
            Err(e) => out.flags.push(format!(
                "clip `{}` frame {}: {e}",
                clip.clip_id, frame.index
            )),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxes_follow_label_order() {
        let labels = InstanceMask::new(4, 3, vec![0, 2, 2, 0, 1, 0, 0, 0, 1, 0, 0, 0], 3).unwrap();
        let (boxes, empty) = instance_boxes(&labels);
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0].id, 1);
        assert_eq!(
            boxes[0].bbox,
            BBox {
                x_min: 0,
                y_min: 1,
                x_max: 0,
                y_max: 2
            }
        );
        assert_eq!(
            boxes[1].bbox,
            BBox {
                x_min: 1,
                y_min: 0,
                x_max: 2,
                y_max: 0
            }
        );
        assert_eq!(empty, vec![3]);
    }

    #[test]
    fn square_object_box() {
        let m = BinaryMask::from_fn(5, 5, |x, y| (1..3).contains(&x) && (1..3).contains(&y));
        let (boxes, _) = instance_boxes(&InstanceMask::from_binary(&m));
        assert_eq!(
            boxes[0].bbox,
            BBox {
                x_min: 1,
                y_min: 1,
                x_max: 2,
                y_max: 2
            }
        );
    }
}
