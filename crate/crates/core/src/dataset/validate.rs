//! Machine-checkable dataset guidelines: split hygiene, cadence, dimensions,
//! label coverage and target scale variation.

use std::collections::BTreeMap;

use serde::Serialize;

use super::load_frame_mask;
use super::manifest::{
    Category, ClipRecord, DatasetManifest, FrameEntry, Motion, Scenario, Split, StructureProblem,
};
use crate::mask::io::image_dims;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    DuplicateClip,
    SplitOverlap,
    FrameOrder,
    MissingMetadata,
    Cadence,
    DimensionMismatch,
    DanglingReference,
    UnreadableFile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameRef {
    pub clip_id: String,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelCount {
    pub label: String,
    pub clips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub scenario: Vec<LabelCount>,
    pub category: Vec<LabelCount>,
    pub motion: Vec<LabelCount>,
    pub split: Vec<LabelCount>,
}

/// Spread of per-frame foreground area ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleSummary {
    pub frames: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dataset: String,
    pub clips: usize,
    pub violations: Vec<Violation>,
    pub empty_annotations: Vec<FrameRef>,
    pub coverage: Coverage,
    pub scale: Option<ScaleSummary>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("# Validation: {} ({} clips)\n\n", self.dataset, self.clips);
        if self.violations.is_empty() {
            out.push_str("No violations.\n");
        } else {
            out.push_str("kind | clip | frame | message\n--- | --- | --- | ---\n");
            for v in &self.violations {
                out.push_str(&format!(
                    "{} | {} | {} | {}\n",
                    serde_json::to_value(v.kind)
                        .unwrap()
                        .as_str()
                        .unwrap_or_default(),
                    v.clip_id.as_deref().unwrap_or("-"),
                    v.frame.map(|f| f.to_string()).unwrap_or_else(|| "-".into()),
                    v.message
                ));
            }
        }
        for (title, rows) in [
            ("Scenario", &self.coverage.scenario),
            ("Category", &self.coverage.category),
            ("Motion", &self.coverage.motion),
            ("Split", &self.coverage.split),
        ] {
            out.push_str(&format!("\n{title} | clips\n--- | ---\n"));
            for r in rows {
                out.push_str(&format!("{} | {}\n", r.label, r.clips));
            }
        }
        if let Some(s) = &self.scale {
            out.push_str(&format!(
                "\nScale (area ratio over {} frames): min {:.4}, median {:.4}, max {:.4}\n",
                s.frames, s.min, s.median, s.max
            ));
        }
        if !self.empty_annotations.is_empty() {
            out.push_str(&format!(
                "\n{} annotated frames are empty.\n",
                self.empty_annotations.len()
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("\nwarning: {w}"));
        }
        out
    }
}

fn count_labels<T: Copy + Ord + std::fmt::Display>(
    clips: &[ClipRecord],
    all: &[T],
    key: impl Fn(&ClipRecord) -> Option<T>,
) -> Vec<LabelCount> {
    let mut counts: BTreeMap<Option<T>, usize> = BTreeMap::new();
    for c in clips {
        *counts.entry(key(c)).or_default() += 1;
    }
    let mut rows: Vec<LabelCount> = all
        .iter()
        .map(|v| LabelCount {
            label: v.to_string(),
            clips: counts.get(&Some(*v)).copied().unwrap_or(0),
        })
        .collect();
    if let Some(&n) = counts.get(&None) {
        rows.push(LabelCount {
            label: "unset".into(),
            clips: n,
        });
    }
    rows
}

pub(crate) fn coverage(clips: &[ClipRecord]) -> Coverage {
    Coverage {
        scenario: count_labels(clips, Scenario::ALL, |c| c.scenario),
        category: count_labels(clips, Category::ALL, |c| c.category),
        motion: count_labels(clips, Motion::ALL, |c| c.motion),
        split: count_labels(clips, Split::ALL, |c| c.split),
    }
}

/// Median of a sorted slice; mean of the two middle values for even length.
fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn violation(
    kind: ViolationKind,
    clip: &ClipRecord,
    frame: Option<usize>,
    message: String,
) -> Violation {
    Violation {
        kind,
        clip_id: Some(clip.clip_id.clone()),
        frame,
        message,
    }
}

fn check_metadata(clip: &ClipRecord, out: &mut Vec<Violation>, warnings: &mut Vec<String>) {
    let missing: Vec<&str> = [
        ("scenario", clip.scenario.is_none()),
        ("category", clip.category.is_none()),
        ("motion", clip.motion.is_none()),
        ("split", clip.split.is_none()),
        ("fps", clip.fps.is_none()),
    ]
    .into_iter()
    .filter_map(|(n, m)| m.then_some(n))
    .collect();
    if !missing.is_empty() {
        out.push(violation(
            ViolationKind::MissingMetadata,
            clip,
            None,
            format!("unset: {}", missing.join(", ")),
        ));
    }
    // Medical targets only occur in clinical footage and vice versa.
    if let (Some(s), Some(c)) = (clip.scenario, clip.category) {
        if (s == Scenario::Medical) != (c == Category::Medical) {
            warnings.push(format!(
                "clip `{}`: unusual scenario/category combination {s}/{c}",
                clip.clip_id
            ));
        }
    }
}

fn check_cadence(clip: &ClipRecord, out: &mut Vec<Violation>) {
    if clip.fps == Some(0) {
        out.push(violation(
            ViolationKind::Cadence,
            clip,
            None,
            "fps must be at least 1".into(),
        ));
    }
    if clip.frames.is_empty() {
        out.push(violation(
            ViolationKind::Cadence,
            clip,
            None,
            "clip has no frames".into(),
        ));
        return;
    }
    let idx: Vec<usize> = clip.annotated_frames().map(|f| f.index).collect();
    let gaps: Vec<usize> = idx.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some((pos, gap)) = gaps.iter().enumerate().find(|(_, &g)| g != gaps[0]) {
        out.push(violation(
            ViolationKind::Cadence,
            clip,
            Some(idx[pos + 1]),
            format!(
                "annotation stride {gap} differs from clip stride {}",
                gaps[0]
            ),
        ));
    }
}

/// Checks every file a frame references; returns the frame's mask area ratio.
fn check_frame(
    manifest: &DatasetManifest,
    clip: &ClipRecord,
    frame: &FrameEntry,
) -> (Vec<Violation>, Option<f64>) {
    let mut out = Vec::new();
    let expected = (clip.width, clip.height);
    let refs = [
        Some(&frame.image),
        frame.gt.as_ref(),
        frame.instances.as_ref(),
    ];
    for rel in refs.into_iter().flatten() {
        let path = manifest.resolve(rel);
        if !path.exists() {
            out.push(violation(
                ViolationKind::DanglingReference,
                clip,
                Some(frame.index),
                format!("{} does not exist", rel.display()),
            ));
            continue;
        }
        match image_dims(&path) {
            Ok(d) if d != expected => out.push(violation(
                ViolationKind::DimensionMismatch,
                clip,
                Some(frame.index),
                format!(
                    "{} is {}x{}, clip is {}x{}",
                    rel.display(),
                    d.0,
                    d.1,
                    expected.0,
                    expected.1
                ),
            )),
            Ok(_) => {}
            Err(e) => out.push(violation(
                ViolationKind::UnreadableFile,
                clip,
                Some(frame.index),
                e.to_string(),
            )),
        }
    }
    if !out.is_empty() || !frame.is_annotated() {
        return (out, None);
    }
    match load_frame_mask(manifest, frame) {
        Ok(m) => (out, Some(m.area_ratio())),
        Err(e) => {
            out.push(violation(
                ViolationKind::UnreadableFile,
                clip,
                Some(frame.index),
                e.to_string(),
            ));
            (out, None)
        }
    }
}

/// Runs every check and reports; never aborts. Output depends only on the
/// manifest and the files it references.
pub fn validate_dataset(manifest: &DatasetManifest, exec: Exec) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();

    for problem in manifest.structure_problems() {
        let (kind, clip_id, frame) = match &problem {
            StructureProblem::DuplicateClip(id) => {
                (ViolationKind::DuplicateClip, Some(id.clone()), None)
            }
            StructureProblem::FrameOrder { clip_id, index } => (
                ViolationKind::FrameOrder,
                Some(clip_id.clone()),
                Some(*index),
            ),
            StructureProblem::SplitOverlap { clips, .. } => {
                (ViolationKind::SplitOverlap, Some(clips.1.clone()), None)
            }
        };
        violations.push(Violation {
            kind,
            clip_id,
            frame,
            message: problem.to_string(),
        });
    }

    for clip in &manifest.clips {
        check_metadata(clip, &mut violations, &mut warnings);
        check_cadence(clip, &mut violations);
    }

    let jobs: Vec<(&ClipRecord, &FrameEntry)> = manifest
        .clips
        .iter()
        .flat_map(|c| c.frames.iter().map(move |f| (c, f)))
        .collect();
    let results = exec.map(&jobs, |(c, f)| check_frame(manifest, c, f));

    let mut ratios = Vec::new();
    let mut empty_annotations = Vec::new();
    for ((clip, frame), (v, ratio)) in jobs.iter().zip(results) {
        violations.extend(v);
        if let Some(r) = ratio {
            if r == 0.0 {
                empty_annotations.push(FrameRef {
                    clip_id: clip.clip_id.clone(),
                    frame: frame.index,
                });
            }
            ratios.push(r);
        }
    }
    ratios.sort_by(f64::total_cmp);
    let scale = (!ratios.is_empty()).then(|| ScaleSummary {
        frames: ratios.len(),
        min: ratios[0],
        median: median(&ratios),
        max: ratios[ratios.len() - 1],
    });

    let cov = coverage(&manifest.clips);
    for (name, rows) in [
        ("scenario", &cov.scenario),
        ("category", &cov.category),
        ("motion", &cov.motion),
    ] {
        let absent: Vec<&str> = rows
            .iter()
            .filter(|r| r.clips == 0 && r.label != "unset")
            .map(|r| r.label.as_str())
            .collect();
        if !absent.is_empty() && !manifest.clips.is_empty() {
            warnings.push(format!("no clips with {name} {}", absent.join(", ")));
        }
    }

    ValidationReport {
        dataset: manifest.name.clone(),
        clips: manifest.clips.len(),
        violations,
        empty_annotations,
        coverage: cov,
        scale,
        warnings,
    }
}
