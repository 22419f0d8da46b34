use serde::Serialize;

use super::load_frame_mask;
use super::manifest::{Category, ClipRecord, DatasetManifest, FrameEntry, Motion, Scenario, Split};
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupCount {
    pub label: String,
    pub clips: usize,
    pub frames: usize,
    pub annotated_frames: usize,
}

/// Clip counts of one motion pattern, by split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MotionRow {
    pub label: String,
    pub train: usize,
    pub test: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleSeries {
    pub clip_id: String,
    pub n_frames: usize,
    /// `(frame index, foreground area / image area)` per readable annotated frame.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub dataset: String,
    pub clip_count: usize,
    pub frame_count: usize,
    pub annotated_frame_count: usize,
    pub mean_frames_per_clip: f64,
    pub per_split: Vec<GroupCount>,
    pub per_scenario: Vec<GroupCount>,
    pub per_category: Vec<GroupCount>,
    pub per_motion: Vec<MotionRow>,
    pub scale_series: Vec<ScaleSeries>,
    /// Frames excluded from the scale series because their mask was unreadable.
    pub flags: Vec<String>,
}

fn group<T: Copy + Eq + std::fmt::Display>(
    clips: &[ClipRecord],
    all: &[T],
    key: impl Fn(&ClipRecord) -> Option<T>,
) -> Vec<GroupCount> {
    let row = |label: String, members: Vec<&ClipRecord>| GroupCount {
        label,
        clips: members.len(),
        frames: members.iter().map(|c| c.frames.len()).sum(),
        annotated_frames: members.iter().map(|c| c.annotated_frames().count()).sum(),
    };
    let mut rows: Vec<GroupCount> = all
        .iter()
        .map(|&v| {
            row(
                v.to_string(),
                clips.iter().filter(|c| key(c) == Some(v)).collect(),
            )
        })
        .collect();
    let unset: Vec<&ClipRecord> = clips.iter().filter(|c| key(c).is_none()).collect();
    if !unset.is_empty() {
        rows.push(row("unset".into(), unset));
    }
    rows
}

fn motion_rows(clips: &[ClipRecord]) -> Vec<MotionRow> {
    let count = |m: Option<Motion>, s: Option<Split>| {
        clips
            .iter()
            .filter(|c| c.motion == m && (s.is_none() || c.split == s))
            .count()
    };
    let mut keys: Vec<Option<Motion>> = Motion::ALL.iter().copied().map(Some).collect();
    if clips.iter().any(|c| c.motion.is_none()) {
        keys.push(None);
    }
    keys.into_iter()
        .map(|m| MotionRow {
            label: m.map(|m| m.to_string()).unwrap_or_else(|| "unset".into()),
            train: count(m, Some(Split::Train)),
            test: count(m, Some(Split::Test)),
            total: count(m, None),
        })
        .collect()
}

/// Counts and per-frame scale ratios. Unreadable masks are flagged and
/// left out of the scale series; every count still includes them.
pub fn compute_stats(manifest: &DatasetManifest, exec: Exec) -> DatasetStats {
    let clips = &manifest.clips;
    let frame_count: usize = clips.iter().map(|c| c.frames.len()).sum();
    let annotated_frame_count: usize = clips.iter().map(|c| c.annotated_frames().count()).sum();

    let jobs: Vec<(usize, &ClipRecord, &FrameEntry)> = clips
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.annotated_frames().map(move |f| (i, c, f)))
        .collect();
    let ratios = exec.map(&jobs, |(_, _, f)| {
        load_frame_mask(manifest, f).map(|m| m.area_ratio())
    });

    let mut flags = Vec::new();
    let mut scale_series: Vec<ScaleSeries> = clips
        .iter()
        .map(|c| ScaleSeries {
            clip_id: c.clip_id.clone(),
            n_frames: c.frames.len(),
            points: Vec::new(),
        })
        .collect();
    for ((clip_pos, clip, frame), ratio) in jobs.iter().zip(ratios) {
        match ratio {
            Ok(r) => scale_series[*clip_pos].points.push((frame.index, r)),
            Err(e) => flags.push(format!(
                "clip `{}` frame {}: {e}",
                clip.clip_id, frame.index
            )),
        }
    }

    DatasetStats {
        dataset: manifest.name.clone(),
        clip_count: clips.len(),
        frame_count,
        annotated_frame_count,
        mean_frames_per_clip: if clips.is_empty() {
            0.0
        } else {
            frame_count as f64 / clips.len() as f64
        },
        per_split: group(clips, Split::ALL, |c| c.split),
        per_scenario: group(clips, Scenario::ALL, |c| c.scenario),
        per_category: group(clips, Category::ALL, |c| c.category),
        per_motion: motion_rows(clips),
        scale_series,
        flags,
    }
}

impl DatasetStats {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }

    /// Clip/frame totals and the grouping tables, without the scale series.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# {}\n\nclips | frames | annotated frames | mean frames per clip\n--- | --- | --- | ---\n{} | {} | {} | {:.2}\n",
            self.dataset, self.clip_count, self.frame_count, self.annotated_frame_count, self.mean_frames_per_clip
        );
        for (title, rows) in [
            ("Split", &self.per_split),
            ("Scenario", &self.per_scenario),
            ("Category", &self.per_category),
        ] {
            out.push_str(&format!(
                "\n{title} | clips | frames | annotated frames\n--- | --- | --- | ---\n"
            ));
            for r in rows {
                out.push_str(&format!(
                    "{} | {} | {} | {}\n",
                    r.label, r.clips, r.frames, r.annotated_frames
                ));
            }
        }
        out.push_str("\nMotion | Train | Test | Total\n--- | --- | --- | ---\n");
        for r in &self.per_motion {
            out.push_str(&format!(
                "{} | {} | {} | {}\n",
                r.label, r.train, r.test, r.total
            ));
        }
        if !self.flags.is_empty() {
            out.push_str(&format!(
                "\n{} frames flagged (unreadable masks).\n",
                self.flags.len()
            ));
        }
        out
    }
}
