//! Aggregation of frame scores into clip and group results, and emission of
//! score tables and scale-scatter data.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    load_frame_mask, Category, ClipRecord, DatasetManifest, DatasetStats, FrameEntry, Motion,
    Scenario, Split,
};
use crate::error::{Error, Result};
use crate::mask::io::load_gray;
use crate::metrics::{eval_frame, FrameScores, MetricConfig};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Frame mean within each clip, then unweighted mean over clips.
    ClipMean,
    /// Mean over every evaluated frame of the group.
    FrameWeighted,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::ClipMean => "clip-mean",
            Aggregation::FrameWeighted => "frame-weighted",
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip-mean" => Ok(Aggregation::ClipMean),
            "frame-weighted" => Ok(Aggregation::FrameWeighted),
            _ => Err(Error::invalid(format!("unknown aggregation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    All,
    Split,
    Scenario,
    Category,
    Motion,
}

impl Grouping {
    pub const ALL: &'static [Grouping] = &[
        Grouping::All,
        Grouping::Split,
        Grouping::Scenario,
        Grouping::Category,
        Grouping::Motion,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Grouping::All => "all",
            Grouping::Split => "split",
            Grouping::Scenario => "scenario",
            Grouping::Category => "category",
            Grouping::Motion => "motion",
        }
    }

    /// Group labels in enum order, plus `unset` for clips without the label.
    fn keys(self, clip: &ClipEval) -> String {
        fn or_unset<T: fmt::Display>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_else(|| "unset".into())
        }
        match self {
            Grouping::All => "all".into(),
            Grouping::Split => or_unset(clip.split),
            Grouping::Scenario => or_unset(clip.scenario),
            Grouping::Category => or_unset(clip.category),
            Grouping::Motion => or_unset(clip.motion),
        }
    }

    fn labels(self) -> Vec<String> {
        fn names<T: fmt::Display>(all: &[T]) -> Vec<String> {
            all.iter()
                .map(|v| v.to_string())
                .chain(["unset".to_string()])
                .collect()
        }
        match self {
            Grouping::All => vec!["all".into()],
            Grouping::Split => names(Split::ALL),
            Grouping::Scenario => names(Scenario::ALL),
            Grouping::Category => names(Category::ALL),
            Grouping::Motion => names(Motion::ALL),
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grouping::ALL
            .iter()
            .copied()
            .find(|g| g.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown grouping `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub cfg: MetricConfig,
    /// Missing predictions abort instead of being skipped with a note.
    pub strict: bool,
    pub exclude_empty_gt: bool,
    pub aggregation: Aggregation,
    /// Only clips of this split are evaluated; `None` evaluates all.
    pub split: Option<Split>,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cfg: MetricConfig::default(),
            strict: true,
            exclude_empty_gt: false,
            aggregation: Aggregation::ClipMean,
            split: Some(Split::Test),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipEval {
    pub clip_id: String,
    pub split: Option<Split>,
    pub scenario: Option<Scenario>,
    pub category: Option<Category>,
    pub motion: Option<Motion>,
    /// Per evaluated frame, in frame order.
    pub frames: Vec<(usize, FrameScores)>,
    pub scores: FrameScores,
}

impl ClipEval {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub grouping: Grouping,
    pub group: String,
    pub clips: usize,
    pub frames: usize,
    pub scores: FrameScores,
}

impl GroupReport {
    /// Row label: `all`, or `<grouping>:<group>`.
    pub fn row_label(&self) -> String {
        match self.grouping {
            Grouping::All => "all".into(),
            g => format!("{g}:{}", self.group),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEval {
    pub aggregation: Aggregation,
    pub clips: Vec<ClipEval>,
    pub groups: Vec<GroupReport>,
    pub notes: Vec<String>,
}

/// Prediction map of a frame: `<pred_root>/<clip_id>/<image stem>.png`.
pub fn prediction_path(pred_root: &Path, clip: &ClipRecord, frame: &FrameEntry) -> PathBuf {
    pred_root
        .join(&clip.clip_id)
        .join(format!("{}.png", frame.stem()))
}

enum FrameOutcome {
    Scored(FrameScores),
    MissingPrediction,
    EmptyGtExcluded,
}

fn eval_one(
    manifest: &DatasetManifest,
    clip: &ClipRecord,
    frame: &FrameEntry,
    pred_root: &Path,
    opts: &EvalOptions,
) -> Result<FrameOutcome> {
    let pred_path = prediction_path(pred_root, clip, frame);
    if !pred_path.is_file() {
        return Ok(FrameOutcome::MissingPrediction);
    }
    let gt = load_frame_mask(manifest, frame)?;
    if opts.exclude_empty_gt && gt.is_empty() {
        return Ok(FrameOutcome::EmptyGtExcluded);
    }
    let pred = load_gray(&pred_path)?;
    eval_frame(&pred, &gt, &opts.cfg).map(FrameOutcome::Scored)
}

fn collect_clip(
    clip: &ClipRecord,
    outcomes: Vec<(usize, Result<FrameOutcome>)>,
    opts: &EvalOptions,
    notes: &mut Vec<String>,
) -> Result<ClipEval> {
    let mut frames = Vec::new();
    let mut missing = Vec::new();
    let mut excluded = 0usize;
    for (index, outcome) in outcomes {
        match outcome
            .map_err(|e| Error::invalid(format!("clip {} frame {index}: {e}", clip.clip_id)))?
        {
            FrameOutcome::Scored(s) => frames.push((index, s)),
            FrameOutcome::MissingPrediction => missing.push(index),
            FrameOutcome::EmptyGtExcluded => excluded += 1,
        }
    }
    if !missing.is_empty() {
        if opts.strict {
            return Err(Error::MissingPredictions {
                clip_id: clip.clip_id.clone(),
                frames: missing,
            });
        }
        notes.push(format!(
            "clip {}: skipped frames without predictions {missing:?}",
            clip.clip_id
        ));
    }
    if excluded > 0 {
        notes.push(format!(
            "clip {}: excluded {excluded} empty-GT frames",
            clip.clip_id
        ));
    }
    let scores = FrameScores::mean(frames.iter().map(|(_, s)| s))
        .ok_or_else(|| Error::NoEvaluableFrames(clip.clip_id.clone()))?;
    Ok(ClipEval {
        clip_id: clip.clip_id.clone(),
        split: clip.split,
        scenario: clip.scenario,
        category: clip.category,
        motion: clip.motion,
        frames,
        scores,
    })
}

/// Scores every annotated frame of `clip` and averages them in frame order.
pub fn eval_clip(
    manifest: &DatasetManifest,
    clip: &ClipRecord,
    pred_root: &Path,
    opts: &EvalOptions,
) -> Result<ClipEval> {
    opts.cfg.validate()?;
    let frames: Vec<&FrameEntry> = clip.annotated_frames().collect();
    let outcomes = opts
        .exec
        .map(&frames, |f| eval_one(manifest, clip, f, pred_root, opts));
    let outcomes = frames.iter().map(|f| f.index).zip(outcomes).collect();
    collect_clip(clip, outcomes, opts, &mut Vec::new())
}

/// Evaluates the selected clips and aggregates them under each grouping.
///
/// Frames of all clips are scored in one parallel pass; reduction happens
/// afterwards in manifest order, so the result does not depend on the
/// thread count. In lenient mode clips without any evaluable frame are
/// dropped with a note.
pub fn eval_dataset(
    manifest: &DatasetManifest,
    pred_root: &Path,
    groupings: &[Grouping],
    opts: &EvalOptions,
) -> Result<DatasetEval> {
    opts.cfg.validate()?;
    let clips: Vec<&ClipRecord> = manifest
        .clips
        .iter()
        .filter(|c| opts.split.is_none() || c.split == opts.split)
        .collect();
    let jobs: Vec<(usize, &FrameEntry)> = clips
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.annotated_frames().map(move |f| (i, f)))
        .collect();
    let outcomes = opts.exec.map(&jobs, |&(i, f)| {
        eval_one(manifest, clips[i], f, pred_root, opts)
    });

    let mut per_clip: Vec<Vec<(usize, Result<FrameOutcome>)>> =
        clips.iter().map(|_| Vec::new()).collect();
    for ((i, f), o) in jobs.iter().zip(outcomes) {
        per_clip[*i].push((f.index, o));
    }
    let mut notes = Vec::new();
    let mut evals = Vec::new();
    for (clip, outcomes) in clips.iter().zip(per_clip) {
        match collect_clip(clip, outcomes, opts, &mut notes) {
            Ok(e) => evals.push(e),
            Err(Error::NoEvaluableFrames(id)) if !opts.strict => {
                notes.push(format!("clip {id}: no evaluable frames, omitted"));
            }
            Err(e) => return Err(e),
        }
    }
    if evals.is_empty() {
        return Err(Error::NoEvaluableFrames(format!(
            "{} (no clip of the selected split could be evaluated)",
            manifest.name
        )));
    }
    let groups = aggregate(&evals, groupings, opts.aggregation, &mut notes);
    Ok(DatasetEval {
        aggregation: opts.aggregation,
        clips: evals,
        groups,
        notes,
    })
}

/// Group rows in grouping order, then label (enum) order. Empty groups are
/// omitted with a note.
pub fn aggregate(
    clips: &[ClipEval],
    groupings: &[Grouping],
    aggregation: Aggregation,
    notes: &mut Vec<String>,
) -> Vec<GroupReport> {
    let mut out = Vec::new();
    for &g in groupings {
        for label in g.labels() {
            let members: Vec<&ClipEval> = clips.iter().filter(|c| g.keys(c) == label).collect();
            if members.is_empty() {
                if label != "unset" {
                    notes.push(format!("group {g}:{label} has no clips, omitted"));
                }
                continue;
            }
            let scores = match aggregation {
                Aggregation::ClipMean => FrameScores::mean(members.iter().map(|c| &c.scores)),
                Aggregation::FrameWeighted => {
                    FrameScores::mean(members.iter().flat_map(|c| c.frames.iter().map(|(_, s)| s)))
                }
            }
            .expect("members are non-empty and every clip has frames");
            out.push(GroupReport {
                grouping: g,
                group: label,
                clips: members.len(),
                frames: members.iter().map(|c| c.n_frames()).sum(),
                scores,
            });
        }
    }
    out
}

/// One table row in the emitted column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub clips: usize,
    #[serde(rename = "S_alpha")]
    pub s_alpha: f64,
    #[serde(rename = "Fw_beta")]
    pub f_beta_w: f64,
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "mDice")]
    pub dice: f64,
    #[serde(rename = "mIoU")]
    pub iou: f64,
}

impl ReportRow {
    pub fn new(group: impl Into<String>, clips: usize, s: &FrameScores) -> Self {
        Self {
            group: group.into(),
            clips,
            s_alpha: s.s_alpha,
            f_beta_w: s.f_beta_w,
            mae: s.mae,
            dice: s.dice,
            iou: s.iou,
        }
    }

    pub fn scores(&self) -> FrameScores {
        FrameScores::from_array([self.s_alpha, self.f_beta_w, self.mae, self.dice, self.iou])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub aggregation: Aggregation,
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub const CLIP_ROW_PREFIX: &str = "clip:";

impl DatasetEval {
    /// Group rows followed by one `clip:<id>` row per clip.
    pub fn table(&self) -> ReportTable {
        let groups = self
            .groups
            .iter()
            .map(|g| ReportRow::new(g.row_label(), g.clips, &g.scores));
        let clips = self
            .clips
            .iter()
            .map(|c| ReportRow::new(format!("{CLIP_ROW_PREFIX}{}", c.clip_id), 1, &c.scores));
        ReportTable {
            aggregation: self.aggregation,
            rows: groups.chain(clips).collect(),
            notes: self.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Markdown),
            _ => Err(Error::invalid(format!(
                "unknown format `{s}` (csv, json, md)"
            ))),
        }
    }
}

const AGGREGATION_COMMENT: &str = "# aggregation: ";

/// Renders a table. CSV and JSON carry full precision; markdown rounds to
/// three decimals. Every document names its aggregation mode.
pub fn emit(table: &ReportTable, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(table)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &table.rows {
                w.serialize(row)?;
            }
            if table.rows.is_empty() {
                w.write_record([
                    "group", "clips", "S_alpha", "Fw_beta", "MAE", "mDice", "mIoU",
                ])?;
            }
            let body = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
            let mut s = format!("{AGGREGATION_COMMENT}{}\n", table.aggregation.label());
            s.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
            Ok(s)
        }
        Format::Markdown => {
            let mut s = format!(
                "aggregation: {}\n\ngroup | clips | S_alpha | Fw_beta | MAE | mDice | mIoU\n--- | --- | --- | --- | --- | --- | ---\n",
                table.aggregation.label()
            );
            for r in &table.rows {
                s.push_str(&format!(
                    "{} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3}\n",
                    r.group, r.clips, r.s_alpha, r.f_beta_w, r.mae, r.dice, r.iou
                ));
            }
            for n in &table.notes {
                s.push_str(&format!("\nnote: {n}"));
            }
            if !table.notes.is_empty() {
                s.push('\n');
            }
            Ok(s)
        }
    }
}

pub fn parse_json(text: &str) -> Result<ReportTable> {
    Ok(serde_json::from_str(text)?)
}

/// Reads back a CSV table written by [`emit`]. Notes are not part of CSV.
pub fn parse_csv(text: &str) -> Result<ReportTable> {
    let aggregation = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix(AGGREGATION_COMMENT))
        .ok_or_else(|| Error::invalid("csv report lacks the aggregation comment line"))?
        .trim()
        .parse()?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<ReportRow>, _>>()?;
    Ok(ReportTable {
        aggregation,
        rows,
        notes: Vec::new(),
    })
}

#[derive(Debug, Serialize)]
struct ScatterRow<'a> {
    kind: &'static str,
    clip_id: &'a str,
    n_frames: usize,
    frame: Option<usize>,
    area_ratio: Option<f64>,
    min_ratio: Option<f64>,
    mean_ratio: Option<f64>,
    max_ratio: Option<f64>,
}

/// Object-to-image area ratio against clip length: one `clip` row with the
/// min/mean/max ratio per clip, then one `frame` row per annotated frame.
pub fn emit_scale_scatter(stats: &DatasetStats) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &stats.scale_series {
        let ratios: Vec<f64> = s.points.iter().map(|&(_, r)| r).collect();
        let (min, mean, max) = if ratios.is_empty() {
            (None, None, None)
        } else {
            (
                ratios.iter().copied().reduce(f64::min),
                Some(ratios.iter().sum::<f64>() / ratios.len() as f64),
                ratios.iter().copied().reduce(f64::max),
            )
        };
        w.serialize(ScatterRow {
            kind: "clip",
            clip_id: &s.clip_id,
            n_frames: s.n_frames,
            frame: None,
            area_ratio: None,
            min_ratio: min,
            mean_ratio: mean,
            max_ratio: max,
        })?;
    }
    for s in &stats.scale_series {
        for &(frame, ratio) in &s.points {
            w.serialize(ScatterRow {
                kind: "frame",
                clip_id: &s.clip_id,
                n_frames: s.n_frames,
                frame: Some(frame),
                area_ratio: Some(ratio),
                min_ratio: None,
                mean_ratio: None,
                max_ratio: None,
            })?;
        }
    }
    let body = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    let mut s = String::from_utf8(body).expect("csv output is utf-8");
    if stats.scale_series.is_empty() {
        s = "kind,clip_id,n_frames,frame,area_ratio,min_ratio,mean_ratio,max_ratio\n".into();
    }
    Ok(s)
}
