use std::path::Path;

use vcod_core::dataset::{load_frame_mask, DatasetManifest};
use vcod_core::mask::io::{load_gray, save_gray, save_mask};
use vcod_core::mask::{BinaryMask, GrayFrame};
use vcod_core::metrics::{eval_frame, FrameScores, MetricConfig};
use vcod_core::report::{
    emit, emit_scale_scatter, eval_clip, eval_dataset, parse_csv, parse_json, prediction_path,
    Aggregation, EvalOptions, Format, Grouping,
};
use vcod_core::synth::{self, SynthConfig, SynthDataset};
use vcod_core::{Error, Exec};

fn fixture(dir: &Path, cfg: &SynthConfig) -> SynthDataset {
    synth::generate(&dir.join("data"), cfg).unwrap()
}

fn all_splits() -> EvalOptions {
    EvalOptions {
        split: None,
        ..EvalOptions::default()
    }
}

fn copy_gt_as_predictions(m: &DatasetManifest, preds: &Path) {
    for clip in &m.clips {
        for f in clip.annotated_frames() {
            save_mask(
                &load_frame_mask(m, f).unwrap(),
                &prediction_path(preds, clip, f),
            )
            .unwrap();
        }
    }
}

#[test]
fn perfect_predictions_score_perfectly_in_every_group() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture(dir.path(), &SynthConfig::default());
    let preds = dir.path().join("preds");
    copy_gt_as_predictions(&ds.manifest, &preds);
    let eval = eval_dataset(&ds.manifest, &preds, Grouping::ALL, &all_splits()).unwrap();
    for g in &eval.groups {
        let s = g.scores;
        // A square near a frame edge can leave a few pixels in one quadrant,
        // where the region epsilon costs about 1e-9.
        assert!((s.s_alpha - 1.0).abs() < 1e-8, "{}: {s:?}", g.row_label());
        assert!((s.f_beta_w - 1.0).abs() < 1e-9);
        assert_eq!((s.mae, s.dice, s.iou), (0.0, 1.0, 1.0));
    }
    let md = emit(&eval.table(), Format::Markdown).unwrap();
    let n = ds.manifest.clips.len();
    assert!(
        md.contains(&format!(
            "all | {n} | 1.000 | 1.000 | 0.000 | 1.000 | 1.000"
        )),
        "{md}"
    );
}

#[test]
fn clip_mean_is_mean_of_independent_frame_scores() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture(dir.path(), &SynthConfig::default());
    let preds = dir.path().join("preds");
    synth::write_predictions(&ds.manifest, &preds, 3, 0.5).unwrap();
    let cfg = MetricConfig::default();
    for clip in &ds.manifest.clips {
        let eval = eval_clip(&ds.manifest, clip, &preds, &all_splits()).unwrap();
        let frames: Vec<FrameScores> = clip
            .annotated_frames()
            .map(|f| {
                let pred = load_gray(&prediction_path(&preds, clip, f)).unwrap();
                eval_frame(&pred, &load_frame_mask(&ds.manifest, f).unwrap(), &cfg).unwrap()
            })
            .collect();
        let n = frames.len() as f64;
        let got = eval.scores.as_array();
        for (m, g) in got.iter().enumerate() {
            let mean = frames.iter().map(|s| s.as_array()[m]).sum::<f64>() / n;
            assert!((mean - g).abs() <= 1e-12);
        }
        assert_eq!(eval.n_frames(), frames.len());
    }
}

#[test]
fn two_frames_with_dice_one_and_zero_average_to_half() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        clips: 1,
        frames: (2, 3),
        ..SynthConfig::default()
    };
    let ds = fixture(dir.path(), &cfg);
    let clip = &ds.manifest.clips[0];
    let preds = dir.path().join("preds");
    let frames: Vec<_> = clip.annotated_frames().collect();
    assert_eq!(frames.len(), 2);
    let gt0 = load_frame_mask(&ds.manifest, frames[0]).unwrap();
    save_mask(&gt0, &prediction_path(&preds, clip, frames[0])).unwrap();
    let gt1 = load_frame_mask(&ds.manifest, frames[1]).unwrap();
    save_mask(&gt1.not(), &prediction_path(&preds, clip, frames[1])).unwrap();
    let eval = eval_clip(&ds.manifest, clip, &preds, &all_splits()).unwrap();
    assert_eq!(eval.scores.dice, 0.5);
    assert_eq!(eval.scores.iou, 0.5);
}

#[test]
fn single_clip_all_group_equals_clip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture(
        dir.path(),
        &SynthConfig {
            clips: 1,
            ..SynthConfig::default()
        },
    );
    let preds = dir.path().join("preds");
    synth::write_predictions(&ds.manifest, &preds, 1, 0.4).unwrap();
    let eval = eval_dataset(&ds.manifest, &preds, &[Grouping::All], &all_splits()).unwrap();
    assert_eq!(eval.groups.len(), 1);
    assert_eq!(eval.groups[0].scores, eval.clips[0].scores);
    assert_eq!(eval.groups[0].clips, 1);
}

#[test]
fn default_options_evaluate_only_the_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture(dir.path(), &SynthConfig::default());
    let preds = dir.path().join("preds");
    synth::write_predictions(&ds.manifest, &preds, 2, 0.7).unwrap();
    let eval = eval_dataset(&ds.manifest, &preds, Grouping::ALL, &EvalOptions::default()).unwrap();
    let test_clips: Vec<&str> = ds
        .manifest
        .clips
        .iter()
        .filter(|c| c.split == Some(vcod_core::dataset::Split::Test))
        .map(|c| c.clip_id.as_str())
        .collect();
    let got: Vec<&str> = eval.clips.iter().map(|c| c.clip_id.as_str()).collect();
    assert_eq!(got, test_clips);
}

#[test]
fn missing_predictions_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture(dir.path(), &SynthConfig::default());
    let preds = dir.path().join("preds");
    synth::write_predictions(&ds.manifest, &preds, 4, 0.5).unwrap();
    let clip = &ds.manifest.clips[0];
    let victim = clip.annotated_frames().nth(1).unwrap();
    std::fs::remove_file(prediction_path(&preds, clip, victim)).unwrap();

    match eval_dataset(&ds.manifest, &preds, Grouping::ALL, &all_splits()) {
        Err(Error::MissingPredictions { clip_id, frames }) => {
            assert_eq!(clip_id, clip.clip_id);
            assert_eq!(frames, vec![victim.index]);
        }
        other => panic!("expected missing-prediction error, got {other:?}"),
    }

    let lenient = EvalOptions {
        strict: false,
        ..all_splits()
    };
    let eval = eval_dataset(&ds.manifest, &preds, Grouping::ALL, &lenient).unwrap();
    assert!(eval.notes.iter().any(|n| n.contains(&clip.clip_id)));
    assert_eq!(
        eval.clips[0].n_frames(),
        clip.annotated_frames().count() - 1
    );
}

#[test]
fn frame_weighted_pools_all_frames() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture(dir.path(), &SynthConfig::default());
    let preds = dir.path().join("preds");
    synth::write_predictions(&ds.manifest, &preds, 8, 0.3).unwrap();
    let fw = EvalOptions {
        aggregation: Aggregation::FrameWeighted,
        ..all_splits()
    };
    let eval = eval_dataset(&ds.manifest, &preds, &[Grouping::All], &fw).unwrap();
    let all: Vec<&FrameScores> = eval
        .clips
        .iter()
        .flat_map(|c| c.frames.iter().map(|(_, s)| s))
        .collect();
    let mean = all.iter().map(|s| s.mae).sum::<f64>() / all.len() as f64;
    assert!((eval.groups[0].scores.mae - mean).abs() <= 1e-12);
    assert_eq!(eval.groups[0].frames, all.len());
    assert!(emit(&eval.table(), Format::Csv)
        .unwrap()
        .starts_with("# aggregation: frame-weighted"));
}

#[test]
fn csv_and_json_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture(dir.path(), &SynthConfig::default());
    let preds = dir.path().join("preds");
    synth::write_predictions(&ds.manifest, &preds, 6, 0.55).unwrap();
    let table = eval_dataset(&ds.manifest, &preds, Grouping::ALL, &all_splits())
        .unwrap()
        .table();
    let from_csv = parse_csv(&emit(&table, Format::Csv).unwrap()).unwrap();
    let from_json = parse_json(&emit(&table, Format::Json).unwrap()).unwrap();
    assert_eq!(from_csv.rows, table.rows);
    assert_eq!(from_json.rows, table.rows);
    assert_eq!(from_csv.aggregation, table.aggregation);
}

#[test]
fn grayscale_predictions_are_read_at_eight_bits() {
    let dir = tempfile::tempdir().unwrap();
    let ds = fixture(
        dir.path(),
        &SynthConfig {
            clips: 1,
            ..SynthConfig::default()
        },
    );
    let clip = &ds.manifest.clips[0];
    let preds = dir.path().join("preds");
    for f in clip.annotated_frames() {
        let gt = load_frame_mask(&ds.manifest, f).unwrap();
        let (w, h) = gt.dims();
        save_gray(
            &GrayFrame::filled(w, h, 51.0 / 255.0).unwrap(),
            &prediction_path(&preds, clip, f),
        )
        .unwrap();
    }
    let eval = eval_clip(&ds.manifest, clip, &preds, &all_splits()).unwrap();
    let expect: f64 = clip
        .annotated_frames()
        .map(|f| {
            let gt: BinaryMask = load_frame_mask(&ds.manifest, f).unwrap();
            let fg = gt.area_ratio();
            fg * (1.0 - 0.2) + (1.0 - fg) * 0.2
        })
        .sum::<f64>()
        / clip.annotated_frames().count() as f64;
    assert!((eval.scores.mae - expect).abs() <= 1e-12);
}

#[test]
fn scale_scatter_matches_pixel_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::default();
    let ds = fixture(dir.path(), &cfg);
    let stats = vcod_core::dataset::compute_stats(&ds.manifest, Exec::Sequential);
    let doc = emit_scale_scatter(&stats).unwrap();
    let mut reader = csv::ReaderBuilder::new().from_reader(doc.as_bytes());
    let area = (cfg.width * cfg.height) as f64;
    let mut frames = 0;
    for row in reader.records() {
        let row = row.unwrap();
        if &row[0] != "frame" {
            continue;
        }
        let (clip, frame): (&str, usize) = (&row[1], row[3].parse().unwrap());
        let px = ds
            .truth
            .areas
            .iter()
            .find(|(c, f, _)| c == clip && *f == frame)
            .unwrap()
            .2;
        assert_eq!(row[4].parse::<f64>().unwrap(), px as f64 / area);
        frames += 1;
    }
    assert_eq!(frames, ds.truth.areas.len());
}
