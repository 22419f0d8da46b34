use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;
use vcod_core::dataset::{
    compute_stats, load_frame_mask, load_manifest, scan_directory, validate_dataset,
    DatasetManifest, Split,
};
use vcod_core::fusion::{
    apply_corrections, run_pipeline, ClipFrame, CorrectionRound, FusionClip, PipelineConfig,
    PipelineOutput, Propagator, StaticPropagator, SubprocessPropagator, TransformPropagator,
};
use vcod_core::mask::io::{save_mask, write_atomic};
use vcod_core::mask::BinaryMask;
use vcod_core::metrics::MetricConfig;
use vcod_core::report::{
    emit, emit_scale_scatter, eval_dataset, Aggregation, EvalOptions, Format, Grouping,
};
use vcod_core::Exec;

use crate::{
    Command, EvalArgs, Failure, FormatArg, FuseArgs, Input, MakeManifestArgs, ScatterArgs,
    SplitArg, StatsArgs, ValidateArgs,
};

type Outcome = Result<(), Failure>;

pub(crate) fn run(command: Command) -> Outcome {
    match command {
        Command::Validate(a) => validate(a),
        Command::Stats(a) => stats(a),
        Command::Eval(a) => eval(a),
        Command::Fuse(a) => fuse(a),
        Command::ReportScatter(a) => scatter(a),
        Command::MakeManifest(a) => make_manifest(a),
    }
}

fn require_dir(path: &Path, what: &str) -> Outcome {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{what} {} is not a directory",
            path.display()
        )))
    }
}

fn load(input: &Input) -> Result<DatasetManifest, Failure> {
    if !input.manifest.is_file() {
        return Err(Failure::Usage(format!(
            "manifest {} is not a readable file",
            input.manifest.display()
        )));
    }
    let mut manifest = load_manifest(&input.manifest)?;
    if let Some(root) = &input.dataset_root {
        require_dir(root, "dataset root")?;
        manifest.root = root.clone();
    }
    Ok(manifest)
}

fn write_out(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => Ok(write_atomic(path, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Validation and statistics documents come in JSON or markdown only.
fn doc_format(f: FormatArg) -> Result<Format, Failure> {
    match f {
        FormatArg::Csv => Err(Failure::Usage(
            "this subcommand writes json or md, not csv".into(),
        )),
        other => Ok(other.into()),
    }
}

fn validate(a: ValidateArgs) -> Outcome {
    let format = doc_format(a.format)?;
    let manifest = load(&a.input)?;
    let report = validate_dataset(&manifest, Exec::default());
    let text = match format {
        Format::Json => report.to_json(),
        _ => report.to_markdown(),
    };
    write_out(a.output.out.as_deref(), &text)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if report.is_clean() {
        return Ok(());
    }
    let summary = format!("{} guideline violation(s)", report.violations.len());
    if a.mode.strict() {
        Err(Failure::Failed(summary))
    } else {
        log::warn!("{summary}");
        Ok(())
    }
}

fn stats(a: StatsArgs) -> Outcome {
    let format = doc_format(a.format)?;
    let manifest = load(&a.input)?;
    let stats = compute_stats(&manifest, Exec::default());
    for f in &stats.flags {
        log::warn!("{f}");
    }
    let text = match format {
        Format::Json => stats.to_json(),
        _ => stats.to_markdown(),
    };
    write_out(a.output.out.as_deref(), &text)
}

fn eval(a: EvalArgs) -> Outcome {
    let manifest = load(&a.input)?;
    require_dir(&a.pred_root, "prediction root")?;
    let defaults = MetricConfig::default();
    let cfg = MetricConfig {
        alpha: a.alpha.unwrap_or(defaults.alpha),
        beta_sq: a.beta_sq.unwrap_or(defaults.beta_sq),
        binarize: a.binarize,
        ..defaults
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let opts = EvalOptions {
        cfg,
        strict: a.mode.strict(),
        exclude_empty_gt: a.exclude_empty_gt,
        aggregation: if a.frame_weighted {
            Aggregation::FrameWeighted
        } else {
            Aggregation::ClipMean
        },
        split: match a.split {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        },
        exec: Exec::default(),
    };
    let groups = if a.groups.is_empty() {
        Grouping::ALL.to_vec()
    } else {
        a.groups
    };
    let result = eval_dataset(&manifest, &a.pred_root, &groups, &opts)?;
    for n in &result.notes {
        log::info!("{n}");
    }
    write_out(
        a.output.out.as_deref(),
        &emit(&result.table(), a.format.into())?,
    )
}

fn propagator(a: &FuseArgs) -> Result<Box<dyn Propagator>, Failure> {
    let spec = a.propagator.as_str();
    if spec == "static" {
        return Ok(Box::new(StaticPropagator));
    }
    if let Some(path) = spec.strip_prefix("transform:") {
        let path = Path::new(path);
        if !path.is_file() {
            return Err(Failure::Usage(format!(
                "transform fixture {} not found",
                path.display()
            )));
        }
        return Ok(Box::new(TransformPropagator::from_fixture(path)?));
    }
    if let Some(program) = spec.strip_prefix("exec:") {
        let mut p = SubprocessPropagator::new(program);
        p.args = a.propagator_args.clone();
        p.single_threaded = a.serial_propagator;
        return Ok(Box::new(p));
    }
    Err(Failure::Usage(format!(
        "unknown propagator `{spec}` (static, transform:<fixture>, exec:<program>)"
    )))
}

fn fuse(a: FuseArgs) -> Outcome {
    let manifest = load(&a.input)?;
    let clip = manifest
        .clip(&a.clip)
        .ok_or_else(|| Failure::Usage(format!("clip `{}` is not in the manifest", a.clip)))?;
    let prop = propagator(&a)?;
    let cfg = PipelineConfig {
        flag_threshold: a.flag_threshold,
        cadence: a.cadence.or(clip.fps.map(|f| f as usize)).unwrap_or(6),
        tolerance: a.tolerance,
        exec: Exec::default(),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    for path in &a.corrections {
        if !path.is_file() {
            return Err(Failure::Usage(format!(
                "correction file {} not found",
                path.display()
            )));
        }
    }

    let fusion_clip = FusionClip {
        clip_id: clip.clip_id.clone(),
        width: clip.width,
        height: clip.height,
        frames: clip
            .frames
            .iter()
            .map(|f| ClipFrame {
                index: f.index,
                image: manifest.resolve(&f.image),
            })
            .collect(),
    };
    let anchors = clip
        .annotated_frames()
        .map(|f| Ok((f.index, load_frame_mask(&manifest, f)?)))
        .collect::<Result<BTreeMap<usize, BinaryMask>, vcod_core::Error>>()?;

    let mut output = run_pipeline(&fusion_clip, prop.as_ref(), &anchors, &cfg)?;
    for path in &a.corrections {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Failed(format!("{}: {e}", path.display())))?;
        let round = CorrectionRound::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        output = apply_corrections(&output, &round, base)?;
    }
    write_fusion(&a.out, &output, &cfg)?;
    log::info!(
        "clip {}: round {}, {} frame(s) flagged",
        output.clip_id,
        output.round.round,
        output.round.flagged.len()
    );
    Ok(())
}

/// `masks/NNNNN.png`, `polygons/NNNNN.json`, `round-<n>.json` and
/// `summary.json` under `dir`.
fn write_fusion(dir: &Path, output: &PipelineOutput, cfg: &PipelineConfig) -> Outcome {
    for f in &output.frames {
        if let Some(mask) = &f.mask {
            save_mask(mask, &dir.join("masks").join(format!("{:05}.png", f.index)))?;
        }
    }
    for p in output.polygon_exports() {
        let path = dir.join("polygons").join(format!("{:05}.json", p.frame));
        write_atomic(&path, p.to_json().as_bytes())?;
    }
    let round = &output.round;
    write_atomic(
        &dir.join(format!("round-{}.json", round.round)),
        round.to_json().as_bytes(),
    )?;
    let frames: Vec<_> = output
        .frames
        .iter()
        .map(|f| {
            json!({
                "index": f.index,
                "source": f.source,
                "consistency": f.candidates.as_ref().map(|c| c.consistency),
                "ranking": f.ranking,
                "flags": f.flags,
            })
        })
        .collect();
    let summary = json!({
        "clip_id": output.clip_id,
        "round": round.round,
        "cadence": cfg.cadence,
        "flag_threshold": cfg.flag_threshold,
        "tolerance": cfg.tolerance,
        "flagged": round.flagged,
        "notes": output.notes,
        "frames": frames,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    Ok(write_atomic(&dir.join("summary.json"), text.as_bytes())?)
}

fn scatter(a: ScatterArgs) -> Outcome {
    let manifest = load(&a.input)?;
    let stats = compute_stats(&manifest, Exec::default());
    for f in &stats.flags {
        log::warn!("{f}");
    }
    write_out(a.output.out.as_deref(), &emit_scale_scatter(&stats)?)
}

fn make_manifest(a: MakeManifestArgs) -> Outcome {
    require_dir(&a.dataset_root, "dataset root")?;
    let outcome = scan_directory(&a.dataset_root, a.layout.into())?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    let mut manifest = outcome.manifest;
    if let Some(name) = a.name {
        manifest.name = name;
    }
    log::info!(
        "{} clips; scenario, category, motion and fps must be filled in before validation",
        manifest.clips.len()
    );
    write_out(a.output.out.as_deref(), &manifest.to_json()?)
}
