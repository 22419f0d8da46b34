//! Bootstraps a manifest from an on-disk folder layout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::manifest::{ClipRecord, DatasetManifest, FrameEntry, Split};
use crate::error::{Error, Result};
use crate::mask::io::image_dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `root/<split>/<clip>/{Frame,GT,Instances}/NNNNN.*`
    Msvcod,
    /// `root/<clip>/{Frame,GT}/NNNNN.*`, GT typically sparse.
    MocaMask,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msvcod" => Ok(Layout::Msvcod),
            "moca-mask" => Ok(Layout::MocaMask),
            _ => Err(Error::invalid(format!(
                "unknown layout `{s}` (msvcod, moca-mask)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub manifest: DatasetManifest,
    pub warnings: Vec<String>,
}

const IMAGE_EXTS: &[&str] = &["jpg", "jpeg", "png"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect())
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Image files in `dir` keyed by their numeric stem.
fn numbered_images(dir: &Path) -> Result<BTreeMap<usize, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for p in sorted_entries(dir)? {
        let ext = p
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if !p.is_file() || !IMAGE_EXTS.contains(&ext.as_str()) {
            continue;
        }
        let stem = p.file_stem().unwrap_or_default().to_string_lossy();
        let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
        let index = digits.parse::<usize>().map_err(|_| {
            Error::Manifest(format!("{}: file stem has no frame number", p.display()))
        })?;
        if out.insert(index, p.clone()).is_some() {
            return Err(Error::Manifest(format!(
                "{}: duplicate frame number {index}",
                dir.display()
            )));
        }
    }
    Ok(out)
}

fn find_dir(clip_dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| clip_dir.join(n)).find(|p| p.is_dir())
}

fn scan_clip(root: &Path, clip_dir: &Path, split: Option<Split>) -> Result<Option<ClipRecord>> {
    let rel = |p: &Path| {
        p.strip_prefix(root)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| p.to_path_buf())
    };
    let Some(frame_dir) = find_dir(clip_dir, &["Frame", "Frames", "Imgs", "JPEGImages"]) else {
        return Ok(None);
    };
    let images = numbered_images(&frame_dir)?;
    let gts = match find_dir(clip_dir, &["GT", "Annotations"]) {
        Some(d) => numbered_images(&d)?,
        None => BTreeMap::new(),
    };
    let instances = match find_dir(clip_dir, &["Instances"]) {
        Some(d) => numbered_images(&d)?,
        None => BTreeMap::new(),
    };
    let clip_id = file_name(clip_dir);
    for (idx, path) in gts.iter().chain(&instances) {
        if !images.contains_key(idx) {
            return Err(Error::Manifest(format!(
                "clip `{clip_id}`: {} has no frame image",
                path.display()
            )));
        }
    }
    let Some(first) = images.values().next() else {
        return Err(Error::Manifest(format!(
            "clip `{clip_id}`: no frame images"
        )));
    };
    let (width, height) = image_dims(first)?;
    let frames = images
        .iter()
        .map(|(&index, image)| FrameEntry {
            index,
            image: rel(image),
            gt: gts.get(&index).map(|p| rel(p)),
            instances: instances.get(&index).map(|p| rel(p)),
        })
        .collect();
    Ok(Some(ClipRecord {
        clip_id,
        scenario: None,
        category: None,
        motion: None,
        split,
        fps: None,
        width,
        height,
        frames,
    }))
}

/// Builds a manifest from `root`. Metadata that folders do not encode
/// (scenario, category, motion, fps) is left unset.
pub fn scan_directory(root: &Path, layout: Layout) -> Result<ScanOutcome> {
    let mut warnings = Vec::new();
    let mut clips = Vec::new();
    let visit = |clip_dir: &Path,
                 split,
                 clips: &mut Vec<ClipRecord>,
                 warnings: &mut Vec<String>|
     -> Result<()> {
        match scan_clip(root, clip_dir, split)? {
            Some(c) => clips.push(c),
            None => warnings.push(format!(
                "{}: no frame directory, skipped",
                clip_dir.display()
            )),
        }
        Ok(())
    };
    match layout {
        Layout::Msvcod => {
            for split_dir in subdirs(root)? {
                let name = file_name(&split_dir);
                let split = match name.to_ascii_lowercase().as_str() {
                    "train" | "trainset" | "traindataset" => Split::Train,
                    "test" | "testset" | "testdataset" => Split::Test,
                    _ => {
                        warnings.push(format!(
                            "{}: not a split directory, skipped",
                            split_dir.display()
                        ));
                        continue;
                    }
                };
                for clip_dir in subdirs(&split_dir)? {
                    visit(&clip_dir, Some(split), &mut clips, &mut warnings)?;
                }
            }
        }
        Layout::MocaMask => {
            for clip_dir in subdirs(root)? {
                visit(&clip_dir, None, &mut clips, &mut warnings)?;
            }
        }
    }
    clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    if clips.is_empty() {
        warnings.push(format!("{}: no clips found", root.display()));
    }
    let name = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".into());
    let manifest = DatasetManifest::new(name, root, clips);
    manifest.check_structure()?;
    Ok(ScanOutcome { manifest, warnings })
}
