use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

macro_rules! label_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Manifest(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), s
                    )))
            }
        }
    };
}

label_enum!(Scenario {
    Aquatic => "Aquatic",
    Artificial => "Artificial",
    Desert => "Desert",
    Field => "Field",
    Jungle => "Jungle",
    Medical => "Medical",
    Snowfield => "Snowfield",
});

label_enum!(Category {
    Animal => "Animal",
    Human => "Human",
    Medical => "Medical",
    Vehicle => "Vehicle",
});

label_enum!(
    /// Which of camera and object move in the clip.
    Motion {
        ObjectMotion => "ObjectMotion",
        CameraMotion => "CameraMotion",
        SimultaneousMotion => "SimultaneousMotion",
    }
);

label_enum!(Split {
    Train => "Train",
    Test => "Test",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<PathBuf>,
}

impl FrameEntry {
    pub fn is_annotated(&self) -> bool {
        self.gt.is_some() || self.instances.is_some()
    }

    /// File stem used to pair the frame with prediction maps.
    pub fn stem(&self) -> String {
        self.image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("{:05}", self.index))
    }
}

/// Clip metadata. Fields a directory scan cannot infer stay `None` until
/// patched; validation reports them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub scenario: Option<Scenario>,
    pub category: Option<Category>,
    pub motion: Option<Motion>,
    pub split: Option<Split>,
    pub fps: Option<u32>,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameEntry>,
}

impl ClipRecord {
    pub fn annotated_frames(&self) -> impl Iterator<Item = &FrameEntry> {
        self.frames.iter().filter(|f| f.is_annotated())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default = "default_version")]
    pub version: u32,
    /// Dataset root; taken from the manifest location, never serialized.
    #[serde(skip)]
    pub root: PathBuf,
    pub clips: Vec<ClipRecord>,
}

fn default_version() -> u32 {
    MANIFEST_VERSION
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>, clips: Vec<ClipRecord>) -> Self {
        Self {
            name: name.into(),
            version: MANIFEST_VERSION,
            root: root.into(),
            clips,
        }
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn clip(&self, clip_id: &str) -> Option<&ClipRecord> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }

    /// Structural defects that make a manifest unusable: duplicate ids,
    /// non-increasing frame indices, and image files shared across splits.
    pub fn structure_problems(&self) -> Vec<StructureProblem> {
        let mut problems = Vec::new();
        let mut ids = BTreeSet::new();
        for clip in &self.clips {
            if !ids.insert(clip.clip_id.as_str()) {
                problems.push(StructureProblem::DuplicateClip(clip.clip_id.clone()));
            }
            if let Some(w) = clip.frames.windows(2).find(|w| w[1].index <= w[0].index) {
                problems.push(StructureProblem::FrameOrder {
                    clip_id: clip.clip_id.clone(),
                    index: w[1].index,
                });
            }
        }
        let mut owner: BTreeMap<&Path, (Split, &str)> = BTreeMap::new();
        for clip in &self.clips {
            let Some(split) = clip.split else { continue };
            for f in &clip.frames {
                match owner.get(f.image.as_path()) {
                    Some(&(other, other_id)) if other != split => {
                        problems.push(StructureProblem::SplitOverlap {
                            image: f.image.clone(),
                            clips: (other_id.to_string(), clip.clip_id.clone()),
                        });
                    }
                    Some(_) => {}
                    None => {
                        owner.insert(&f.image, (split, &clip.clip_id));
                    }
                }
            }
        }
        problems
    }

    pub fn check_structure(&self) -> Result<()> {
        match self.structure_problems().into_iter().next() {
            Some(p) => Err(Error::Manifest(p.to_string())),
            None => Ok(()),
        }
    }

    pub fn from_json(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut m: DatasetManifest = serde_json::from_str(text)?;
        m.root = root.into();
        m.check_structure()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureProblem {
    DuplicateClip(String),
    FrameOrder {
        clip_id: String,
        index: usize,
    },
    SplitOverlap {
        image: PathBuf,
        clips: (String, String),
    },
}

impl fmt::Display for StructureProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureProblem::DuplicateClip(id) => write!(f, "duplicate clip_id `{id}`"),
            StructureProblem::FrameOrder { clip_id, index } => {
                write!(f, "clip `{clip_id}`: frame index {index} does not increase")
            }
            StructureProblem::SplitOverlap { image, clips } => write!(
                f,
                "split overlap: `{}` appears in train/test clips `{}` and `{}`",
                image.display(),
                clips.0,
                clips.1
            ),
        }
    }
}

/// Reads a manifest; relative paths resolve against its directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::from_json(&text, root)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    crate::mask::io::write_atomic(path, manifest.to_json()?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "mini",
        "version": 1,
        "clips": [{
            "clip_id": "a", "scenario": "Field", "category": "Animal",
            "motion": "ObjectMotion", "split": "Train", "fps": 6,
            "width": 4, "height": 4,
            "frames": [
                {"index": 0, "image": "a/0.jpg", "gt": "a/0.png"},
                {"index": 1, "image": "a/1.jpg"}
            ]
        }]
    }"#;

    #[test]
    fn minimal_manifest() {
        let m = DatasetManifest::from_json(MINIMAL, "/data").unwrap();
        assert_eq!(m.clips.len(), 1);
        assert_eq!(m.clips[0].annotated_frames().count(), 1);
        assert_eq!(
            m.resolve(Path::new("a/0.png")),
            PathBuf::from("/data/a/0.png")
        );
    }

    #[test]
    fn duplicate_clip_id_is_named() {
        let mut m = DatasetManifest::from_json(MINIMAL, "").unwrap();
        m.clips.push(m.clips[0].clone());
        let err = DatasetManifest::from_json(&m.to_json().unwrap(), "").unwrap_err();
        assert!(err.to_string().contains("duplicate clip_id `a`"), "{err}");
    }

    #[test]
    fn split_overlap_detected() {
        let mut m = DatasetManifest::from_json(MINIMAL, "").unwrap();
        let mut other = m.clips[0].clone();
        other.clip_id = "b".into();
        other.split = Some(Split::Test);
        m.clips.push(other);
        assert!(m
            .check_structure()
            .unwrap_err()
            .to_string()
            .contains("split overlap"));
    }

    #[test]
    fn frame_indices_must_increase() {
        let mut m = DatasetManifest::from_json(MINIMAL, "").unwrap();
        m.clips[0].frames[1].index = 0;
        assert!(m.check_structure().is_err());
    }

    #[test]
    fn parse_errors_surface() {
        assert!(matches!(
            DatasetManifest::from_json("{", ""),
            Err(Error::Json(_))
        ));
        let bad = MINIMAL.replace("\"Field\"", "\"Tundra\"");
        assert!(DatasetManifest::from_json(&bad, "").is_err());
    }

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!(
            "snowfield".parse::<Scenario>().unwrap(),
            Scenario::Snowfield
        );
        assert_eq!(
            "CameraMotion".parse::<Motion>().unwrap(),
            Motion::CameraMotion
        );
        assert!("Boat".parse::<Category>().is_err());
    }
}
