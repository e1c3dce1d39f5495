//! Corpus layout: manifests, labels, frame directories and the synthetic
//! desk-scale corpus generator.

mod frames;
mod manifest;
mod synthetic;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use frames::{
    list_frame_files, load_frames, load_frames_sampled, read_png, sample_indices, write_png,
    FrameSequence,
};
pub use manifest::{check_disjoint, load_manifest, parse_manifest, write_manifest, Manifest};
pub use synthetic::{make_synthetic_corpus, SyntheticConfig, MANIFEST_FILE};

/// Default upper bound on frames taken from one video.
pub const DEFAULT_MAX_FRAMES: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate video id `{0}`")]
    DuplicateId(String),
    #[error("video id `{id}` appears in both {first} and {second} splits")]
    SplitLeak {
        id: String,
        first: Split,
        second: Split,
    },
    #[error("video `{id}`: manifest says {expected} frames, found {found} on disk")]
    FrameCountMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: frame is {found:?}, sequence is {expected:?} (width, height)")]
    InconsistentDimensions {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("no frames in {0}")]
    EmptySequence(PathBuf),
    #[error("invalid synthetic corpus config: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// Ground-truth class. Real is the negative class (0), Fake the positive (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    /// Regression target for the classifier, P(Fake).
    pub fn target(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "real" | "0" => Ok(Label::Real),
            "fake" | "1" => Ok(Label::Fake),
            other => Err(format!("unknown label `{other}` (expected real|fake)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train|val|test)")),
        }
    }
}

/// One manifest record. `frame_dir` is resolved against the manifest's
/// directory at load time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub frame_dir: PathBuf,
    pub label: Label,
    pub source_tag: String,
    pub frame_count: usize,
    pub split: Split,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trips_through_text() {
        for l in [Label::Real, Label::Fake] {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
        assert!("maybe".parse::<Label>().is_err());
        assert_eq!(Label::Fake.target(), 1.0);
    }

    #[test]
    fn split_parses_aliases() {
        assert_eq!("validation".parse::<Split>().unwrap(), Split::Val);
        assert!("holdout".parse::<Split>().is_err());
    }
}
