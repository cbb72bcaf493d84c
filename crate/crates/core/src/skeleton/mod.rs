//! Skeleton data model, dataset parsers, manifests and evaluation splits.

mod canonical;
mod manifest;
mod msr;
mod ntu;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use canonical::{read_canonical, read_canonical_file, write_canonical, write_canonical_file};
pub use manifest::{load_dataset_dir, load_file, DatasetManifest, LoadedDataset, ManifestEntry, MSR_ACTIONS};
pub use msr::{parse_msr, parse_msr_file_name, MSR_JOINTS};
pub use ntu::{parse_ntu, parse_ntu_file_name, NtuMeta, NTU_JOINTS};
pub use split::{make_split, split_sequences, IdFilter, Side, SplitSpec};
pub use split::{MSR_AS1, MSR_AS2, MSR_AS3, MSR_TEST_SUBJECTS, MSR_TRAIN_SUBJECTS, NTU_XSUB_TRAIN};

/// One 3D joint position with its tracking confidence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub confidence: f64,
}

impl Joint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Joint {
            x,
            y,
            z,
            confidence: 1.0,
        }
    }

    #[inline]
    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && (0.0..=1.0).contains(&self.confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub joints: Vec<Joint>,
    pub body_id: u64,
}

impl Frame {
    pub fn new(joints: Vec<Joint>) -> Self {
        Frame { joints, body_id: 0 }
    }
}

/// An ordered list of skeleton frames with its action label and recording
/// metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkeletonSequence {
    pub frames: Vec<Frame>,
    /// 0-based action class index.
    pub label: usize,
    pub subject: u32,
    /// 0 when the dataset has no camera notion.
    pub camera: u32,
    pub trial: u32,
    pub source_path: String,
}

impl SkeletonSequence {
    pub fn joint_count(&self) -> usize {
        self.frames.first().map_or(0, |f| f.joints.len())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks the structural invariants: at least one frame, a constant
    /// joint count, finite coordinates, confidences in [0,1] and (when given)
    /// `label < class_count`.
    pub fn validate(&self, class_count: Option<usize>) -> Result<()> {
        let bad = |msg: String| Error::Malformed {
            path: self.source_path.clone(),
            msg,
        };
        if self.frames.is_empty() {
            return Err(bad("sequence has no frames".into()));
        }
        let joints = self.joint_count();
        if joints == 0 {
            return Err(bad("frames have no joints".into()));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.joints.len() != joints {
                return Err(bad(format!(
                    "frame {t} has {} joints, expected {joints}",
                    frame.joints.len()
                )));
            }
            if let Some(j) = frame.joints.iter().position(|j| !j.is_valid()) {
                return Err(bad(format!("frame {t} joint {j} is not finite or has confidence outside [0,1]")));
            }
        }
        if let Some(c) = class_count {
            if self.label >= c {
                return Err(bad(format!("label {} out of range for {c} classes", self.label)));
            }
        }
        Ok(())
    }
}

/// Supported on-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Msr,
    Ntu,
    Canonical,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Msr => "msr",
            DatasetKind::Ntu => "ntu",
            DatasetKind::Canonical => "canonical",
        }
    }

    /// Number of action classes, when fixed by the dataset.
    pub fn class_count(&self) -> Option<usize> {
        match self {
            DatasetKind::Msr => Some(20),
            DatasetKind::Ntu => Some(60),
            DatasetKind::Canonical => None,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msr" => Ok(DatasetKind::Msr),
            "ntu" => Ok(DatasetKind::Ntu),
            "canonical" | "json" => Ok(DatasetKind::Canonical),
            other => Err(Error::Config(format!("unknown dataset kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
