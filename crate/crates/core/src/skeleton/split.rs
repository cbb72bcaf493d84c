//! Train/test evaluation protocols expressed as explicit ID lists.

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, ManifestEntry, SkeletonSequence};
use crate::error::{Error, Result};

/// Subjects used for training in every MSR Action3D subset.
pub const MSR_TRAIN_SUBJECTS: [u32; 5] = [1, 3, 5, 7, 9];
pub const MSR_TEST_SUBJECTS: [u32; 5] = [2, 4, 6, 8, 10];

/// MSR Action3D action subsets (1-based action ids).
pub const MSR_AS1: [usize; 8] = [2, 3, 5, 6, 10, 13, 18, 20];
pub const MSR_AS2: [usize; 8] = [1, 4, 7, 8, 9, 11, 12, 14];
pub const MSR_AS3: [usize; 8] = [6, 14, 15, 16, 17, 18, 19, 20];

/// NTU RGB+D cross-subject training performers.
pub const NTU_XSUB_TRAIN: [u32; 20] = [
    1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38,
];

/// Conjunction of optional ID lists; `None` accepts anything.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IdFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjects: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<Vec<u32>>,
}

impl IdFilter {
    pub fn accepts(&self, label: usize, subject: u32, camera: u32) -> bool {
        self.labels.as_ref().map_or(true, |l| l.contains(&label))
            && self.subjects.as_ref().map_or(true, |s| s.contains(&subject))
            && self.cameras.as_ref().map_or(true, |c| c.contains(&camera))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub train: IdFilter,
    pub test: IdFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Train,
    Test,
}

impl SplitSpec {
    fn msr_subset(name: &str, actions: &[usize]) -> Self {
        let labels: Vec<usize> = actions.iter().map(|a| a - 1).collect();
        SplitSpec {
            name: name.to_string(),
            train: IdFilter {
                labels: Some(labels.clone()),
                subjects: Some(MSR_TRAIN_SUBJECTS.to_vec()),
                cameras: None,
            },
            test: IdFilter {
                labels: Some(labels),
                subjects: Some(MSR_TEST_SUBJECTS.to_vec()),
                cameras: None,
            },
        }
    }

    pub fn msr_as1() -> Self {
        Self::msr_subset("msr-as1", &MSR_AS1)
    }

    pub fn msr_as2() -> Self {
        Self::msr_subset("msr-as2", &MSR_AS2)
    }

    pub fn msr_as3() -> Self {
        Self::msr_subset("msr-as3", &MSR_AS3)
    }

    pub fn ntu_cross_subject() -> Self {
        let test: Vec<u32> = (1..=40).filter(|s| !NTU_XSUB_TRAIN.contains(s)).collect();
        SplitSpec {
            name: "ntu-xsub".into(),
            train: IdFilter {
                subjects: Some(NTU_XSUB_TRAIN.to_vec()),
                ..Default::default()
            },
            test: IdFilter {
                subjects: Some(test),
                ..Default::default()
            },
        }
    }

    pub fn ntu_cross_view() -> Self {
        SplitSpec {
            name: "ntu-xview".into(),
            train: IdFilter {
                cameras: Some(vec![2, 3]),
                ..Default::default()
            },
            test: IdFilter {
                cameras: Some(vec![1]),
                ..Default::default()
            },
        }
    }

    /// Train on odd subjects, test on even ones, all classes. Used for
    /// canonical/synthetic corpora.
    pub fn odd_even_subjects() -> Self {
        SplitSpec {
            name: "odd-even".into(),
            train: IdFilter {
                subjects: Some((0..1000).filter(|s| s % 2 == 1).collect()),
                ..Default::default()
            },
            test: IdFilter {
                subjects: Some((0..1000).filter(|s| s % 2 == 0).collect()),
                ..Default::default()
            },
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["msr-as1", "msr-as2", "msr-as3", "ntu-xsub", "ntu-xview", "odd-even"]
    }

    pub fn builtin(name: &str) -> Option<Self> {
        Some(match name {
            "msr-as1" => Self::msr_as1(),
            "msr-as2" => Self::msr_as2(),
            "msr-as3" => Self::msr_as3(),
            "ntu-xsub" => Self::ntu_cross_subject(),
            "ntu-xview" => Self::ntu_cross_view(),
            "odd-even" => Self::odd_even_subjects(),
            _ => return None,
        })
    }

    /// Resolves a built-in name or a path to a JSON split file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(s) = Self::builtin(name_or_path) {
            return Ok(s);
        }
        let path = std::path::Path::new(name_or_path);
        if path.is_file() {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            return serde_json::from_slice(&bytes)
                .map_err(|e| Error::Config(format!("invalid split file {name_or_path}: {e}")));
        }
        Err(Error::Config(format!(
            "unknown split {name_or_path:?} (built-ins: {})",
            Self::builtin_names().join(", ")
        )))
    }

    /// Where an item lands; `None` means excluded. An item accepted by both
    /// filters is a configuration error.
    pub fn assign(&self, label: usize, subject: u32, camera: u32) -> Result<Option<Side>> {
        let tr = self.train.accepts(label, subject, camera);
        let te = self.test.accepts(label, subject, camera);
        match (tr, te) {
            (true, true) => Err(Error::Config(format!(
                "split {}: label {label} subject {subject} camera {camera} matches both train and test",
                self.name
            ))),
            (true, false) => Ok(Some(Side::Train)),
            (false, true) => Ok(Some(Side::Test)),
            (false, false) => Ok(None),
        }
    }

    /// Class labels used by this split, sorted; `None` when unrestricted.
    pub fn labels(&self) -> Option<Vec<usize>> {
        let mut all: Vec<usize> = self
            .train
            .labels
            .iter()
            .chain(self.test.labels.iter())
            .flatten()
            .copied()
            .collect();
        if self.train.labels.is_none() || self.test.labels.is_none() {
            return None;
        }
        all.sort_unstable();
        all.dedup();
        Some(all)
    }
}

fn partition<T: Clone>(
    items: &[T],
    spec: &SplitSpec,
    key: impl Fn(&T) -> (usize, u32, u32),
) -> Result<(Vec<T>, Vec<T>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for it in items {
        let (l, s, c) = key(it);
        match spec.assign(l, s, c)? {
            Some(Side::Train) => train.push(it.clone()),
            Some(Side::Test) => test.push(it.clone()),
            None => {}
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "split {} selects {} training and {} test items; both must be non-empty",
            spec.name,
            train.len(),
            test.len()
        )));
    }
    Ok((train, test))
}

/// Partitions manifest entries into (train, test); unmatched entries are
/// excluded.
pub fn make_split(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>)> {
    partition(&manifest.entries, spec, |e| (e.label, e.subject, e.camera))
}

/// Same as [`make_split`] over already-loaded sequences.
pub fn split_sequences(
    seqs: &[SkeletonSequence],
    spec: &SplitSpec,
) -> Result<(Vec<SkeletonSequence>, Vec<SkeletonSequence>)> {
    partition(seqs, spec, |s| (s.label, s.subject, s.camera))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn entry(i: usize, label: usize, subject: u32, camera: u32) -> ManifestEntry {
        ManifestEntry {
            path: format!("f{i}"),
            label,
            subject,
            camera,
            trial: 1,
        }
    }

    fn manifest(entries: Vec<ManifestEntry>, classes: usize) -> DatasetManifest {
        DatasetManifest::new(entries, (0..classes).map(|c| c.to_string()).collect()).unwrap()
    }

    #[test]
    fn ntu_cross_view_camera_one_is_test() {
        let spec = SplitSpec::ntu_cross_view();
        assert_eq!(spec.assign(5, 3, 1).unwrap(), Some(Side::Test));
        assert_eq!(spec.assign(5, 3, 2).unwrap(), Some(Side::Train));
        assert_eq!(spec.assign(5, 3, 3).unwrap(), Some(Side::Train));
    }

    #[test]
    fn msr_subject_two_is_test_in_every_subset() {
        for spec in [SplitSpec::msr_as1(), SplitSpec::msr_as2(), SplitSpec::msr_as3()] {
            let label = spec.train.labels.as_ref().unwrap()[0];
            assert_eq!(spec.assign(label, 2, 0).unwrap(), Some(Side::Test));
            assert_eq!(spec.assign(label, 1, 0).unwrap(), Some(Side::Train));
        }
    }

    #[test]
    fn msr_subsets_have_eight_classes() {
        for spec in [SplitSpec::msr_as1(), SplitSpec::msr_as2(), SplitSpec::msr_as3()] {
            assert_eq!(spec.labels().unwrap().len(), 8);
        }
        assert!(SplitSpec::ntu_cross_view().labels().is_none());
    }

    #[test]
    fn ntu_cross_subject_partitions_forty_performers() {
        let spec = SplitSpec::ntu_cross_subject();
        let test = spec.test.subjects.as_ref().unwrap();
        assert_eq!(test.len(), 20);
        assert!(test.iter().all(|s| !NTU_XSUB_TRAIN.contains(s)));
    }

    #[test]
    fn empty_selection_is_config_error() {
        let m = manifest(vec![entry(0, 0, 2, 0), entry(1, 0, 4, 0)], 1);
        let err = make_split(&m, &SplitSpec::msr_as2()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn overlapping_filters_rejected() {
        let spec = SplitSpec {
            name: "bad".into(),
            train: IdFilter::default(),
            test: IdFilter::default(),
        };
        let m = manifest(vec![entry(0, 0, 1, 0)], 1);
        assert!(matches!(make_split(&m, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn split_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let spec = SplitSpec::msr_as3();
        std::fs::write(&p, serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(SplitSpec::resolve(p.to_str().unwrap()).unwrap(), spec);
        assert!(matches!(SplitSpec::resolve("nope"), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn builtin_splits_are_disjoint_and_cover(
            rows in prop::collection::vec((0usize..60, 1u32..41, 1u32..4), 1..200),
            which in 0usize..6,
        ) {
            let spec = SplitSpec::builtin(SplitSpec::builtin_names()[which]).unwrap();
            let entries: Vec<_> = rows.iter().enumerate().map(|(i, &(l, s, c))| entry(i, l, s, c)).collect();
            let m = manifest(entries.clone(), 60);
            match make_split(&m, &spec) {
                Ok((train, test)) => {
                    for t in &train {
                        prop_assert!(!test.iter().any(|u| u.path == t.path));
                    }
                    let excluded = entries
                        .iter()
                        .filter(|e| spec.assign(e.label, e.subject, e.camera).unwrap().is_none())
                        .count();
                    prop_assert_eq!(train.len() + test.len() + excluded, entries.len());
                }
                Err(e) => prop_assert!(matches!(e, Error::Config(_))),
            }
        }
    }
}
