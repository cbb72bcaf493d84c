//! Dataset manifests (CSV `path,label,subject,camera,trial`) and directory
//! loading.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{parse_msr, parse_msr_file_name, parse_ntu, parse_ntu_file_name, read_canonical};
use super::{DatasetKind, SkeletonSequence, MSR_JOINTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: usize,
    pub subject: u32,
    pub camera: u32,
    pub trial: u32,
}

impl ManifestEntry {
    pub fn of(seq: &SkeletonSequence) -> Self {
        ManifestEntry {
            path: seq.source_path.clone(),
            label: seq.label,
            subject: seq.subject,
            camera: seq.camera,
            trial: seq.trial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_names: Vec<String>,
}

pub const MSR_ACTIONS: [&str; 20] = [
    "high arm wave",
    "horizontal arm wave",
    "hammer",
    "hand catch",
    "forward punch",
    "high throw",
    "draw x",
    "draw tick",
    "draw circle",
    "hand clap",
    "two hand wave",
    "side-boxing",
    "bend",
    "forward kick",
    "side kick",
    "jogging",
    "tennis swing",
    "tennis serve",
    "golf swing",
    "pickup & throw",
];

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, class_names: Vec<String>) -> Result<Self> {
        let m = DatasetManifest {
            entries,
            class_names,
        };
        m.validate()?;
        Ok(m)
    }

    /// Default class names for a dataset kind; canonical datasets get
    /// `class_<i>` for every label seen.
    pub fn default_class_names(kind: DatasetKind, entries: &[ManifestEntry]) -> Vec<String> {
        match kind {
            DatasetKind::Msr => MSR_ACTIONS.iter().map(|s| s.to_string()).collect(),
            DatasetKind::Ntu => (1..=60).map(|a| format!("A{a:03}")).collect(),
            DatasetKind::Canonical => {
                let c = entries.iter().map(|e| e.label + 1).max().unwrap_or(0);
                (0..c).map(|i| format!("class_{i}")).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.class_names.len();
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.label >= c {
                return Err(Error::Config(format!(
                    "manifest entry {} has label {} but only {c} classes",
                    e.path, e.label
                )));
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Config(format!("duplicate manifest entry {}", e.path)));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_entries_csv(path, &self.entries)
    }

    pub fn read_csv(path: &Path, class_names: Vec<String>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let entries = rdr.deserialize().collect::<Result<Vec<ManifestEntry>, _>>()?;
        DatasetManifest::new(entries, class_names)
    }
}

pub(crate) fn write_entries_csv(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn matches_kind(kind: DatasetKind, name: &str) -> bool {
    match kind {
        DatasetKind::Msr => name.ends_with(".txt") && parse_msr_file_name(name).is_some(),
        DatasetKind::Ntu => name.ends_with(".skeleton") && parse_ntu_file_name(name).is_some(),
        DatasetKind::Canonical => name.ends_with(".json"),
    }
}

/// Parses one dataset file into zero or more sequences.
pub fn load_file(path: &Path, kind: DatasetKind) -> Result<Vec<SkeletonSequence>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.to_string_lossy();
    let seqs = match kind {
        DatasetKind::Msr => vec![parse_msr(&bytes, &name, MSR_JOINTS)?],
        DatasetKind::Ntu => parse_ntu(&bytes, &name)?,
        DatasetKind::Canonical => vec![read_canonical(&bytes, &name)?],
    };
    for s in &seqs {
        s.validate(kind.class_count())?;
    }
    Ok(seqs)
}

/// Sequences parsed from a directory plus the files that failed.
#[derive(Debug, Default)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub sequences: Vec<SkeletonSequence>,
    pub failures: Vec<(PathBuf, Error)>,
}

/// Loads every file of `kind` directly inside `dir` (sorted by name, parsed
/// in parallel). Per-file errors are collected rather than aborting.
pub fn load_dataset_dir(dir: &Path, kind: DatasetKind) -> Result<LoadedDataset> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_file() && matches_kind(kind, &name) {
            files.push(entry.path());
        }
    }
    files.sort();

    let parsed: Vec<(PathBuf, Result<Vec<SkeletonSequence>>)> = files
        .into_par_iter()
        .map(|p| {
            let r = load_file(&p, kind);
            (p, r)
        })
        .collect();

    let mut out = LoadedDataset::default();
    let mut entries = Vec::new();
    for (path, r) in parsed {
        match r {
            Ok(seqs) => {
                if let Some(first) = seqs.first() {
                    entries.push(ManifestEntry::of(first));
                }
                out.sequences.extend(seqs);
            }
            Err(e) => out.failures.push((path, e)),
        }
    }
    let class_names = DatasetManifest::default_class_names(kind, &entries);
    out.manifest = DatasetManifest::new(entries, class_names)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DatasetManifest::new(
            vec![
                ManifestEntry { path: "a".into(), label: 1, subject: 2, camera: 0, trial: 1 },
                ManifestEntry { path: "b".into(), label: 0, subject: 3, camera: 2, trial: 2 },
            ],
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        m.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("path,label,subject,camera,trial\n"));
        let back = DatasetManifest::read_csv(&path, m.class_names.clone()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn duplicate_and_out_of_range_rejected() {
        let e = ManifestEntry { path: "a".into(), label: 0, subject: 1, camera: 0, trial: 1 };
        assert!(DatasetManifest::new(vec![e.clone(), e.clone()], vec!["c".into()]).is_err());
        let bad = ManifestEntry { label: 3, ..e };
        assert!(DatasetManifest::new(vec![bad], vec!["c".into()]).is_err());
    }

    #[test]
    fn directory_load_collects_failures() {
        let dir = tempfile::tempdir().unwrap();
        let good: String = (0..40).map(|_| "0 0 0 1\n").collect();
        std::fs::write(dir.path().join("a01_s01_e01_skeleton.txt"), &good).unwrap();
        std::fs::write(dir.path().join("a02_s02_e01_skeleton.txt"), "0 0 0 1\n").unwrap();
        std::fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let loaded = load_dataset_dir(dir.path(), DatasetKind::Msr).unwrap();
        assert_eq!(loaded.sequences.len(), 1);
        assert_eq!(loaded.failures.len(), 1);
        assert_eq!(loaded.manifest.entries.len(), 1);
        assert_eq!(loaded.manifest.class_names.len(), 20);
    }
}
