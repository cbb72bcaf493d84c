//! File-level commands. Each one validates the configuration, writes its
//! artifacts under `config.out` and echoes the resolved configuration there.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::benchmark::{benchmark, BenchmarkReport};
use super::config::PipelineConfig;
use super::ImagePipeline;
use crate::encoder::SpmfImage;
use crate::enhance::{augment, augment_rng, equalize_adaptive};
use crate::error::{Error, Result};
use crate::nn::{
    evaluate, fine_tune, train_with, Checkpoint, DenseNet, EncodingInfo, EvalReport, LabeledImages, TrainReport,
    Trainer,
};
use crate::preproc::NormalizationStats;
use crate::skeleton::{load_dataset_dir, make_split, split_sequences, SkeletonSequence};
use crate::synthetic::{self, SyntheticConfig};

pub const INDEX_FILE: &str = "index.csv";
pub const CLASSES_FILE: &str = "classes.json";
pub const STATS_FILE: &str = "stats.json";
pub const ENCODING_FILE: &str = "encoding.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// One row of an image directory's `index.csv`. `path` is relative to the
/// directory; rows under `test/` form the evaluation set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRow {
    pub path: String,
    pub label: usize,
    pub subject: u32,
    pub camera: u32,
    pub trial: u32,
    pub augmented: bool,
    pub seed: u64,
}

impl IndexRow {
    pub fn is_test(&self) -> bool {
        self.path.starts_with("test/")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeSummary {
    pub rows: Vec<IndexRow>,
    pub class_names: Vec<String>,
    pub stats: NormalizationStats,
    /// Files or sequences that could not be read or encoded.
    pub failures: Vec<(String, String)>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_index(path: &Path, rows: &[IndexRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_index(path: &Path) -> Result<Vec<IndexRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<IndexRow>, _>>()?)
}

/// Class names and label remapping for a split restricted to some labels.
fn class_mapping(names: &[String], labels: Option<Vec<usize>>) -> Result<(Vec<String>, HashMap<usize, usize>)> {
    match labels {
        None => Ok((names.to_vec(), (0..names.len()).map(|l| (l, l)).collect())),
        Some(list) => {
            let mut out = Vec::with_capacity(list.len());
            for &l in &list {
                out.push(
                    names
                        .get(l)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("split label {l} outside {} classes", names.len())))?,
                );
            }
            Ok((out, list.into_iter().enumerate().map(|(i, l)| (l, i)).collect()))
        }
    }
}

fn file_stem(dataset: &str, seq: &SkeletonSequence) -> String {
    format!("{dataset}_{}_{}_{}", seq.label, seq.subject, seq.trial)
}

/// Loads, splits and encodes a skeleton directory into
/// `out/{train,test}/*.png` (or `out/*.png` without a split) plus
/// `index.csv`, `classes.json`, `stats.json`, `encoding.json` and
/// `failures.txt` when anything was skipped.
pub fn cmd_encode(cfg: &PipelineConfig) -> Result<EncodeSummary> {
    cfg.validate()?;
    let data = cfg.require("data", &cfg.data)?;
    let loaded = load_dataset_dir(data, cfg.dataset)?;
    let mut failures: Vec<(String, String)> = loaded
        .failures
        .iter()
        .map(|(p, e)| (p.to_string_lossy().into_owned(), e.to_string()))
        .collect();
    if loaded.sequences.is_empty() {
        return Err(Error::DegenerateData(format!(
            "no readable {} sequences in {}",
            cfg.dataset,
            data.display()
        )));
    }
    let split = cfg.split_spec()?;
    let (train, test) = match &split {
        Some(s) => split_sequences(&loaded.sequences, s)?,
        None => (loaded.sequences.clone(), Vec::new()),
    };
    let (class_names, remap) = class_mapping(&loaded.manifest.class_names, split.as_ref().and_then(|s| s.labels()))?;
    let relabel = |v: Vec<SkeletonSequence>| -> Vec<SkeletonSequence> {
        v.into_iter()
            .map(|mut s| {
                s.label = remap[&s.label];
                s
            })
            .collect()
    };
    let (train, test) = (relabel(train), relabel(test));

    let pipeline = match &cfg.stats {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let joints = train[0].joint_count();
            ImagePipeline::new(NormalizationStats::from_json(&text)?, joints, cfg.savgol, cfg.ahe_config())?
        }
        None => ImagePipeline::fit(&train, cfg.savgol, cfg.ahe_config())?,
    };

    let out = &cfg.out;
    create_dir(out)?;
    let mut rows = Vec::new();
    let sides: Vec<(&str, &[SkeletonSequence], bool)> = if split.is_some() {
        vec![("train/", &train, true), ("test/", &test, false)]
    } else {
        vec![("", &train, true)]
    };
    let mut taken = std::collections::HashSet::new();
    for (prefix, seqs, augmentable) in sides {
        create_dir(&out.join(prefix))?;
        let images: Vec<Result<SpmfImage>> = seqs.par_iter().map(|s| pipeline.image(s)).collect();
        // names are assigned sequentially so reruns produce the same files
        let mut jobs: Vec<(String, SpmfImage, &SkeletonSequence, Option<usize>)> = Vec::new();
        for (i, (seq, img)) in seqs.iter().zip(images).enumerate() {
            let img = match img {
                Ok(img) => img,
                Err(e) => {
                    failures.push((seq.source_path.clone(), e.to_string()));
                    continue;
                }
            };
            let stem = file_stem(cfg.dataset.name(), seq);
            let mut name = stem.clone();
            let mut dup = 1;
            while !taken.insert(format!("{prefix}{name}")) {
                name = format!("{stem}_dup{dup}");
                dup += 1;
            }
            let copies: Vec<(usize, SpmfImage)> = if augmentable {
                (1..=cfg.augment_copies)
                    .map(|k| {
                        let mut rng = augment_rng(cfg.augment.seed, (i * cfg.augment_copies + k - 1) as u64);
                        (k, augment(&img, &cfg.augment, &mut rng))
                    })
                    .collect()
            } else {
                Vec::new()
            };
            jobs.push((format!("{prefix}{name}.png"), img, seq, None));
            for (k, aug) in copies {
                jobs.push((format!("{prefix}{name}_aug{k}.png"), aug, seq, Some(k)));
            }
        }
        jobs.par_iter()
            .map(|(path, img, _, _)| img.write_png(&out.join(path)))
            .collect::<Result<Vec<()>>>()?;
        rows.extend(jobs.into_iter().map(|(path, _, seq, aug)| IndexRow {
            path,
            label: seq.label,
            subject: seq.subject,
            camera: seq.camera,
            trial: seq.trial,
            augmented: aug.is_some(),
            seed: if aug.is_some() { cfg.augment.seed } else { cfg.seed },
        }));
    }
    write_index(&out.join(INDEX_FILE), &rows)?;
    write_json(&out.join(CLASSES_FILE), &class_names)?;
    write_json(&out.join(STATS_FILE), pipeline.stats())?;
    write_json(&out.join(ENCODING_FILE), &pipeline.encoding_info())?;
    let failure_path = out.join("failures.txt");
    if failures.is_empty() {
        if failure_path.exists() {
            std::fs::remove_file(&failure_path).map_err(|e| Error::io(&failure_path, e))?;
        }
    } else {
        let text: String = failures.iter().map(|(p, e)| format!("{p}\t{e}\n")).collect();
        std::fs::write(&failure_path, text).map_err(|e| Error::io(&failure_path, e))?;
    }
    cfg.echo(out)?;
    Ok(EncodeSummary {
        rows,
        class_names,
        stats: *pipeline.stats(),
        failures,
    })
}

/// Equalizes every image of an unequalized image directory into `out`.
pub fn cmd_enhance(cfg: &PipelineConfig) -> Result<usize> {
    cfg.validate()?;
    let input = cfg.require("images", &cfg.images)?;
    let mut encoding: EncodingInfo = read_json(&input.join(ENCODING_FILE))?;
    if encoding.ahe.is_some() {
        return Err(Error::Config(format!("{} is already equalized", input.display())));
    }
    let rows = read_index(&input.join(INDEX_FILE))?;
    let out = &cfg.out;
    rows.par_iter()
        .map(|r| {
            let img = SpmfImage::read_png(&input.join(&r.path))?;
            let dst = out.join(&r.path);
            if let Some(d) = dst.parent() {
                create_dir(d)?;
            }
            equalize_adaptive(&img, &cfg.ahe)?.write_png(&dst)
        })
        .collect::<Result<Vec<()>>>()?;
    encoding.ahe = Some(cfg.ahe);
    write_index(&out.join(INDEX_FILE), &rows)?;
    for f in [CLASSES_FILE, STATS_FILE] {
        let (src, dst) = (input.join(f), out.join(f));
        std::fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
    }
    write_json(&out.join(ENCODING_FILE), &encoding)?;
    cfg.echo(out)?;
    Ok(rows.len())
}

/// Writes `train.csv` and `test.csv` manifests for the configured split.
pub fn cmd_split(cfg: &PipelineConfig) -> Result<(usize, usize)> {
    cfg.validate()?;
    let data = cfg.require("data", &cfg.data)?;
    let spec = cfg
        .split_spec()?
        .ok_or_else(|| Error::Config("the split command needs a split other than none".into()))?;
    let loaded = load_dataset_dir(data, cfg.dataset)?;
    let (train, test) = make_split(&loaded.manifest, &spec)?;
    create_dir(&cfg.out)?;
    for (name, entries) in [("train.csv", &train), ("test.csv", &test)] {
        let m = crate::skeleton::DatasetManifest::new(entries.clone(), loaded.manifest.class_names.clone())?;
        m.write_csv(&cfg.out.join(name))?;
    }
    write_json(&cfg.out.join(CLASSES_FILE), &loaded.manifest.class_names)?;
    cfg.echo(&cfg.out)?;
    Ok((train.len(), test.len()))
}

/// An encoded image directory loaded into memory.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub train: LabeledImages,
    pub test: LabeledImages,
    pub class_names: Vec<String>,
    pub stats: NormalizationStats,
    pub encoding: EncodingInfo,
}

pub fn load_image_dir(dir: &Path) -> Result<ImageSet> {
    let rows = read_index(&dir.join(INDEX_FILE))?;
    let class_names: Vec<String> = read_json(&dir.join(CLASSES_FILE))?;
    let stats: NormalizationStats = read_json(&dir.join(STATS_FILE))?;
    let encoding: EncodingInfo = read_json(&dir.join(ENCODING_FILE))?;
    let images: Vec<SpmfImage> = rows
        .par_iter()
        .map(|r| SpmfImage::read_png(&dir.join(&r.path)))
        .collect::<Result<_>>()?;
    let mut train = LabeledImages::new(crate::encoder::NET_INPUT);
    let mut test = LabeledImages::new(crate::encoder::NET_INPUT);
    for (r, img) in rows.iter().zip(&images) {
        if r.label >= class_names.len() {
            return Err(Error::Config(format!("{}: label {} outside {} classes", r.path, r.label, class_names.len())));
        }
        if r.is_test() {
            test.push(img, r.label)?;
        } else {
            train.push(img, r.label)?;
        }
    }
    Ok(ImageSet {
        train,
        test,
        class_names,
        stats,
        encoding,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub eval: Option<EvalReport>,
    pub checkpoint: PathBuf,
}

#[derive(Serialize)]
struct Metrics<'a> {
    seed: u64,
    initial_loss: f64,
    best_epoch: usize,
    best_test_acc: Option<f64>,
    final_train_acc: f64,
    test: Option<&'a EvalReport>,
}

fn log_name(encoding: &EncodingInfo) -> &'static str {
    if encoding.ahe.is_some() {
        "train_log.csv"
    } else {
        "train_log_no_enhance.csv"
    }
}

fn finish_training(
    cfg: &PipelineConfig,
    mut trainer: Trainer,
    report: TrainReport,
    set: &ImageSet,
) -> Result<TrainOutcome> {
    let out = &cfg.out;
    create_dir(out)?;
    let eval = if set.test.is_empty() {
        None
    } else {
        Some(evaluate(&mut trainer.net, &set.test)?)
    };
    let ck = Checkpoint::from_trainer(&trainer, set.stats, set.class_names.clone(), set.encoding, cfg.seed)?;
    let path = out.join(CHECKPOINT_FILE);
    ck.save(&path)?;
    let log = out.join(log_name(&set.encoding));
    std::fs::write(&log, report.to_csv()).map_err(|e| Error::io(&log, e))?;
    write_json(
        &out.join("metrics.json"),
        &Metrics {
            seed: cfg.seed,
            initial_loss: report.initial_loss,
            best_epoch: report.best_epoch,
            best_test_acc: report.best_test_acc,
            final_train_acc: report.final_train_acc,
            test: eval.as_ref(),
        },
    )?;
    cfg.echo(out)?;
    Ok(TrainOutcome {
        report,
        eval,
        checkpoint: path,
    })
}

fn check_enhance_flag(cfg: &PipelineConfig, encoding: &EncodingInfo, dir: &Path) -> Result<()> {
    if !cfg.enhance && encoding.ahe.is_some() {
        return Err(Error::Config(format!(
            "--no-enhance given but {} holds equalized images; encode with --no-enhance first",
            dir.display()
        )));
    }
    Ok(())
}

/// Trains on an encoded image directory (rows under `test/` validate), or
/// continues from `resume`.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dir = cfg.require("images", &cfg.images)?;
    let set = load_image_dir(dir)?;
    check_enhance_flag(cfg, &set.encoding, dir)?;
    let mut trainer = match &cfg.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.class_names.len() != set.class_names.len() || ck.encoding != set.encoding {
                return Err(Error::Config(format!(
                    "{} was trained on a different class set or encoding",
                    p.display()
                )));
            }
            ck.trainer()?
        }
        None => Trainer::new(
            DenseNet::new(cfg.network(set.class_names.len())?, cfg.seed)?,
            cfg.train_config()?.adam,
        )?,
    };
    let test = (!set.test.is_empty()).then_some(&set.test);
    let report = train_with(&mut trainer, &set.train, test, &cfg.train_config()?)?;
    finish_training(cfg, trainer, report, &set)
}

/// Evaluates a checkpoint on an image directory's test rows (all rows when
/// there is no test part) and writes `eval.json`.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let ck = Checkpoint::load(cfg.require("checkpoint", &cfg.checkpoint)?)?;
    let dir = cfg.require("images", &cfg.images)?;
    let set = load_image_dir(dir)?;
    if ck.encoding.ahe.is_some() != set.encoding.ahe.is_some() {
        return Err(Error::Config(
            "checkpoint and images disagree on histogram equalization".into(),
        ));
    }
    if ck.class_names.len() != set.class_names.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, images have {}",
            ck.class_names.len(),
            set.class_names.len()
        )));
    }
    let mut net = ck.network()?;
    let data = if set.test.is_empty() { &set.train } else { &set.test };
    let report = evaluate(&mut net, data)?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("eval.json"), &report)?;
    cfg.echo(&cfg.out)?;
    Ok(report)
}

/// Replaces the checkpoint's head to match the image directory's classes
/// and trains on it.
pub fn cmd_finetune(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ck = Checkpoint::load(cfg.require("checkpoint", &cfg.checkpoint)?)?;
    let dir = cfg.require("images", &cfg.images)?;
    let set = load_image_dir(dir)?;
    check_enhance_flag(cfg, &set.encoding, dir)?;
    if ck.encoding.joints != set.encoding.joints {
        return Err(Error::Config(format!(
            "checkpoint encodes {} joints, images {}",
            ck.encoding.joints, set.encoding.joints
        )));
    }
    let test = (!set.test.is_empty()).then_some(&set.test);
    let (trainer, report) = fine_tune(ck.network()?, set.class_names.len(), &set.train, test, &cfg.train_config()?)?;
    finish_training(cfg, trainer, report, &set)
}

/// Single-threaded latency of smoothing + encoding, equalization and
/// inference per sequence. Uses the sequences under `data` or, without one,
/// a synthetic corpus.
pub fn cmd_benchmark(cfg: &PipelineConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let ck = Checkpoint::load(cfg.require("checkpoint", &cfg.checkpoint)?)?;
    let seqs = match &cfg.data {
        Some(d) => load_dataset_dir(d, cfg.dataset)?.sequences,
        None => {
            if ck.encoding.joints != synthetic::JOINTS {
                return Err(Error::Config(format!(
                    "no --data given and the checkpoint expects {} joints",
                    ck.encoding.joints
                )));
            }
            synthetic::generate(&SyntheticConfig {
                classes: 6,
                per_class: 4,
                seed: cfg.seed,
                ..SyntheticConfig::default()
            })?
        }
    };
    let pipeline = ImagePipeline::from_encoding(ck.stats, &ck.encoding)?;
    let mut net = ck.network()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let report = pool.install(|| benchmark(&pipeline, &mut net, &seqs, cfg.warmup, cfg.runs))?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("benchmark.json"), &report)?;
    cfg.echo(&cfg.out)?;
    Ok(report)
}

/// encode → train → eval → benchmark under `out/{images,model,benchmark}`.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<(EncodeSummary, TrainOutcome, BenchmarkReport)> {
    cfg.validate()?;
    let images = cfg.out.join("images");
    let model = cfg.out.join("model");
    let encode_cfg = PipelineConfig {
        out: images.clone(),
        ..cfg.clone()
    };
    let summary = cmd_encode(&encode_cfg)?;
    let train_cfg = PipelineConfig {
        images: Some(images),
        out: model.clone(),
        ..cfg.clone()
    };
    let outcome = cmd_train(&train_cfg)?;
    let bench_cfg = PipelineConfig {
        checkpoint: Some(outcome.checkpoint.clone()),
        out: cfg.out.join("benchmark"),
        ..cfg.clone()
    };
    let bench = cmd_benchmark(&bench_cfg)?;
    cfg.echo(&cfg.out)?;
    Ok((summary, outcome, bench))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_remapping_follows_split_order() {
        let names: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        let (n, m) = class_mapping(&names, Some(vec![1, 4])).unwrap();
        assert_eq!(n, vec!["c1", "c4"]);
        assert_eq!((m[&1], m[&4]), (0, 1));
        assert!(class_mapping(&names, Some(vec![9])).is_err());
        assert_eq!(class_mapping(&names, None).unwrap().0.len(), 5);
    }

    #[test]
    fn index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![IndexRow {
            path: "test/x.png".into(),
            label: 1,
            subject: 2,
            camera: 3,
            trial: 4,
            augmented: false,
            seed: 5,
        }];
        let p = dir.path().join(INDEX_FILE);
        write_index(&p, &rows).unwrap();
        assert!(std::fs::read_to_string(&p)
            .unwrap()
            .starts_with("path,label,subject,camera,trial,augmented,seed\n"));
        assert_eq!(read_index(&p).unwrap(), rows);
        assert!(rows[0].is_test());
    }
}
