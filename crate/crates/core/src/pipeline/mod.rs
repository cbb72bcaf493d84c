//! End-to-end orchestration: sequence → image conversion with frozen
//! statistics, and the commands behind the `spmf` binary.

mod benchmark;
mod commands;
mod config;

use rayon::prelude::*;

use crate::encoder::{SpmfEncoder, SpmfImage};
use crate::enhance::{equalize_adaptive, AheConfig};
use crate::error::{Error, Result};
use crate::nn::{EncodingInfo, LabeledImages};
use crate::preproc::{compute_stats, smooth_sequence, NormalizationStats, SavGolConfig};
use crate::skeleton::SkeletonSequence;

pub use benchmark::{benchmark, hardware_note, BenchmarkReport, LatencyStats};
pub use commands::{
    cmd_benchmark, cmd_encode, cmd_enhance, cmd_eval, cmd_finetune, cmd_pipeline, cmd_split, cmd_train, load_image_dir,
    read_index, write_index, EncodeSummary, ImageSet, IndexRow, TrainOutcome, CHECKPOINT_FILE, INDEX_FILE,
};
pub use config::{PipelineConfig, TrainSettings};

/// Smoothing, encoding and (optionally) equalization with statistics fixed
/// from a training split.
#[derive(Debug, Clone)]
pub struct ImagePipeline {
    savgol: SavGolConfig,
    ahe: Option<AheConfig>,
    encoder: SpmfEncoder,
}

impl ImagePipeline {
    pub fn new(stats: NormalizationStats, joints: usize, savgol: SavGolConfig, ahe: Option<AheConfig>) -> Result<Self> {
        savgol.validate()?;
        if let Some(a) = &ahe {
            a.validate()?;
        }
        Ok(ImagePipeline {
            savgol,
            ahe,
            encoder: SpmfEncoder::new(stats, joints)?,
        })
    }

    /// Smooths the training sequences and computes statistics from them.
    pub fn fit(train: &[SkeletonSequence], savgol: SavGolConfig, ahe: Option<AheConfig>) -> Result<Self> {
        let joints = train
            .first()
            .ok_or_else(|| Error::Config("training split is empty".into()))?
            .joint_count();
        let smoothed = train
            .par_iter()
            .map(|s| smooth_sequence(s, &savgol))
            .collect::<Result<Vec<_>>>()?;
        Self::new(compute_stats(&smoothed)?, joints, savgol, ahe)
    }

    pub fn from_encoding(stats: NormalizationStats, info: &EncodingInfo) -> Result<Self> {
        Self::new(stats, info.joints, info.savgol, info.ahe)
    }

    pub fn stats(&self) -> &NormalizationStats {
        self.encoder.stats()
    }

    pub fn encoder(&self) -> &SpmfEncoder {
        &self.encoder
    }

    pub fn enhancement(&self) -> Option<&AheConfig> {
        self.ahe.as_ref()
    }

    pub fn encoding_info(&self) -> EncodingInfo {
        EncodingInfo {
            joints: self.encoder.pairs().joints(),
            savgol: self.savgol,
            ahe: self.ahe,
        }
    }

    /// 32x32 image before equalization.
    pub fn encode(&self, seq: &SkeletonSequence) -> Result<SpmfImage> {
        let smoothed = smooth_sequence(seq, &self.savgol)?;
        self.encoder.assemble(&smoothed)
    }

    /// Applies the configured equalization (identity when disabled).
    pub fn enhance(&self, img: SpmfImage) -> Result<SpmfImage> {
        match &self.ahe {
            Some(cfg) => equalize_adaptive(&img, cfg),
            None => Ok(img),
        }
    }

    pub fn image(&self, seq: &SkeletonSequence) -> Result<SpmfImage> {
        self.enhance(self.encode(seq)?)
    }

    /// Images for many sequences, converted in parallel.
    pub fn images(&self, seqs: &[SkeletonSequence]) -> Result<Vec<SpmfImage>> {
        seqs.par_iter().map(|s| self.image(s)).collect()
    }

    pub fn labeled(&self, seqs: &[SkeletonSequence]) -> Result<LabeledImages> {
        let images = self.images(seqs)?;
        let labels: Vec<usize> = seqs.iter().map(|s| s.label).collect();
        LabeledImages::from_images(&images, &labels)
    }
}
