//! Per-sequence latency measurement.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ImagePipeline;
use crate::error::{Error, Result};
use crate::nn::{DenseNet, LabeledImages, Mode};
use crate::skeleton::SkeletonSequence;

/// Mean and 95th percentile of one stage, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    /// Nearest-rank percentile; `samples` must be non-empty.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        LatencyStats {
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p95_ms: sorted[rank - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub sequences_per_sec: f64,
    /// Smoothing, feature extraction, coloring and resizing.
    pub encode: LatencyStats,
    pub enhance: LatencyStats,
    pub inference: LatencyStats,
    pub total: LatencyStats,
    pub runs: usize,
    pub warmup: usize,
    pub depth: usize,
    pub hardware: String,
}

pub fn hardware_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}; {cores} logical cores available; measured on 1 thread")
}

fn ms(t: Instant) -> f64 {
    // clamp so a stage never reports zero on coarse clocks
    (t.elapsed().as_secs_f64() * 1e3).max(1e-6)
}

/// Times `warmup + runs` sequences (cycling through `seqs`), discarding the
/// warmup.
pub fn benchmark(
    pipeline: &ImagePipeline,
    net: &mut DenseNet<f32>,
    seqs: &[SkeletonSequence],
    warmup: usize,
    runs: usize,
) -> Result<BenchmarkReport> {
    if seqs.is_empty() {
        return Err(Error::Config("benchmark needs at least one sequence".into()));
    }
    if runs == 0 {
        return Err(Error::Config("benchmark needs at least one run".into()));
    }
    let (mut enc, mut enh, mut inf, mut tot) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in 0..warmup + runs {
        let seq = &seqs[r % seqs.len()];
        let start = Instant::now();
        let t = Instant::now();
        let img = pipeline.encode(seq)?;
        let e1 = ms(t);
        let t = Instant::now();
        let img = pipeline.enhance(img)?;
        let e2 = ms(t);
        let t = Instant::now();
        let input = LabeledImages::from_images(std::slice::from_ref(&img), &[0])?;
        let logits = net.forward(&input.data, 1, Mode::Eval)?;
        std::hint::black_box(&logits);
        let e3 = ms(t);
        let e4 = ms(start);
        if r >= warmup {
            enc.push(e1);
            enh.push(e2);
            inf.push(e3);
            tot.push(e4);
        }
    }
    let total = LatencyStats::from_samples(&tot);
    Ok(BenchmarkReport {
        sequences_per_sec: 1e3 / total.mean_ms,
        encode: LatencyStats::from_samples(&enc),
        enhance: LatencyStats::from_samples(&enh),
        inference: LatencyStats::from_samples(&inf),
        total,
        runs,
        warmup,
        depth: net.config().depth,
        hardware: hardware_note(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_is_nearest_rank() {
        let s: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let l = LatencyStats::from_samples(&s);
        assert_eq!(l.p95_ms, 95.0);
        assert_eq!(l.mean_ms, 50.5);
        let one = LatencyStats::from_samples(&[3.0]);
        assert_eq!((one.mean_ms, one.p95_ms), (3.0, 3.0));
    }
}
