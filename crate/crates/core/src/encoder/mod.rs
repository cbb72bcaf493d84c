//! Skeleton pose-motion feature (SPMF) encoding.
//!
//! Each frame becomes a pose column (joint-joint distances and orientations
//! within the frame); each consecutive frame pair becomes a motion column
//! (the same features between joints of frame `t` and frame `t+1`). Columns
//! are interleaved `PF¹, MF¹², PF², …, PFᴺ` into a `(2·|pose pairs|) × (2N−1)`
//! RGB image, then resized to 32x32.
//!
//! Distances are divided by the training-split `d_max` and colored through the
//! JET palette. Orientation components map to R, G and B after per-axis
//! normalization over `[-(c_max - c_min), c_max - c_min]`.

mod image;
mod jet;
mod pairs;

pub use self::image::{ImageMeta, SpmfImage, NET_INPUT};
pub use jet::{jet_encode, JetPalette, JET_ANCHORS};
pub use pairs::PairIndex;

use crate::error::{Error, Result};
use crate::preproc::NormalizationStats;
use crate::skeleton::{Frame, Joint, SkeletonSequence};

/// Euclidean distance between two joints.
#[inline]
pub fn compute_jjd(p: &Joint, q: &Joint) -> f64 {
    let [dx, dy, dz] = compute_jjo(p, q);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Orientation vector `p - q`.
#[inline]
pub fn compute_jjo(p: &Joint, q: &Joint) -> [f64; 3] {
    [p.x - q.x, p.y - q.y, p.z - q.z]
}

/// `floor(255 · (v − lo) / (hi − lo))` after clamping `v` into `[lo, hi]`.
pub fn normalize_component(v: f64, lo: f64, hi: f64) -> Result<u8> {
    if !(lo < hi) {
        return Err(Error::DegenerateRange { lo, hi });
    }
    Ok(normalize_unchecked(v, lo, hi))
}

#[inline]
fn normalize_unchecked(v: f64, lo: f64, hi: f64) -> u8 {
    let v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
    (255.0 * (v - lo) / (hi - lo)).floor().clamp(0.0, 255.0) as u8
}

/// Resizes a feature block to `target` entries: truncates when longer,
/// mirror-pads (reflecting about the last entry) when shorter.
fn fit_block(block: &mut Vec<[u8; 3]>, target: usize) {
    if block.len() >= target {
        block.truncate(target);
        return;
    }
    let n = block.len();
    if n == 0 {
        block.resize(target, [0; 3]);
        return;
    }
    let period = if n == 1 { 1 } else { 2 * (n - 1) };
    for i in n..target {
        let r = i % period;
        let src = if r < n { r } else { period - r };
        block.push(block[src]);
    }
}

/// Pose/motion column builder bound to one set of normalization statistics.
#[derive(Debug, Clone)]
pub struct SpmfEncoder {
    stats: NormalizationStats,
    palette: JetPalette,
    pairs: PairIndex,
    orient: [(f64, f64); 3],
}

impl SpmfEncoder {
    pub fn new(stats: NormalizationStats, joints: usize) -> Result<Self> {
        Self::with_palette(stats, JetPalette::new(), joints)
    }

    pub fn with_palette(stats: NormalizationStats, palette: JetPalette, joints: usize) -> Result<Self> {
        stats.validate()?;
        if joints < 2 {
            return Err(Error::Config(format!("need at least 2 joints, got {joints}")));
        }
        let orient = [0, 1, 2].map(|a| stats.orientation_range(a));
        Ok(SpmfEncoder {
            stats,
            palette,
            pairs: PairIndex::new(joints),
            orient,
        })
    }

    pub fn pairs(&self) -> &PairIndex {
        &self.pairs
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    fn check_frame(&self, f: &Frame) -> Result<()> {
        if f.joints.len() != self.pairs.joints() {
            return Err(Error::Shape(format!(
                "frame has {} joints, encoder expects {}",
                f.joints.len(),
                self.pairs.joints()
            )));
        }
        Ok(())
    }

    fn column(&self, a: &Frame, b: &Frame, pairs: &[(usize, usize)]) -> Vec<[u8; 3]> {
        let target = self.pairs.pose_pairs().len();
        let mut dist: Vec<[u8; 3]> = Vec::with_capacity(pairs.len());
        let mut orient: Vec<[u8; 3]> = Vec::with_capacity(pairs.len());
        for &(j, k) in pairs {
            let (p, q) = (&a.joints[j], &b.joints[k]);
            dist.push(self.palette.encode(compute_jjd(p, q) / self.stats.d_max));
            let o = compute_jjo(p, q);
            orient.push([0, 1, 2].map(|c| normalize_unchecked(o[c], self.orient[c].0, self.orient[c].1)));
        }
        fit_block(&mut dist, target);
        fit_block(&mut orient, target);
        dist.extend(orient);
        dist
    }

    /// Distance block stacked above the orientation block, over pose pairs.
    pub fn pose_column(&self, frame: &Frame) -> Result<Vec<[u8; 3]>> {
        self.check_frame(frame)?;
        Ok(self.column(frame, frame, self.pairs.pose_pairs()))
    }

    /// Cross-frame features over motion pairs, each block fitted to the
    /// pose-column height.
    pub fn motion_column(&self, f_t: &Frame, f_next: &Frame) -> Result<Vec<[u8; 3]>> {
        self.check_frame(f_t)?;
        self.check_frame(f_next)?;
        Ok(self.column(f_t, f_next, self.pairs.motion_pairs()))
    }

    /// Full-resolution interleaved image (before resizing).
    pub fn assemble_raw(&self, seq: &SkeletonSequence) -> Result<SpmfImage> {
        let n = seq.frames.len();
        if n < 2 {
            return Err(Error::TooShort { frames: n, needed: 2 });
        }
        let height = self.pairs.column_height();
        let width = 2 * n - 1;
        let mut img = SpmfImage::new(height, width);
        img.meta.source = seq.source_path.clone();
        let mut put = |x: usize, col: Vec<[u8; 3]>| {
            for (y, rgb) in col.into_iter().enumerate() {
                img.set(y, x, rgb);
            }
        };
        for (t, f) in seq.frames.iter().enumerate() {
            put(2 * t, self.pose_column(f)?);
            if let Some(next) = seq.frames.get(t + 1) {
                put(2 * t + 1, self.motion_column(f, next)?);
            }
        }
        Ok(img)
    }

    /// Interleaved image resized to the 32x32 network input.
    pub fn assemble(&self, seq: &SkeletonSequence) -> Result<SpmfImage> {
        Ok(self.assemble_raw(seq)?.resize_bilinear(NET_INPUT, NET_INPUT))
    }
}

/// Encodes a sequence into its 32x32 SPMF image.
pub fn assemble_spmf(seq: &SkeletonSequence, stats: &NormalizationStats, palette: &JetPalette) -> Result<SpmfImage> {
    SpmfEncoder::with_palette(*stats, palette.clone(), seq.joint_count())?.assemble(seq)
}

pub fn build_pose_column(frame: &Frame, stats: &NormalizationStats, palette: &JetPalette) -> Result<Vec<[u8; 3]>> {
    SpmfEncoder::with_palette(*stats, palette.clone(), frame.joints.len())?.pose_column(frame)
}

pub fn build_motion_column(
    f_t: &Frame,
    f_next: &Frame,
    stats: &NormalizationStats,
    palette: &JetPalette,
) -> Result<Vec<[u8; 3]>> {
    SpmfEncoder::with_palette(*stats, palette.clone(), f_t.joints.len())?.motion_column(f_t, f_next)
}
