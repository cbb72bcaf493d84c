//! Savitzky-Golay trajectory smoothing and training-split normalization
//! statistics.

use serde::{Deserialize, Serialize};

use crate::encoder::PairIndex;
use crate::error::{Error, Result};
use crate::skeleton::{Frame, SkeletonSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavGolConfig {
    pub window: usize,
    pub poly_order: usize,
}

impl Default for SavGolConfig {
    fn default() -> Self {
        SavGolConfig {
            window: 5,
            poly_order: 3,
        }
    }
}

impl SavGolConfig {
    pub fn new(window: usize, poly_order: usize) -> Result<Self> {
        let c = SavGolConfig { window, poly_order };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Config(format!(
                "Savitzky-Golay window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if self.poly_order >= self.window {
            return Err(Error::Config(format!(
                "Savitzky-Golay poly_order {} must be < window {}",
                self.poly_order, self.window
            )));
        }
        Ok(())
    }
}

/// Central-point smoothing weights of a least-squares polynomial fit over
/// the window.
///
/// Solves the normal equations `(AᵀA) c = e₀` for the Vandermonde matrix `A`
/// of offsets `-m..=m`; weight `i` is then `Σₖ cₖ iᵏ`.
pub fn savgol_coefficients(config: &SavGolConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let m = (config.window / 2) as i64;
    let n = config.poly_order + 1;

    // Offsets are scaled to [-1, 1] to keep the Gram matrix well conditioned;
    // the fitted value at the center does not depend on the basis scale.
    let scale = (m.max(1)) as f64;
    let u = |i: i64| i as f64 / scale;
    // Gram matrix entries are power sums Σ u^(r+c).
    let power_sum = |p: usize| -> f64 { (-m..=m).map(|i| u(i).powi(p as i32)).sum() };
    let mut gram = vec![vec![0.0f64; n + 1]; n];
    for (r, row) in gram.iter_mut().enumerate() {
        for c in 0..n {
            row[c] = power_sum(r + c);
        }
        row[n] = if r == 0 { 1.0 } else { 0.0 };
    }
    let coef = solve_augmented(gram).ok_or_else(|| {
        Error::Config("Savitzky-Golay normal equations are singular".into())
    })?;

    Ok((-m..=m)
        .map(|i| {
            coef.iter()
                .enumerate()
                .map(|(k, c)| c * u(i).powi(k as i32))
                .sum()
        })
        .collect())
}

/// Gauss-Jordan elimination with partial pivoting on an `n x (n+1)` system.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n]).collect())
}

/// Index `i` of a length-`n` signal extended past both ends by point
/// reflection about the end samples: `x[-i] = 2x[0] - x[i]`.
#[inline]
fn reflected(signal: &[f64], i: isize) -> f64 {
    let n = signal.len() as isize;
    if i < 0 {
        2.0 * signal[0] - signal[(-i) as usize]
    } else if i >= n {
        2.0 * signal[(n - 1) as usize] - signal[(2 * (n - 1) - i) as usize]
    } else {
        signal[i as usize]
    }
}

/// Convolves one channel with the smoothing weights, extending the ends by
/// point reflection. Requires `signal.len() >= weights.len()`.
pub fn smooth_signal(signal: &[f64], weights: &[f64]) -> Vec<f64> {
    let m = (weights.len() / 2) as isize;
    (0..signal.len() as isize)
        .map(|t| {
            weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * reflected(signal, t + k as isize - m))
                .sum()
        })
        .collect()
}

/// Smooths every joint coordinate channel independently along time.
/// Sequences shorter than the window come back unchanged.
pub fn smooth_sequence(seq: &SkeletonSequence, config: &SavGolConfig) -> Result<SkeletonSequence> {
    let weights = savgol_coefficients(config)?;
    let mut out = seq.clone();
    if seq.frames.len() < config.window {
        return Ok(out);
    }
    let joints = seq.joint_count();
    let mut channel = vec![0.0f64; seq.frames.len()];
    for j in 0..joints {
        for axis in 0..3 {
            for (c, f) in channel.iter_mut().zip(&seq.frames) {
                *c = f.joints[j].xyz()[axis];
            }
            let smoothed = smooth_signal(&channel, &weights);
            for (f, v) in out.frames.iter_mut().zip(smoothed) {
                let joint = &mut f.joints[j];
                match axis {
                    0 => joint.x = v,
                    1 => joint.y = v,
                    _ => joint.z = v,
                }
            }
        }
    }
    Ok(out)
}

/// Coordinate range and largest joint-joint distance over a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub c_min: [f64; 3],
    pub c_max: [f64; 3],
    pub d_max: f64,
}

impl NormalizationStats {
    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.c_min[a] < self.c_max[a]) {
                return Err(Error::DegenerateData(format!(
                    "coordinate range on axis {a} is empty ({} .. {})",
                    self.c_min[a], self.c_max[a]
                )));
            }
        }
        if !(self.d_max > 0.0) || !self.d_max.is_finite() {
            return Err(Error::DegenerateData(format!("d_max must be > 0, got {}", self.d_max)));
        }
        Ok(())
    }

    /// Value range of a joint-joint orientation component on `axis`: the
    /// difference of two in-range coordinates lies in `[-span, span]`.
    pub fn orientation_range(&self, axis: usize) -> (f64, f64) {
        let span = self.c_max[axis] - self.c_min[axis];
        (-span, span)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: NormalizationStats = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn frame_pair_max(f: &Frame, g: &Frame, pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(j, k)| dist(f.joints[j].xyz(), g.joints[k].xyz()))
        .fold(0.0, f64::max)
}

/// Exact coordinate min/max and maximum encoder distance (pose pairs within
/// a frame, motion pairs across consecutive frames) over the training
/// sequences. Takes only the training list so test data cannot leak in.
pub fn compute_stats(train: &[SkeletonSequence]) -> Result<NormalizationStats> {
    if train.is_empty() {
        return Err(Error::DegenerateData("training split is empty".into()));
    }
    let mut c_min = [f64::INFINITY; 3];
    let mut c_max = [f64::NEG_INFINITY; 3];
    let mut d_max = 0.0f64;
    let mut pairs: Option<PairIndex> = None;
    for seq in train {
        let jc = seq.joint_count();
        if pairs.as_ref().map_or(true, |p| p.joints() != jc) {
            pairs = Some(PairIndex::new(jc));
        }
        let pairs = pairs.as_ref().expect("set above");
        for f in &seq.frames {
            for j in &f.joints {
                for (a, v) in j.xyz().into_iter().enumerate() {
                    c_min[a] = c_min[a].min(v);
                    c_max[a] = c_max[a].max(v);
                }
            }
            d_max = d_max.max(frame_pair_max(f, f, pairs.pose_pairs()));
        }
        for w in seq.frames.windows(2) {
            d_max = d_max.max(frame_pair_max(&w[0], &w[1], pairs.motion_pairs()));
        }
    }
    let stats = NormalizationStats { c_min, c_max, d_max };
    stats.validate()?;
    Ok(stats)
}
