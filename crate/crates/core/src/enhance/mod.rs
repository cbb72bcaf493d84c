//! Histogram equalization (global and tile-wise adaptive) and training-time
//! image augmentation.

mod augment;

pub use augment::{augment, augment_rng, flip_vertical, gaussian_blur, gaussian_kernel, AugmentConfig};

use serde::{Deserialize, Serialize};

use crate::encoder::SpmfImage;
use crate::error::{Error, Result};

/// Pixel counts per intensity level and the matching probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts intensity levels of a channel. Values at or above `levels` are
/// counted in the top level.
pub fn histogram(channel: &[u8], levels: usize) -> Histogram {
    assert!(levels >= 1, "at least one intensity level");
    let mut counts = vec![0u64; levels];
    for &v in channel {
        counts[(v as usize).min(levels - 1)] += 1;
    }
    let total = channel.len().max(1) as f64;
    let probabilities = counts.iter().map(|&c| c as f64 / total).collect();
    Histogram {
        counts,
        probabilities,
    }
}

/// The equalization map `T(n) = floor((L−1) · Σ_{k≤n} p_k)`, evaluated in
/// exact integer arithmetic on the cumulative counts.
pub fn equalization_map(hist: &Histogram) -> Vec<u8> {
    let levels = hist.counts.len() as u64;
    let total = hist.total().max(1);
    let mut cum = 0u64;
    hist.counts
        .iter()
        .map(|&c| {
            cum += c;
            ((levels - 1) * cum / total).min(255) as u8
        })
        .collect()
}

/// Global histogram equalization of one channel.
pub fn equalize_global(channel: &[u8], levels: usize) -> Vec<u8> {
    if channel.is_empty() {
        return Vec::new();
    }
    let map = equalization_map(&histogram(channel, levels));
    channel
        .iter()
        .map(|&v| map[(v as usize).min(levels - 1)])
        .collect()
}

/// Tile grid for adaptive equalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AheConfig {
    pub regions: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub levels: usize,
}

impl Default for AheConfig {
    fn default() -> Self {
        AheConfig {
            regions: 8,
            grid_rows: 2,
            grid_cols: 4,
            levels: 256,
        }
    }
}

impl AheConfig {
    /// Near-square grid for `regions` tiles: rows is the largest divisor not
    /// above `sqrt(regions)`.
    pub fn with_regions(regions: usize) -> Result<Self> {
        if regions == 0 {
            return Err(Error::Config("regions must be positive".into()));
        }
        let rows = (1..=regions)
            .take_while(|r| r * r <= regions)
            .filter(|r| regions % r == 0)
            .last()
            .unwrap_or(1);
        Ok(AheConfig {
            regions,
            grid_rows: rows,
            grid_cols: regions / rows,
            levels: 256,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_rows * self.grid_cols != self.regions || self.regions == 0 {
            return Err(Error::Config(format!(
                "grid {}x{} does not make {} regions",
                self.grid_rows, self.grid_cols, self.regions
            )));
        }
        if !(2..=256).contains(&self.levels) {
            return Err(Error::Config(format!("levels must be in 2..=256, got {}", self.levels)));
        }
        Ok(())
    }

    /// Tile `(height, width)` for an image, or a configuration error when the
    /// grid does not divide it into tiles of at least 2x2.
    pub fn tile_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if height % self.grid_rows != 0 || width % self.grid_cols != 0 {
            return Err(Error::Config(format!(
                "{height}x{width} image is not divisible by a {}x{} grid",
                self.grid_rows, self.grid_cols
            )));
        }
        let (th, tw) = (height / self.grid_rows, width / self.grid_cols);
        if th < 2 || tw < 2 {
            return Err(Error::Config(format!("tiles of {th}x{tw} are smaller than 2x2")));
        }
        Ok((th, tw))
    }
}

/// Adaptive equalization: every tile of every RGB channel is equalized on its
/// own histogram and written back in place. No clip limit, no blending
/// between tiles.
pub fn equalize_adaptive(image: &SpmfImage, config: &AheConfig) -> Result<SpmfImage> {
    let (th, tw) = config.tile_size(image.height, image.width)?;
    let mut out = image.clone();
    let mut tile = Vec::with_capacity(th * tw);
    for c in 0..3 {
        for gr in 0..config.grid_rows {
            for gc in 0..config.grid_cols {
                tile.clear();
                for y in gr * th..(gr + 1) * th {
                    for x in gc * tw..(gc + 1) * tw {
                        tile.push(image.pixels[(y * image.width + x) * 3 + c]);
                    }
                }
                let eq = equalize_global(&tile, config.levels);
                let mut it = eq.into_iter();
                for y in gr * th..(gr + 1) * th {
                    for x in gc * tw..(gc + 1) * tw {
                        out.pixels[(y * image.width + x) * 3 + c] = it.next().expect("tile size");
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn tiny_histograms() {
        let h = histogram(&[0, 0, 0, 0], 4);
        assert_eq!(h.counts, vec![4, 0, 0, 0]);
        assert_eq!(h.probabilities, vec![1.0, 0.0, 0.0, 0.0]);
        let h = histogram(&[0, 0, 1, 3], 4);
        assert_eq!(h.probabilities, vec![0.5, 0.25, 0.0, 0.25]);
    }

    #[test]
    fn histogram_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let px: Vec<u8> = (0..1000).map(|_| rng.gen()).collect();
        let h = histogram(&px, 256);
        for level in 0..256 {
            assert_eq!(h.counts[level], px.iter().filter(|&&v| v as usize == level).count() as u64);
        }
        assert_eq!(h.total(), 1000);
        assert!((h.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_case_equalization() {
        assert_eq!(equalize_global(&[0, 0, 1, 3], 4), vec![1, 1, 2, 3]);
    }

    #[test]
    fn constant_goes_to_top_level() {
        assert!(equalize_global(&[9; 64], 256).iter().all(|&v| v == 255));
        assert!(equalize_global(&[2; 6], 4).iter().all(|&v| v == 3));
    }

    #[test]
    fn uniform_ramp_nearly_unchanged() {
        let ramp: Vec<u8> = (0..=255).collect();
        let eq = equalize_global(&ramp, 256);
        for (a, b) in eq.iter().zip(&ramp) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SpmfImage {
        SpmfImage::from_pixels(h, w, (0..h * w * 3).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn single_region_equals_global() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_image(&mut rng, 32, 32);
        let ahe = equalize_adaptive(&img, &AheConfig::with_regions(1).unwrap()).unwrap();
        for c in 0..3 {
            assert_eq!(ahe.channel(c), equalize_global(&img.channel(c), 256));
        }
    }

    #[test]
    fn tiles_equal_their_own_global_equalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut img = random_image(&mut rng, 32, 32);
        // make tiles differ strongly
        for y in 0..16 {
            for x in 0..8 {
                img.set(y, x, [3, 3, 3]);
            }
        }
        let cfg = AheConfig::default();
        let out = equalize_adaptive(&img, &cfg).unwrap();
        for c in 0..3 {
            for gr in 0..2 {
                for gc in 0..4 {
                    let tile = |im: &SpmfImage| -> Vec<u8> {
                        (gr * 16..gr * 16 + 16)
                            .flat_map(|y| (gc * 8..gc * 8 + 8).map(move |x| (y, x)))
                            .map(|(y, x)| im.get(y, x)[c])
                            .collect()
                    };
                    assert_eq!(tile(&out), equalize_global(&tile(&img), 256));
                }
            }
        }
        assert!((0..16).all(|y| (0..8).all(|x| out.get(y, x) == [255, 255, 255])));
    }

    #[test]
    fn grid_validation() {
        let img = SpmfImage::new(31, 32);
        assert!(matches!(equalize_adaptive(&img, &AheConfig::default()), Err(Error::Config(_))));
        let bad = AheConfig { regions: 8, grid_rows: 3, grid_cols: 3, levels: 256 };
        assert!(bad.validate().is_err());
        let tiny = AheConfig::with_regions(1024).unwrap();
        assert!(tiny.tile_size(32, 32).is_err());
        assert_eq!(AheConfig::with_regions(8).unwrap(), AheConfig::default());
        let r4 = AheConfig::with_regions(4).unwrap();
        assert_eq!((r4.grid_rows, r4.grid_cols), (2, 2));
    }

    proptest! {
        #[test]
        fn equalization_map_is_monotone_and_in_range(px in prop::collection::vec(any::<u8>(), 1..600), levels in 2usize..=256) {
            let px: Vec<u8> = px.into_iter().map(|v| (v as usize % levels) as u8).collect();
            let map = equalization_map(&histogram(&px, levels));
            prop_assert!(map.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(map.iter().all(|&v| (v as usize) < levels));
        }

        #[test]
        fn histogram_is_permutation_invariant(mut px in prop::collection::vec(any::<u8>(), 1..300), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let h = histogram(&px, 256);
            px.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(histogram(&px, 256), h);
        }
    }
}
