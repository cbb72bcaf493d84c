//! Random crop, vertical flip and Gaussian blur on encoded images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::SpmfImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Reflect padding added on every side before the random crop.
    pub padding: usize,
    pub flip_probability: f64,
    pub blur_kernel: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            padding: 4,
            flip_probability: 0.5,
            blur_kernel: 3,
            sigma_min: 0.5,
            sigma_max: 1.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!(
                "flip probability {} outside [0,1]",
                self.flip_probability
            )));
        }
        if self.blur_kernel % 2 == 0 {
            return Err(Error::Config("blur kernel size must be odd".into()));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max) {
            return Err(Error::Config(format!(
                "invalid sigma range [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        Ok(())
    }
}

/// Independent RNG stream for image `index` under `seed`.
pub fn augment_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Reflection (no edge repeat) of an out-of-range index into `0..len`.
#[inline]
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i.rem_euclid(period);
    (if r < n { r } else { period - r }) as usize
}

fn crop_reflect(img: &SpmfImage, top: isize, left: isize, h: usize, w: usize) -> SpmfImage {
    let mut out = SpmfImage::new(h, w);
    out.meta = img.meta.clone();
    for y in 0..h {
        let sy = reflect(top + y as isize, img.height);
        for x in 0..w {
            let sx = reflect(left + x as isize, img.width);
            out.set(y, x, img.get(sy, sx));
        }
    }
    out
}

/// Flips rows top to bottom.
pub fn flip_vertical(img: &SpmfImage) -> SpmfImage {
    let mut out = img.clone();
    let row = img.width * 3;
    for y in 0..img.height {
        let src = (img.height - 1 - y) * row;
        out.pixels[y * row..(y + 1) * row].copy_from_slice(&img.pixels[src..src + row]);
    }
    out
}

/// Normalized 1D Gaussian taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with reflected borders, rounded half-up.
pub fn gaussian_blur(img: &SpmfImage, size: usize, sigma: f64) -> SpmfImage {
    let k = gaussian_kernel(size, sigma);
    let r = (size / 2) as isize;
    let (h, w) = (img.height, img.width);
    let mut tmp = vec![0.0f64; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                tmp[(y * w + x) * 3 + c] = k
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t * img.get(y, reflect(x as isize + i as isize - r, w))[c] as f64)
                    .sum();
            }
        }
    }
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t * tmp[(reflect(y as isize + i as isize - r, h) * w + x) * 3 + c])
                    .sum();
                out.pixels[(y * w + x) * 3 + c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Reflect-pad and random-crop back to the input size, flip vertically with
/// the configured probability, then blur with a random sigma.
pub fn augment<R: Rng + ?Sized>(img: &SpmfImage, config: &AugmentConfig, rng: &mut R) -> SpmfImage {
    let p = config.padding as isize;
    let top = rng.gen_range(0..=2 * p) - p;
    let left = rng.gen_range(0..=2 * p) - p;
    let mut out = crop_reflect(img, top, left, img.height, img.width);
    if rng.gen_bool(config.flip_probability.clamp(0.0, 1.0)) {
        out = flip_vertical(&out);
    }
    let sigma = if config.sigma_max > config.sigma_min {
        rng.gen_range(config.sigma_min..=config.sigma_max)
    } else {
        config.sigma_min
    };
    gaussian_blur(&out, config.blur_kernel, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(seed: u64) -> SpmfImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpmfImage::from_pixels(32, 32, (0..32 * 32 * 3).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn double_flip_is_identity() {
        let img = random_image(1);
        assert_eq!(flip_vertical(&flip_vertical(&img)), img);
        assert_ne!(flip_vertical(&img), img);
    }

    #[test]
    fn forced_flip_twice_through_augment() {
        let img = random_image(2);
        let cfg = AugmentConfig {
            padding: 0,
            flip_probability: 1.0,
            sigma_min: 1e-3,
            sigma_max: 1e-3,
            ..Default::default()
        };
        let mut rng = augment_rng(0, 0);
        let once = augment(&img, &cfg, &mut rng);
        assert_eq!(once, flip_vertical(&img));
        assert_eq!(augment(&once, &cfg, &mut rng), img);
    }

    #[test]
    fn tiny_sigma_blur_is_identity() {
        // exp(-1 / (2 * 1e-6)) underflows to 0: the kernel is a unit impulse.
        let k = gaussian_kernel(3, 1e-3);
        assert_eq!(k, vec![0.0, 1.0, 0.0]);
        let img = random_image(3);
        let out = gaussian_blur(&img, 3, 1e-3);
        for (a, b) in out.pixels.iter().zip(&img.pixels) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let img = SpmfImage::from_pixels(32, 32, vec![200; 32 * 32 * 3]).unwrap();
        assert_eq!(gaussian_blur(&img, 3, 0.8), img);
    }

    #[test]
    fn seeded_augmentation_is_deterministic() {
        let img = random_image(4);
        let cfg = AugmentConfig::default();
        let a = augment(&img, &cfg, &mut augment_rng(42, 7));
        let b = augment(&img, &cfg, &mut augment_rng(42, 7));
        let c = augment(&img, &cfg, &mut augment_rng(42, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!((a.height, a.width), (32, 32));
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        assert!(AugmentConfig { flip_probability: 1.5, ..Default::default() }.validate().is_err());
        assert!(AugmentConfig { blur_kernel: 4, ..Default::default() }.validate().is_err());
    }
}
