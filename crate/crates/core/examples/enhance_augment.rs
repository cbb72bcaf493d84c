// Histogram equalization, tile-wise adaptive equalization and augmentation.

use spmf::enhance::{augment, augment_rng, equalize_adaptive, equalize_global, histogram, AheConfig, AugmentConfig};
use spmf::pipeline::ImagePipeline;
use spmf::preproc::SavGolConfig;
use spmf::synthetic::{generate, SyntheticConfig};

fn distinct_levels(plane: &[u8]) -> usize {
    histogram(plane, 256).counts.iter().filter(|&&c| c > 0).count()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("equalize {{0,0,1,3}} with 4 levels -> {:?}", equalize_global(&[0, 0, 1, 3], 4));

    let seqs = generate(&SyntheticConfig::default())?;
    let pipeline = ImagePipeline::fit(&seqs, SavGolConfig::default(), None)?;
    let img = pipeline.encode(&seqs[0])?;

    let ahe = AheConfig::default();
    let enhanced = equalize_adaptive(&img, &ahe)?;
    println!("adaptive equalization on a {}x{} grid", ahe.grid_rows, ahe.grid_cols);
    for (c, name) in ["red", "green", "blue"].iter().enumerate() {
        println!(
            "  {name}: {} -> {} distinct levels",
            distinct_levels(&img.channel(c)),
            distinct_levels(&enhanced.channel(c))
        );
    }

    let cfg = AugmentConfig {
        seed: 42,
        ..Default::default()
    };
    for k in 0..3u64 {
        let a = augment(&enhanced, &cfg, &mut augment_rng(cfg.seed, k));
        let again = augment(&enhanced, &cfg, &mut augment_rng(cfg.seed, k));
        let changed = a.pixels.iter().zip(&enhanced.pixels).filter(|(x, y)| x != y).count();
        println!("  augmented copy {k}: {changed} bytes changed, reproducible {}", a == again);
    }
    Ok(())
}
