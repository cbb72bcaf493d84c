// Smooths a skeleton sequence and encodes it as a pose-motion color image.

use spmf::encoder::SpmfEncoder;
use spmf::preproc::{compute_stats, savgol_coefficients, smooth_sequence, SavGolConfig};
use spmf::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seqs = generate(&SyntheticConfig::default())?;
    let savgol = SavGolConfig::default();
    println!("smoothing weights: {:?}", savgol_coefficients(&savgol)?);

    let smoothed = seqs.iter().map(|s| smooth_sequence(s, &savgol)).collect::<spmf::Result<Vec<_>>>()?;
    let stats = compute_stats(&smoothed)?;
    println!("stats: c_min {:.3?} c_max {:.3?} d_max {:.3}", stats.c_min, stats.c_max, stats.d_max);

    let encoder = SpmfEncoder::new(stats, smoothed[0].joint_count())?;
    let seq = &smoothed[0];
    let raw = encoder.assemble_raw(seq)?;
    println!("{} frames -> raw image {}x{} (height x width)", seq.len(), raw.height, raw.width);
    let img = encoder.assemble(seq)?;
    println!("network input {}x{}", img.height, img.width);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("spmf.png");
    img.write_png(&path)?;
    raw.write_ppm(&dir.path().join("spmf_raw.ppm"))?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
