// Single-threaded per-sequence latency of encode, enhance and inference.

use spmf::enhance::AheConfig;
use spmf::nn::{DenseNet, NetworkConfig};
use spmf::pipeline::{benchmark, ImagePipeline};
use spmf::preproc::SavGolConfig;
use spmf::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seqs = generate(&SyntheticConfig {
        classes: 6,
        per_class: 4,
        ..Default::default()
    })?;
    let pipeline = ImagePipeline::fit(&seqs, SavGolConfig::default(), Some(AheConfig::default()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    for depth in [16, 28, 40] {
        let mut net = DenseNet::new(NetworkConfig::densenet(depth, 6)?, 0)?;
        let r = pool.install(|| benchmark(&pipeline, &mut net, &seqs, 2, 20))?;
        println!(
            "DenseNet-{depth}: {:.1} seq/s  total mean {:.2} ms p95 {:.2} ms  (encode {:.2}, enhance {:.2}, inference {:.2})",
            r.sequences_per_sec, r.total.mean_ms, r.total.p95_ms, r.encode.mean_ms, r.enhance.mean_ms, r.inference.mean_ms
        );
    }
    println!("{}", spmf::pipeline::hardware_note());
    Ok(())
}
