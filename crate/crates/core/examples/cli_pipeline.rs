// The command layer behind the `spmf` binary, driven from a config value:
// encode a canonical JSON corpus, train, evaluate and benchmark.

use spmf::pipeline::{cmd_benchmark, cmd_encode, cmd_eval, cmd_train, PipelineConfig, TrainSettings, CHECKPOINT_FILE};
use spmf::skeleton::write_canonical_file;
use spmf::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let data = root.path().join("data");
    std::fs::create_dir_all(&data)?;
    let seqs = generate(&SyntheticConfig {
        per_class: 6,
        ..Default::default()
    })?;
    for (i, s) in seqs.iter().enumerate() {
        write_canonical_file(&data.join(format!("seq{i:03}.json")), s)?;
    }

    let images = root.path().join("images");
    let mut cfg = PipelineConfig {
        data: Some(data),
        out: images.clone(),
        augment_copies: 1,
        train: TrainSettings {
            epochs: 15,
            ..Default::default()
        },
        ..Default::default()
    };
    let encoded = cmd_encode(&cfg)?;
    println!(
        "encode: {} images, classes {:?}, {} failures",
        encoded.rows.len(),
        encoded.class_names,
        encoded.failures.len()
    );

    let model = root.path().join("model");
    cfg.images = Some(images);
    cfg.out = model.clone();
    let trained = cmd_train(&cfg)?;
    println!(
        "train: {} epochs logged, kept epoch {}, test accuracy {:?}",
        trained.report.log.len() - 1,
        trained.report.best_epoch,
        trained.eval.as_ref().map(|e| e.accuracy)
    );
    for entry in std::fs::read_dir(&model)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }

    cfg.checkpoint = Some(model.join(CHECKPOINT_FILE));
    cfg.out = root.path().join("eval");
    println!("eval: accuracy {:.3}", cmd_eval(&cfg)?.accuracy);

    cfg.out = root.path().join("bench");
    cfg.warmup = 2;
    cfg.runs = 10;
    let bench = cmd_benchmark(&cfg)?;
    println!("benchmark: {:.2} ms mean per sequence", bench.total.mean_ms);
    Ok(())
}
