// Trains DenseNet-16 on a small synthetic corpus, saves a checkpoint, reloads
// it and evaluates on held-out sequences.

use spmf::enhance::AheConfig;
use spmf::nn::{evaluate, train, Checkpoint, DenseNet, NetworkConfig, TrainConfig};
use spmf::pipeline::ImagePipeline;
use spmf::preproc::SavGolConfig;
use spmf::synthetic::{generate, SyntheticConfig};

const CLASSES: usize = 3;
const EPOCHS: usize = 40;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = |per_class, seed| {
        generate(&SyntheticConfig {
            classes: CLASSES,
            per_class,
            seed,
            ..Default::default()
        })
    };
    let train_seqs = corpus(8, 1)?;
    let test_seqs = corpus(5, 2)?;
    let pipeline = ImagePipeline::fit(&train_seqs, SavGolConfig::default(), Some(AheConfig::default()))?;
    let train_set = pipeline.labeled(&train_seqs)?;
    let test_set = pipeline.labeled(&test_seqs)?;

    let net = DenseNet::new(NetworkConfig::densenet(16, CLASSES)?, 0)?;
    println!("DenseNet-16: {} parameters", net.parameter_count());
    let cfg = TrainConfig {
        epochs: EPOCHS,
        stop_at_test_accuracy: Some(1.0),
        ..Default::default()
    };
    let (trainer, report) = train(net, &train_set, Some(&test_set), &cfg)?;
    for row in report.log.iter().step_by(5) {
        println!(
            "epoch {:3}  loss {:.4}  train {:.3}  test {:.3}",
            row.epoch,
            row.loss,
            row.train_acc,
            row.test_acc.unwrap_or(f64::NAN)
        );
    }
    println!("kept epoch {} with test accuracy {:?}", report.best_epoch, report.best_test_acc);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    let names = SyntheticConfig {
        classes: CLASSES,
        ..Default::default()
    }
    .class_names();
    Checkpoint::from_trainer(&trainer, *pipeline.stats(), names, pipeline.encoding_info(), 0)?.save(&path)?;

    let ck = Checkpoint::load(&path)?;
    let mut net = ck.network()?;
    let eval = evaluate(&mut net, &test_set)?;
    println!("reloaded checkpoint: accuracy {:.3}", eval.accuracy);
    for (c, row) in eval.confusion.iter().enumerate() {
        println!("  {:8} {:?}", ck.class_names[c], row);
    }
    Ok(())
}
