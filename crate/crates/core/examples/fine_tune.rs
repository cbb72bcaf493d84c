// Pretrains on three synthetic actions, then adapts the network to two
// unseen actions with ten sequences each and compares against training from
// scratch under the same short budget.

use spmf::enhance::AheConfig;
use spmf::nn::{evaluate, fine_tune, train, DenseNet, LabeledImages, NetworkConfig, TrainConfig};
use spmf::pipeline::ImagePipeline;
use spmf::preproc::SavGolConfig;
use spmf::synthetic::{generate, SyntheticConfig};

const PRETRAIN_EPOCHS: usize = 60;
const BUDGET_EPOCHS: usize = 10;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = generate(&SyntheticConfig {
        classes: 3,
        per_class: 12,
        seed: 10,
        ..Default::default()
    })?;
    let pipeline = ImagePipeline::fit(&source, SavGolConfig::default(), Some(AheConfig::default()))?;
    let cfg = TrainConfig {
        epochs: PRETRAIN_EPOCHS,
        stop_at_train_accuracy: Some(1.0),
        ..Default::default()
    };
    let net = DenseNet::new(NetworkConfig::densenet(16, 3)?, 0)?;
    let (pretrained, report) = train(net, &pipeline.labeled(&source)?, None, &cfg)?;
    println!(
        "pretrained on 3 actions: train accuracy {:.3} after {} epochs",
        report.final_train_acc, pretrained.epoch
    );

    let target = |per_class, seed| -> spmf::Result<LabeledImages> {
        let seqs = generate(&SyntheticConfig {
            classes: 2,
            first_action: 3,
            per_class,
            seed,
            ..Default::default()
        })?;
        pipeline.labeled(&seqs)
    };
    let small = target(10, 11)?;
    let test = target(20, 12)?;
    let cfg = TrainConfig {
        epochs: BUDGET_EPOCHS,
        ..Default::default()
    };
    let (mut tuned, _) = fine_tune(pretrained.net.clone(), 2, &small, None, &cfg)?;
    let (mut scratch, _) = train(DenseNet::new(NetworkConfig::densenet(16, 2)?, 0)?, &small, None, &cfg)?;
    println!(
        "{BUDGET_EPOCHS} epochs on 2 new actions: fine-tuned {:.3}, from scratch {:.3}",
        evaluate(&mut tuned.net, &test)?.accuracy,
        evaluate(&mut scratch.net, &test)?.accuracy
    );
    Ok(())
}
