//! Mini-batch training, evaluation and head-replacement fine-tuning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::densenet::DenseNet;
use super::layers::{softmax_cross_entropy, Mode};
use super::tensor::Tensor;
use crate::encoder::SpmfImage;
use crate::error::{Error, Result};

/// Images as planar `[3, H, W]` floats in `[0, 1]`, with labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledImages {
    pub size: usize,
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    pub fn new(size: usize) -> Self {
        LabeledImages {
            size,
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_images(images: &[SpmfImage], labels: &[usize]) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Shape(format!("{} images but {} labels", images.len(), labels.len())));
        }
        let size = images.first().map_or(crate::encoder::NET_INPUT, |i| i.height);
        let mut set = LabeledImages::new(size);
        for (img, &l) in images.iter().zip(labels) {
            set.push(img, l)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, image: &SpmfImage, label: usize) -> Result<()> {
        if image.height != self.size || image.width != self.size {
            return Err(Error::Shape(format!(
                "image is {}x{}, expected {}x{}",
                image.height, image.width, self.size, self.size
            )));
        }
        for c in 0..3 {
            self.data.extend(image.pixels.iter().skip(c).step_by(3).map(|&v| v as f32 / 255.0));
        }
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        3 * self.size * self.size
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    /// Inputs and labels for the given sample indices.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f32>, Vec<usize>) {
        let mut x = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            x.extend_from_slice(self.sample(i));
        }
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn max_label(&self) -> Option<usize> {
        self.labels.iter().copied().max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop once eval-mode accuracy on the training set reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    /// Stop once validation accuracy reaches this value.
    pub stop_at_test_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 250,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
            stop_at_train_accuracy: None,
            stop_at_test_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.adam.validate()
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    /// `None` when no validation set was given.
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the training set before any update.
    pub initial_loss: f64,
    pub log: Vec<EpochLog>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_test_acc: Option<f64>,
    /// Eval-mode training accuracy of the kept weights.
    pub final_train_acc: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,train_acc,test_acc\n");
        for r in &self.log {
            let test = r.test_acc.map(|a| a.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.train_acc, test));
        }
        s
    }
}

/// Network plus optimizer state and epoch counter.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: DenseNet<f32>,
    pub optimizer: Adam<f32>,
    /// Completed epochs.
    pub epoch: usize,
}

fn epoch_seed(seed: u64, epoch: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (epoch as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ salt
}

impl Trainer {
    pub fn new(net: DenseNet<f32>, adam: AdamConfig) -> Result<Self> {
        Ok(Trainer {
            net,
            optimizer: Adam::new(adam)?,
            epoch: 0,
        })
    }

    /// One pass over `train` in a seeded random order. Returns mean loss and
    /// running (train-mode) accuracy.
    pub fn run_epoch(&mut self, train: &LabeledImages, config: &TrainConfig) -> Result<(f64, f64)> {
        let epoch = self.epoch + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch, 1)));
        self.net.set_dropout_seed(epoch_seed(config.seed, epoch, 2));
        let classes = self.net.config().num_classes;
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = train.gather(chunk);
            self.net.zero_grad();
            let logits = self.net.forward(&x, chunk.len(), Mode::Train)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &y, classes);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss {loss} at epoch {epoch}; max |logit| {}",
                    logits.iter().fold(0.0f32, |m, v| m.max(v.abs()))
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            correct += argmax_rows(&logits, classes).iter().zip(&y).filter(|(p, t)| p == t).count();
            self.net.backward(&dlogits)?;
            self.optimizer.step(&mut self.net.parameters_mut())?;
        }
        self.epoch = epoch;
        Ok((loss_sum / train.len() as f64, correct as f64 / train.len() as f64))
    }
}

pub fn argmax_rows(logits: &[f32], classes: usize) -> Vec<usize> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

fn check_labels(net: &DenseNet<f32>, set: &LabeledImages, what: &str) -> Result<()> {
    if let Some(max) = set.max_label() {
        if max >= net.config().num_classes {
            return Err(Error::Config(format!(
                "{what} label {max} exceeds the network's {} classes",
                net.config().num_classes
            )));
        }
    }
    if set.size != net.config().input_size {
        return Err(Error::Shape(format!("{what} images are {0}x{0}, network expects {1}x{1}", set.size, net.config().input_size)));
    }
    Ok(())
}

/// Eval-mode logits for every sample, in batches.
pub fn predict_logits(net: &mut DenseNet<f32>, set: &LabeledImages, batch: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(set.len() * net.config().num_classes);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, _) = set.gather(chunk);
        out.extend(net.forward(&x, chunk.len(), Mode::Eval)?);
    }
    Ok(out)
}

fn accuracy_and_loss(net: &mut DenseNet<f32>, set: &LabeledImages, batch: usize) -> Result<(f64, f64)> {
    let classes = net.config().num_classes;
    let logits = predict_logits(net, set, batch)?;
    let (loss, _) = softmax_cross_entropy(&logits, &set.labels, classes);
    let correct = argmax_rows(&logits, classes).iter().zip(&set.labels).filter(|(p, t)| p == t).count();
    Ok((correct as f64 / set.len() as f64, loss))
}

/// Trains `trainer` for up to `config.epochs` further epochs.
///
/// With a validation set the weights of the epoch with the best validation
/// accuracy (latest on ties) are restored at the end; otherwise the last
/// weights are kept. Row 0 of the log holds the pre-update loss and
/// accuracies.
pub fn train_with(
    trainer: &mut Trainer,
    train: &LabeledImages,
    test: Option<&LabeledImages>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    check_labels(&trainer.net, train, "training")?;
    if let Some(t) = test {
        check_labels(&trainer.net, t, "validation")?;
    }
    let eval_batch = config.batch_size.max(64);
    let (train_acc0, initial_loss) = accuracy_and_loss(&mut trainer.net, train, eval_batch)?;
    let test_acc0 = match test {
        Some(t) if !t.is_empty() => Some(accuracy_and_loss(&mut trainer.net, t, eval_batch)?.0),
        _ => None,
    };
    let mut log = vec![EpochLog {
        epoch: trainer.epoch,
        loss: initial_loss,
        train_acc: train_acc0,
        test_acc: test_acc0,
    }];
    let mut best = (test_acc0, trainer.epoch, trainer.net.snapshot(), trainer.optimizer.clone());
    // eval-mode training accuracy and the epoch it was measured at
    let mut train_eval = (trainer.epoch, train_acc0);

    for _ in 0..config.epochs {
        let (loss, running_acc) = trainer.run_epoch(train, config)?;
        let test_acc = match test {
            Some(t) if !t.is_empty() => Some(accuracy_and_loss(&mut trainer.net, t, eval_batch)?.0),
            _ => None,
        };
        log.push(EpochLog {
            epoch: trainer.epoch,
            loss,
            train_acc: running_acc,
            test_acc,
        });
        if let (Some(acc), Some(best_acc)) = (test_acc, best.0) {
            // later epochs win ties: same validation score, more training
            if acc >= best_acc {
                best = (test_acc, trainer.epoch, trainer.net.snapshot(), trainer.optimizer.clone());
            }
        }
        let mut stop = false;
        if let Some(target) = config.stop_at_train_accuracy {
            // the running accuracy is measured under dropout; confirm in eval mode
            if running_acc >= target {
                let acc = accuracy_and_loss(&mut trainer.net, train, eval_batch)?.0;
                train_eval = (trainer.epoch, acc);
                stop = acc >= target;
            }
        }
        if let (Some(target), Some(acc)) = (config.stop_at_test_accuracy, test_acc) {
            stop |= acc >= target;
        }
        if stop {
            break;
        }
    }

    let (best_test_acc, best_epoch) = match test {
        Some(t) if !t.is_empty() => {
            let (acc, epoch, snap, opt) = best;
            if epoch != trainer.epoch {
                trainer.net.load_tensors(&snap)?;
                trainer.optimizer = opt;
                trainer.epoch = epoch;
            }
            (acc, epoch)
        }
        _ => (None, trainer.epoch),
    };
    let final_train_acc = if train_eval.0 == trainer.epoch {
        train_eval.1
    } else {
        accuracy_and_loss(&mut trainer.net, train, eval_batch)?.0
    };
    Ok(TrainReport {
        initial_loss,
        log,
        best_epoch,
        best_test_acc,
        final_train_acc,
    })
}

/// From-scratch training of a freshly initialized network.
pub fn train(
    net: DenseNet<f32>,
    train_set: &LabeledImages,
    test_set: Option<&LabeledImages>,
    config: &TrainConfig,
) -> Result<(Trainer, TrainReport)> {
    let mut trainer = Trainer::new(net, config.adam)?;
    let report = train_with(&mut trainer, train_set, test_set, config)?;
    Ok((trainer, report))
}

/// Replaces the head with a zeroed `new_classes`-way layer, keeps all other
/// weights, and trains with fresh Adam moments under the same constants.
pub fn fine_tune(
    mut net: DenseNet<f32>,
    new_classes: usize,
    train_set: &LabeledImages,
    test_set: Option<&LabeledImages>,
    config: &TrainConfig,
) -> Result<(Trainer, TrainReport)> {
    net.reset_head(new_classes)?;
    train(net, train_set, test_set, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` for classes absent from the evaluation set.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub predictions: Vec<usize>,
}

impl EvalReport {
    pub fn from_predictions(predictions: Vec<usize>, labels: &[usize], classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("evaluation set is empty".into()));
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&p, &t) in predictions.iter().zip(labels) {
            if t >= classes || p >= classes {
                return Err(Error::Config(format!("label {t} outside {classes} classes")));
            }
            confusion[t][p] += 1;
        }
        let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        Ok(EvalReport {
            accuracy: correct as f64 / labels.len() as f64,
            per_class,
            confusion,
            predictions,
        })
    }
}

pub fn evaluate(net: &mut DenseNet<f32>, set: &LabeledImages) -> Result<EvalReport> {
    check_labels(net, set, "evaluation")?;
    let classes = net.config().num_classes;
    let logits = predict_logits(net, set, 64)?;
    EvalReport::from_predictions(argmax_rows(&logits, classes), &set.labels, classes)
}

/// Non-head tensors of `a` and `b` are bit-identical.
pub fn same_body(a: &[(String, Tensor<f32>)], b: &[(String, Tensor<f32>)]) -> bool {
    let body = |v: &[(String, Tensor<f32>)]| -> Vec<(String, Vec<u32>)> {
        v.iter()
            .filter(|(n, _)| !DenseNet::<f32>::is_head_tensor(n))
            .map(|(n, t)| (n.clone(), t.data.iter().map(|x| x.to_bits()).collect()))
            .collect()
    };
    body(a) == body(b)
}
