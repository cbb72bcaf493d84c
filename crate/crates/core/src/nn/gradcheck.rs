//! Central finite-difference check of the network's analytic gradients.

use super::densenet::DenseNet;
use super::layers::{softmax_cross_entropy, Mode};
use crate::error::Result;

/// Worst relative error `|a − n| / max(|a|, |n|, 1e-6)` per trainable tensor,
/// for the mean cross-entropy of one train-mode batch. Use with dropout 0 so
/// repeated forward passes are deterministic.
pub fn gradient_check(net: &mut DenseNet<f64>, x: &[f64], labels: &[usize], h: f64) -> Result<Vec<(String, f64)>> {
    let n = labels.len();
    let classes = net.config().num_classes;
    let loss = |net: &mut DenseNet<f64>| -> Result<f64> {
        let logits = net.forward(x, n, Mode::Train)?;
        Ok(softmax_cross_entropy(&logits, labels, classes).0)
    };
    net.zero_grad();
    let logits = net.forward(x, n, Mode::Train)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, labels, classes);
    net.backward(&dlogits)?;
    let analytic: Vec<(String, Vec<f64>)> = net
        .named_tensors()
        .into_iter()
        .filter(|(_, t)| t.requires_grad())
        .map(|(n, t)| (n, t.grad().to_vec()))
        .collect();
    let mut report = Vec::with_capacity(analytic.len());
    for (idx, (name, grad)) in analytic.into_iter().enumerate() {
        let mut worst = 0.0f64;
        for (i, &a) in grad.iter().enumerate() {
            let orig = param(net, idx)[i];
            param(net, idx)[i] = orig + h;
            let lp = loss(net)?;
            param(net, idx)[i] = orig - h;
            let lm = loss(net)?;
            param(net, idx)[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
        report.push((name, worst));
    }
    Ok(report)
}

fn param(net: &mut DenseNet<f64>, idx: usize) -> &mut Vec<f64> {
    &mut net.parameters_mut().swap_remove(idx).data
}
