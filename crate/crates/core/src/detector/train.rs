//! L2-regularized hinge loss minimized by plain SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DetectorError, LinearModel};
use crate::hog::{HogConfig, HogDescriptor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 0.01,
            l2_lambda: 1e-3,
            seed: 7,
        }
    }
}

fn common_config(
    positives: &[HogDescriptor],
    negatives: &[HogDescriptor],
) -> Result<HogConfig, DetectorError> {
    if positives.is_empty() {
        return Err(DetectorError::EmptyClass("positive"));
    }
    if negatives.is_empty() {
        return Err(DetectorError::EmptyClass("negative"));
    }
    let config = positives[0].config;
    let len = positives[0].values.len();
    if positives
        .iter()
        .chain(negatives)
        .any(|d| d.config != config || d.values.len() != len)
    {
        return Err(DetectorError::ConfigMismatch);
    }
    Ok(config)
}

fn decision(weights: &[f64], bias: f64, values: &[f64]) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() + bias
}

/// Trains a linear face/non-face classifier. Single-threaded and fully
/// determined by the inputs, hyperparameters and seed.
pub fn train_linear(
    positives: &[HogDescriptor],
    negatives: &[HogDescriptor],
    params: &TrainParams,
) -> Result<LinearModel, DetectorError> {
    let config = common_config(positives, negatives)?;
    let dim = positives[0].values.len();
    let examples: Vec<(&[f64], f64)> = positives
        .iter()
        .map(|d| (d.values.as_slice(), 1.0))
        .chain(negatives.iter().map(|d| (d.values.as_slice(), -1.0)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let lr = params.learning_rate;
    let shrink = 1.0 - lr * params.l2_lambda;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = examples[i];
            let margin = y * decision(&weights, bias, x);
            weights.iter_mut().for_each(|w| *w *= shrink);
            if margin < 1.0 {
                for (w, v) in weights.iter_mut().zip(x) {
                    *w += lr * y * v;
                }
                bias += lr * y;
            }
        }
    }
    Ok(LinearModel {
        weights,
        bias,
        config,
    })
}

/// Regularized objective `lambda/2 |w|^2 + mean hinge`.
pub fn hinge_loss(
    model: &LinearModel,
    positives: &[HogDescriptor],
    negatives: &[HogDescriptor],
    l2_lambda: f64,
) -> f64 {
    let n = (positives.len() + negatives.len()).max(1) as f64;
    let hinge: f64 = positives
        .iter()
        .map(|d| (1.0 - decision(&model.weights, model.bias, &d.values)).max(0.0))
        .chain(
            negatives
                .iter()
                .map(|d| (1.0 + decision(&model.weights, model.bias, &d.values)).max(0.0)),
        )
        .sum();
    let reg: f64 = model.weights.iter().map(|w| w * w).sum();
    0.5 * l2_lambda * reg + hinge / n
}

/// Fraction of examples on the correct side of zero.
pub fn accuracy(model: &LinearModel, positives: &[HogDescriptor], negatives: &[HogDescriptor]) -> f64 {
    let correct = positives
        .iter()
        .filter(|d| decision(&model.weights, model.bias, &d.values) > 0.0)
        .count()
        + negatives
            .iter()
            .filter(|d| decision(&model.weights, model.bias, &d.values) <= 0.0)
            .count();
    correct as f64 / (positives.len() + negatives.len()).max(1) as f64
}
