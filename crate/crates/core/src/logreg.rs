//! Softmax logistic regression on TF-IDF vectors, trained by seeded
//! mini-batch gradient descent with optional inverse-frequency class weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, NUM_CLASSES};
use crate::nb::argmax_label;
use crate::seed;
use crate::vectorize::TfidfVector;

#[derive(Debug, thiserror::Error)]
pub enum LrError {
    #[error("class {0} has no training documents")]
    MissingClass(Label),
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("batch size must be at least 1")]
    BadBatchSize,
    #[error("class weights must be positive and finite, got {0:?}")]
    BadClassWeights([f64; NUM_CLASSES]),
    #[error("class counts must all be nonzero, got {0:?}")]
    ZeroClassCount([usize; NUM_CLASSES]),
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrHyperParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub class_weights: [f64; NUM_CLASSES],
    pub seed: u64,
}

impl Default for LrHyperParams {
    fn default() -> Self {
        LrHyperParams {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 64,
            l2: 1e-4,
            class_weights: [1.0; NUM_CLASSES],
            seed: 0,
        }
    }
}

/// Trained softmax regression parameters over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct LrModel {
    /// Row-major 3×V.
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_CLASSES],
    pub vocab_size: usize,
    pub hyperparams: LrHyperParams,
}

/// Inverse-frequency weights `w_c = n / (3·n_c)`; balanced counts give ones.
pub fn class_weights_from_counts(
    class_counts: [usize; NUM_CLASSES],
) -> Result<[f64; NUM_CLASSES], LrError> {
    if class_counts.iter().any(|&c| c == 0) {
        return Err(LrError::ZeroClassCount(class_counts));
    }
    let n: usize = class_counts.iter().sum();
    let mut weights = [0.0; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        weights[c] = n as f64 / (NUM_CLASSES as f64 * class_counts[c] as f64);
    }
    Ok(weights)
}

/// Numerically stable softmax via max subtraction.
pub fn softmax(logits: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for c in 0..NUM_CLASSES {
        out[c] = (logits[c] - max).exp();
        sum += out[c];
    }
    for p in &mut out {
        *p /= sum;
    }
    out
}

fn logits(weights: &[f64], bias: &[f64; NUM_CLASSES], v: usize, x: &TfidfVector) -> [f64; NUM_CLASSES] {
    let mut z = *bias;
    for &(index, value) in x.pairs() {
        for c in 0..NUM_CLASSES {
            z[c] += weights[c * v + index] * value;
        }
    }
    z
}

/// Weighted cross-entropy plus L2 penalty over `examples`, with its exact
/// gradient. Loss is `(1/m)·Σ w_yᵢ·(−ln p_yᵢ) + (l2/2)·‖W‖²`; the bias
/// carries no penalty. Exposed for finite-difference verification.
pub fn lr_loss_and_grad(
    examples: &[&(TfidfVector, Label)],
    weights: &[f64],
    bias: &[f64; NUM_CLASSES],
    vocab_size: usize,
    l2: f64,
    class_weights: &[f64; NUM_CLASSES],
) -> (f64, Vec<f64>, [f64; NUM_CLASSES]) {
    let v = vocab_size;
    let m = examples.len() as f64;
    let mut grad_w = vec![0.0f64; NUM_CLASSES * v];
    let mut grad_b = [0.0f64; NUM_CLASSES];
    let mut loss = 0.0f64;
    for (x, label) in examples.iter() {
        let p = softmax(logits(weights, bias, v, x));
        let w = class_weights[label.index()];
        loss += w * -p[label.index()].ln();
        for c in 0..NUM_CLASSES {
            let delta = w * (p[c] - if c == label.index() { 1.0 } else { 0.0 });
            grad_b[c] += delta;
            for &(index, value) in x.pairs() {
                grad_w[c * v + index] += delta * value;
            }
        }
    }
    loss /= m;
    for g in &mut grad_w {
        *g /= m;
    }
    for g in &mut grad_b {
        *g /= m;
    }
    if l2 != 0.0 {
        let mut penalty = 0.0;
        for (g, &w) in grad_w.iter_mut().zip(weights) {
            *g += l2 * w;
            penalty += w * w;
        }
        loss += 0.5 * l2 * penalty;
    }
    (loss, grad_w, grad_b)
}

/// Train from zero-initialized parameters.
///
/// Each epoch shuffles example order with a generator keyed on
/// `(seed, epoch)` and applies one gradient step per mini-batch. The
/// returned history holds the mean weighted loss of each epoch, measured at
/// each batch's forward pass.
pub fn lr_train(
    data: &[(TfidfVector, Label)],
    vocab_size: usize,
    hp: &LrHyperParams,
) -> Result<(LrModel, Vec<f64>), LrError> {
    if !(hp.learning_rate > 0.0) {
        return Err(LrError::BadLearningRate(hp.learning_rate));
    }
    if hp.batch_size < 1 {
        return Err(LrError::BadBatchSize);
    }
    if hp.class_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(LrError::BadClassWeights(hp.class_weights));
    }
    let mut present = [false; NUM_CLASSES];
    for (_, label) in data {
        present[label.index()] = true;
    }
    for label in Label::ALL {
        if !present[label.index()] {
            return Err(LrError::MissingClass(label));
        }
    }

    let v = vocab_size;
    let n = data.len();
    let mut weights = vec![0.0f64; NUM_CLASSES * v];
    let mut bias = [0.0f64; NUM_CLASSES];
    let mut history = Vec::with_capacity(hp.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch: Vec<&(TfidfVector, Label)> = Vec::with_capacity(hp.batch_size);

    for epoch in 0..hp.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(hp.seed, &[epoch as u64]));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for chunk in order.chunks(hp.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &data[i]));
            let (loss, grad_w, grad_b) =
                lr_loss_and_grad(&batch, &weights, &bias, v, hp.l2, &hp.class_weights);
            epoch_loss += loss * chunk.len() as f64;
            for (w, g) in weights.iter_mut().zip(&grad_w) {
                *w -= hp.learning_rate * g;
            }
            for c in 0..NUM_CLASSES {
                bias[c] -= hp.learning_rate * grad_b[c];
            }
        }
        // Per-batch losses already include the L2 term, so the epoch mean
        // re-weights them back to a per-example average.
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() {
            return Err(LrError::Diverged { epoch });
        }
        history.push(epoch_loss);
    }
    Ok((
        LrModel {
            weights,
            bias,
            vocab_size: v,
            hyperparams: hp.clone(),
        },
        history,
    ))
}

/// Softmax probabilities and argmax label, ties to the lowest class index.
pub fn lr_predict(model: &LrModel, vector: &TfidfVector) -> (Label, [f64; NUM_CLASSES]) {
    let probabilities = softmax(logits(
        &model.weights,
        &model.bias,
        model.vocab_size,
        vector,
    ));
    (argmax_label(&probabilities), probabilities)
}
