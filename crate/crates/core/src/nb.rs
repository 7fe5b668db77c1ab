//! Multinomial Naïve Bayes with Laplace smoothing, computed in log space.

use crate::corpus::{Label, NUM_CLASSES};
use crate::vectorize::{CountVector, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum NbError {
    #[error("smoothing constant must be positive, got {0}")]
    BadAlpha(f64),
    #[error("class {0} has no training documents")]
    MissingClass(Label),
}

/// Trained Naïve Bayes parameters over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct NbModel {
    /// ln of empirical class frequency, one per class.
    pub class_log_prior: [f64; NUM_CLASSES],
    /// Row-major 3×V: ln of the smoothed token probability per class.
    pub token_log_likelihood: Vec<f64>,
    pub alpha: f64,
    pub vocab_size: usize,
}

impl NbModel {
    pub fn log_likelihood(&self, class: usize, token: usize) -> f64 {
        self.token_log_likelihood[class * self.vocab_size + token]
    }
}

/// Estimate priors and smoothed token likelihoods in one pass.
///
/// `class_log_prior_c = ln(n_c / n)`,
/// `token_log_likelihood_{c,t} = ln((count_{c,t} + alpha) / (total_c + alpha·V))`.
pub fn nb_train(
    vectors: &[(CountVector, Label)],
    alpha: f64,
    vocab: &Vocabulary,
) -> Result<NbModel, NbError> {
    if !(alpha > 0.0) {
        return Err(NbError::BadAlpha(alpha));
    }
    let v = vocab.size();
    let mut doc_counts = [0usize; NUM_CLASSES];
    let mut token_counts = vec![0.0f64; NUM_CLASSES * v];
    let mut total_counts = [0.0f64; NUM_CLASSES];
    for (vector, label) in vectors {
        let c = label.index();
        doc_counts[c] += 1;
        for &(index, count) in vector.pairs() {
            token_counts[c * v + index] += count as f64;
            total_counts[c] += count as f64;
        }
    }
    for label in Label::ALL {
        if doc_counts[label.index()] == 0 {
            return Err(NbError::MissingClass(label));
        }
    }
    let n = vectors.len() as f64;
    let mut class_log_prior = [0.0f64; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        class_log_prior[c] = (doc_counts[c] as f64 / n).ln();
    }
    let mut token_log_likelihood = vec![0.0f64; NUM_CLASSES * v];
    for c in 0..NUM_CLASSES {
        let denominator = total_counts[c] + alpha * v as f64;
        for t in 0..v {
            token_log_likelihood[c * v + t] =
                ((token_counts[c * v + t] + alpha) / denominator).ln();
        }
    }
    Ok(NbModel {
        class_log_prior,
        token_log_likelihood,
        alpha,
        vocab_size: v,
    })
}

/// Score all classes and pick the argmax, lowest class index on ties.
///
/// Scores are log-posteriors up to a shared constant; an empty vector (all
/// tokens out of vocabulary) falls back to the prior argmax.
pub fn nb_predict(model: &NbModel, vector: &CountVector) -> (Label, [f64; NUM_CLASSES]) {
    let mut scores = model.class_log_prior;
    for &(index, count) in vector.pairs() {
        for (c, score) in scores.iter_mut().enumerate() {
            *score += count as f64 * model.log_likelihood(c, index);
        }
    }
    (argmax_label(&scores), scores)
}

/// First index achieving the maximum, so ties resolve to the lowest class.
pub fn argmax_label(scores: &[f64; NUM_CLASSES]) -> Label {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    Label::from_index(best).expect("class index in range")
}
