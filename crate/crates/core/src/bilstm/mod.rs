//! From-scratch bidirectional LSTM classifier: trained embeddings, one or
//! more stacked BiLSTM layers, mean pooling over non-PAD positions and a
//! softmax head, trained end-to-end by backpropagation through time.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, NUM_CLASSES};
use crate::logreg::softmax;
use crate::nb::argmax_label;
use crate::seed;
use crate::vectorize::TokenSequence;

mod cell;

pub use cell::{sigmoid, DirectionParams};

use cell::{backward_direction, run_direction, DirectionCache};

/// Global gradient-norm ceiling applied before every update.
pub const CLIP_NORM: f64 = 5.0;

const TAG_INIT: u64 = 1;
const TAG_SPLIT: u64 = 2;
const TAG_EPOCH: u64 = 3;

#[derive(Debug, thiserror::Error)]
pub enum BilstmError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("sequence length {got} does not match configured max_len {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("batch and label lengths differ: {batch} vs {labels}")]
    LabelMismatch { batch: usize, labels: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("class {0} missing from the {1} split")]
    MissingClass(Label, &'static str),
    #[error("degenerate validation split: {0}")]
    DegenerateSplit(String),
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("non-finite loss")]
    NonFiniteLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilstmConfig {
    /// Hidden units per stacked BiLSTM layer, e.g. `[128]` or `[64, 32, 16]`.
    pub hidden_sizes: Vec<usize>,
    pub embedding_dim: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping; 0 stops
    /// at the first non-improvement.
    pub patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub max_len: usize,
    pub class_weights: [f64; NUM_CLASSES],
}

impl Default for BilstmConfig {
    fn default() -> Self {
        BilstmConfig {
            hidden_sizes: vec![16],
            embedding_dim: 64,
            batch_size: 64,
            max_epochs: 20,
            patience: 2,
            learning_rate: 0.05,
            seed: 0,
            max_len: 200,
            class_weights: [1.0; NUM_CLASSES],
        }
    }
}

impl BilstmConfig {
    fn validate(&self) -> Result<(), BilstmError> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(BilstmError::BadConfig(format!(
                "hidden_sizes must be non-empty positive, got {:?}",
                self.hidden_sizes
            )));
        }
        if self.embedding_dim == 0 {
            return Err(BilstmError::BadConfig("embedding_dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(BilstmError::BadConfig("batch_size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(BilstmError::BadConfig("max_epochs must be positive".into()));
        }
        if self.max_len == 0 {
            return Err(BilstmError::BadConfig("max_len must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(BilstmError::BadConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(BilstmError::BadConfig(format!(
                "class_weights must be positive finite, got {:?}",
                self.class_weights
            )));
        }
        Ok(())
    }
}

/// Full parameter set; all tensors row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BilstmModel {
    /// (V+2)×E; row 0 is PAD and stays zero, row 1 is UNK.
    pub embedding: Vec<f64>,
    /// Per stacked layer: `[forward, backward]` direction parameters.
    pub layers: Vec<[DirectionParams; 2]>,
    /// 3×(2·H_last).
    pub head_w: Vec<f64>,
    pub head_b: [f64; NUM_CLASSES],
    pub config: BilstmConfig,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    /// Number of epochs actually run (≤ max_epochs).
    pub stopped_epoch: usize,
    /// 0-based index of the epoch with minimum validation loss.
    pub best_epoch: usize,
}

/// Gradients shaped exactly like the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embedding: Vec<f64>,
    pub layers: Vec<[DirectionParams; 2]>,
    pub head_w: Vec<f64>,
    pub head_b: [f64; NUM_CLASSES],
}

impl Gradients {
    fn zeros_like(model: &BilstmModel) -> Self {
        Gradients {
            embedding: vec![0.0; model.embedding.len()],
            layers: model
                .layers
                .iter()
                .map(|[f, b]| {
                    [
                        DirectionParams::zeros(f.input_dim, f.hidden),
                        DirectionParams::zeros(b.input_dim, b.hidden),
                    ]
                })
                .collect(),
            head_w: vec![0.0; model.head_w.len()],
            head_b: [0.0; NUM_CLASSES],
        }
    }

    fn for_each(&self, mut f: impl FnMut(f64)) {
        self.embedding.iter().for_each(|&v| f(v));
        for [fwd, bwd] in &self.layers {
            for dir in [fwd, bwd] {
                dir.w.iter().for_each(|&v| f(v));
                dir.u.iter().for_each(|&v| f(v));
                dir.b.iter().for_each(|&v| f(v));
            }
        }
        self.head_w.iter().for_each(|&v| f(v));
        self.head_b.iter().for_each(|&v| f(v));
    }

    pub fn global_norm(&self) -> f64 {
        let mut sum = 0.0;
        self.for_each(|v| sum += v * v);
        sum.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.embedding {
            *v *= factor;
        }
        for [fwd, bwd] in &mut self.layers {
            for dir in [fwd, bwd] {
                dir.w.iter_mut().for_each(|v| *v *= factor);
                dir.u.iter_mut().for_each(|v| *v *= factor);
                dir.b.iter_mut().for_each(|v| *v *= factor);
            }
        }
        for v in &mut self.head_w {
            *v *= factor;
        }
        for v in &mut self.head_b {
            *v *= factor;
        }
    }

    /// Flattened copy in the model's canonical parameter order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each(|v| out.push(v));
        out
    }
}

/// Scale gradients down to `max_norm` when they exceed it; returns the
/// pre-clip norm.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

impl BilstmModel {
    pub fn last_hidden(&self) -> usize {
        self.layers.last().map(|[f, _]| f.hidden).unwrap_or(0)
    }

    /// Width of the pooled document representation (2·H_last).
    pub fn repr_width(&self) -> usize {
        2 * self.last_hidden()
    }

    pub fn param_count(&self) -> usize {
        self.embedding.len()
            + self
                .layers
                .iter()
                .map(|[f, b]| f.param_count() + b.param_count())
                .sum::<usize>()
            + self.head_w.len()
            + NUM_CLASSES
    }

    /// Flattened copy of all parameters in canonical order: embedding,
    /// then per layer forward and backward (w, u, b each), then the head.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.embedding);
        for [fwd, bwd] in &self.layers {
            for dir in [fwd, bwd] {
                out.extend_from_slice(&dir.w);
                out.extend_from_slice(&dir.u);
                out.extend_from_slice(&dir.b);
            }
        }
        out.extend_from_slice(&self.head_w);
        out.extend_from_slice(&self.head_b);
        out
    }

    /// Overwrite all parameters from a flat slice in canonical order.
    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[at..at + dst.len()]);
            at += dst.len();
        };
        take(&mut self.embedding);
        for [fwd, bwd] in &mut self.layers {
            for dir in [fwd, bwd] {
                take(&mut dir.w);
                take(&mut dir.u);
                take(&mut dir.b);
            }
        }
        take(&mut self.head_w);
        take(&mut self.head_b);
    }

    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (p, g) in self.embedding.iter_mut().zip(&grads.embedding) {
            *p -= learning_rate * g;
        }
        for (layer, glayer) in self.layers.iter_mut().zip(&grads.layers) {
            for d in 0..2 {
                for (p, g) in layer[d].w.iter_mut().zip(&glayer[d].w) {
                    *p -= learning_rate * g;
                }
                for (p, g) in layer[d].u.iter_mut().zip(&glayer[d].u) {
                    *p -= learning_rate * g;
                }
                for (p, g) in layer[d].b.iter_mut().zip(&glayer[d].b) {
                    *p -= learning_rate * g;
                }
            }
        }
        for (p, g) in self.head_w.iter_mut().zip(&grads.head_w) {
            *p -= learning_rate * g;
        }
        for c in 0..NUM_CLASSES {
            self.head_b[c] -= learning_rate * grads.head_b[c];
        }
    }
}

/// Deterministic Xavier-uniform initialization.
///
/// Embedding and gate matrices draw from U[−s, s] with
/// s = sqrt(6/(fan_in+fan_out)) per matrix; biases are zero except the
/// forget gate's (1.0); the PAD embedding row is zeroed; the head starts
/// at zero so an untrained model scores every class identically.
pub fn init_params(config: &BilstmConfig, vocab_size: usize) -> Result<BilstmModel, BilstmError> {
    config.validate()?;
    if vocab_size == 0 {
        return Err(BilstmError::BadConfig("vocab_size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(config.seed, &[TAG_INIT]));
    let e = config.embedding_dim;
    let rows = vocab_size + 2;

    let s = (6.0 / (rows + e) as f64).sqrt();
    let mut embedding: Vec<f64> = (0..rows * e).map(|_| rng.random_range(-s..=s)).collect();
    embedding[..e].fill(0.0);

    let mut layers = Vec::with_capacity(config.hidden_sizes.len());
    let mut input_dim = e;
    for &hidden in &config.hidden_sizes {
        let mut pair = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut dir = DirectionParams::zeros(input_dim, hidden);
            let sw = (6.0 / (input_dim + 4 * hidden) as f64).sqrt();
            dir.w.iter_mut().for_each(|v| *v = rng.random_range(-sw..=sw));
            let su = (6.0 / (hidden + 4 * hidden) as f64).sqrt();
            dir.u.iter_mut().for_each(|v| *v = rng.random_range(-su..=su));
            dir.b[hidden..2 * hidden].fill(1.0);
            pair.push(dir);
        }
        let bwd = pair.pop().expect("two directions");
        let fwd = pair.pop().expect("two directions");
        layers.push([fwd, bwd]);
        input_dim = 2 * hidden;
    }

    Ok(BilstmModel {
        embedding,
        layers,
        head_w: vec![0.0; NUM_CLASSES * input_dim],
        head_b: [0.0; NUM_CLASSES],
        config: config.clone(),
        vocab_size,
    })
}

struct LayerTrace {
    inputs: Vec<Vec<f64>>,
    fwd: DirectionCache,
    bwd: DirectionCache,
}

struct DocTrace {
    layers: Vec<LayerTrace>,
    repr: Vec<f64>,
    logits: [f64; NUM_CLASSES],
    len: usize,
}

fn forward_one(model: &BilstmModel, seq: &TokenSequence) -> Result<DocTrace, BilstmError> {
    if seq.ids.len() != model.config.max_len {
        return Err(BilstmError::LengthMismatch {
            expected: model.config.max_len,
            got: seq.ids.len(),
        });
    }
    let e = model.config.embedding_dim;
    let len = seq.true_length.min(seq.ids.len());
    let mut inputs: Vec<Vec<f64>> = seq.ids[..len]
        .iter()
        .map(|&id| {
            let row = id as usize * e;
            model.embedding[row..row + e].to_vec()
        })
        .collect();

    let mut layers = Vec::with_capacity(model.layers.len());
    for [fwd_params, bwd_params] in &model.layers {
        let fwd = run_direction(fwd_params, &inputs, false);
        let bwd = run_direction(bwd_params, &inputs, true);
        let next: Vec<Vec<f64>> = (0..len)
            .map(|t| {
                let mut v = Vec::with_capacity(2 * fwd_params.hidden);
                v.extend_from_slice(&fwd.h_by_pos[t]);
                v.extend_from_slice(&bwd.h_by_pos[t]);
                v
            })
            .collect();
        layers.push(LayerTrace { inputs, fwd, bwd });
        inputs = next;
    }

    // Mean pooling over non-PAD positions; a zero-length sequence (never
    // produced by the encoder) degrades to a zero representation.
    let width = model.repr_width();
    let mut repr = vec![0.0; width];
    if len > 0 {
        for t in 0..len {
            for j in 0..width {
                repr[j] += inputs[t][j];
            }
        }
        let scale = 1.0 / len as f64;
        repr.iter_mut().for_each(|v| *v *= scale);
    }

    let mut logits = model.head_b;
    for c in 0..NUM_CLASSES {
        let row = &model.head_w[c * width..(c + 1) * width];
        for (w, r) in row.iter().zip(&repr) {
            logits[c] += w * r;
        }
    }
    Ok(DocTrace {
        layers,
        repr,
        logits,
        len,
    })
}

/// Logits for a batch of sequences.
pub fn forward(model: &BilstmModel, batch: &[&TokenSequence]) -> Result<Vec<[f64; NUM_CLASSES]>, BilstmError> {
    if batch.is_empty() {
        return Err(BilstmError::EmptyBatch);
    }
    batch.iter().map(|seq| Ok(forward_one(model, seq)?.logits)).collect()
}

/// Mean-pooled document representation (2·H_last wide).
pub fn document_representation(model: &BilstmModel, seq: &TokenSequence) -> Result<Vec<f64>, BilstmError> {
    Ok(forward_one(model, seq)?.repr)
}

/// Class-weighted mean cross-entropy and exact gradients for every
/// parameter, by full backpropagation through time.
pub fn loss_and_grads(
    model: &BilstmModel,
    batch: &[&TokenSequence],
    labels: &[Label],
    class_weights: &[f64; NUM_CLASSES],
) -> Result<(f64, Gradients), BilstmError> {
    if batch.is_empty() {
        return Err(BilstmError::EmptyBatch);
    }
    if batch.len() != labels.len() {
        return Err(BilstmError::LabelMismatch {
            batch: batch.len(),
            labels: labels.len(),
        });
    }
    let m = batch.len() as f64;
    let width = model.repr_width();
    let e = model.config.embedding_dim;
    let mut grads = Gradients::zeros_like(model);
    let mut loss = 0.0;

    for (seq, &label) in batch.iter().zip(labels) {
        let trace = forward_one(model, seq)?;
        let p = softmax(trace.logits);
        let w = class_weights[label.index()];
        loss += w * -p[label.index()].ln() / m;

        let mut dlogits = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let y = if c == label.index() { 1.0 } else { 0.0 };
            dlogits[c] = w * (p[c] - y) / m;
        }
        for c in 0..NUM_CLASSES {
            grads.head_b[c] += dlogits[c];
            let row = &mut grads.head_w[c * width..(c + 1) * width];
            for (g, r) in row.iter_mut().zip(&trace.repr) {
                *g += dlogits[c] * r;
            }
        }
        let mut drepr = vec![0.0; width];
        for c in 0..NUM_CLASSES {
            let row = &model.head_w[c * width..(c + 1) * width];
            for (d, wv) in drepr.iter_mut().zip(row) {
                *d += dlogits[c] * wv;
            }
        }
        if trace.len == 0 {
            continue;
        }
        let pool = 1.0 / trace.len as f64;
        let mut dconcat: Vec<Vec<f64>> =
            vec![drepr.iter().map(|d| d * pool).collect(); trace.len];

        for (layer_index, layer) in trace.layers.iter().enumerate().rev() {
            let params = &model.layers[layer_index];
            let hidden = params[0].hidden;
            let dh_fwd: Vec<Vec<f64>> = dconcat.iter().map(|d| d[..hidden].to_vec()).collect();
            let dh_bwd: Vec<Vec<f64>> = dconcat.iter().map(|d| d[hidden..].to_vec()).collect();
            let mut dx = vec![vec![0.0; params[0].input_dim]; trace.len];
            backward_direction(
                &params[0],
                &layer.fwd,
                &layer.inputs,
                &dh_fwd,
                &mut grads.layers[layer_index][0],
                &mut dx,
            );
            backward_direction(
                &params[1],
                &layer.bwd,
                &layer.inputs,
                &dh_bwd,
                &mut grads.layers[layer_index][1],
                &mut dx,
            );
            dconcat = dx;
        }
        for (t, dxt) in dconcat.iter().enumerate() {
            let row = seq.ids[t] as usize * e;
            for (g, d) in grads.embedding[row..row + e].iter_mut().zip(dxt) {
                *g += d;
            }
        }
    }
    if !loss.is_finite() {
        return Err(BilstmError::NonFiniteLoss);
    }
    Ok((loss, grads))
}

/// Softmax probabilities and argmax labels for a batch; ties resolve to the
/// lowest class index.
pub fn bilstm_predict(
    model: &BilstmModel,
    batch: &[&TokenSequence],
) -> Result<Vec<(Label, [f64; NUM_CLASSES])>, BilstmError> {
    let logits = forward(model, batch)?;
    Ok(logits
        .into_iter()
        .map(|z| {
            let p = softmax(z);
            (argmax_label(&p), p)
        })
        .collect())
}

fn stratified_split(
    data: &[(TokenSequence, Label)],
    val_fraction: f64,
    base_seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), BilstmError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(BilstmError::DegenerateSplit(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for label in Label::ALL {
        let mut ids: Vec<usize> = data
            .iter()
            .enumerate()
            .filter(|(_, (_, l))| *l == label)
            .map(|(i, _)| i)
            .collect();
        if ids.is_empty() {
            return Err(BilstmError::MissingClass(label, "input"));
        }
        if ids.len() < 2 {
            return Err(BilstmError::DegenerateSplit(format!(
                "class {label} has {} document(s); need at least 2 to split",
                ids.len()
            )));
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::mix(base_seed, &[TAG_SPLIT, label.index() as u64]));
        ids.shuffle(&mut rng);
        let mut n_val = ((ids.len() as f64) * val_fraction).floor() as usize;
        n_val = n_val.clamp(1, ids.len() - 1);
        val.extend_from_slice(&ids[..n_val]);
        train.extend_from_slice(&ids[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn evaluate_split(
    model: &BilstmModel,
    data: &[(TokenSequence, Label)],
    ids: &[usize],
    class_weights: &[f64; NUM_CLASSES],
) -> Result<(f64, f64), BilstmError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in ids {
        let (seq, label) = &data[i];
        let trace = forward_one(model, seq)?;
        let p = softmax(trace.logits);
        loss += class_weights[label.index()] * -p[label.index()].ln();
        if argmax_label(&p) == *label {
            correct += 1;
        }
    }
    Ok((loss / ids.len() as f64, correct as f64 / ids.len() as f64))
}

/// Train with early stopping on a stratified validation split.
///
/// Each epoch shuffles with a generator keyed on `(seed, epoch)`, applies
/// one clipped plain-SGD step per mini-batch, then scores the validation
/// split. Training stops after `patience` consecutive epochs without strict
/// validation-loss improvement (patience 0 stops at the first) or at
/// `max_epochs`; the returned model is the best epoch's snapshot.
pub fn bilstm_train(
    data: &[(TokenSequence, Label)],
    vocab_size: usize,
    config: &BilstmConfig,
    val_fraction: f64,
) -> Result<(BilstmModel, TrainingHistory), BilstmError> {
    config.validate()?;
    let (train_ids, val_ids) = stratified_split(data, val_fraction, config.seed)?;
    for (name, ids) in [("training", &train_ids), ("validation", &val_ids)] {
        let mut present = [false; NUM_CLASSES];
        for &i in ids.iter() {
            present[data[i].1.index()] = true;
        }
        for label in Label::ALL {
            if !present[label.index()] {
                return Err(BilstmError::MissingClass(label, name));
            }
        }
    }

    let mut model = init_params(config, vocab_size)?;
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut streak = 0usize;
    let mut epochs = Vec::new();
    let mut order = train_ids.clone();

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(config.seed, &[TAG_EPOCH, epoch as u64]));
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TokenSequence> = chunk.iter().map(|&i| &data[i].0).collect();
            let labels: Vec<Label> = chunk.iter().map(|&i| data[i].1).collect();
            let (loss, mut grads) =
                match loss_and_grads(&model, &batch, &labels, &config.class_weights) {
                    Ok(result) => result,
                    Err(BilstmError::NonFiniteLoss) => return Err(BilstmError::Diverged { epoch }),
                    Err(other) => return Err(other),
                };
            train_loss += loss * chunk.len() as f64;
            clip_global_norm(&mut grads, CLIP_NORM);
            model.apply_gradients(&grads, config.learning_rate);
        }
        train_loss /= train_ids.len() as f64;
        let (val_loss, val_accuracy) =
            evaluate_split(&model, data, &val_ids, &config.class_weights)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(BilstmError::Diverged { epoch });
        }
        epochs.push(EpochStats {
            train_loss,
            val_loss,
            val_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = model.clone();
            streak = 0;
        } else {
            streak += 1;
            if streak >= config.patience.max(1) {
                break;
            }
        }
    }

    let stopped_epoch = epochs.len();
    Ok((
        best,
        TrainingHistory {
            epochs,
            stopped_epoch,
            best_epoch,
        },
    ))
}
