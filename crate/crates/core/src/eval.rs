//! Confusion matrices, per-class metrics, repeated k-fold cross-validation,
//! and inference throughput benchmarking.
//!
//! `run_cv` owns the no-leakage protocol: for every (repeat, fold) pair the
//! vocabulary and model are fitted on the training folds only, then scored
//! on the held-out fold. All randomness is derived from the settings seed,
//! so a report (minus wall-clock timings, which live in a sidecar) is
//! byte-identical across runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bilstm::{bilstm_predict, bilstm_train, BilstmConfig, BilstmModel};
use crate::corpus::{assign_folds, CorpusError, Dataset, Label, NUM_CLASSES};
use crate::logreg::{class_weights_from_counts, lr_predict, lr_train, LrHyperParams, LrModel};
use crate::model::TrainedModel;
use crate::nb::{argmax_label, nb_predict, nb_train, NbModel};
use crate::seed;
use crate::vectorize::{bow_counts, build_vocab, encode_sequence, tfidf_transform, Vocabulary};

// Domain tag for per-repeat model seeds, distinct from the tags used
// inside bilstm training.
const TAG_MODEL_SEED: u64 = 4;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("golds and preds must be non-empty and equal-length")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("repeats must be at least 1")]
    BadRepeats,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("repeat {repeat} fold {fold}: {message}")]
    Fold {
        repeat: usize,
        fold: usize,
        message: String,
    },
}

/// 3x3 counts; rows are true classes, columns are predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    cells: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, truth: Label, predicted: Label) {
        self.cells[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.cells[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.cells[c][c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    fn row_total(&self, class: usize) -> u64 {
        self.cells[class].iter().sum()
    }

    fn column_total(&self, class: usize) -> u64 {
        (0..NUM_CLASSES).map(|t| self.cells[t][class]).sum()
    }
}

/// Tally predictions against gold labels.
pub fn confusion(golds: &[Label], preds: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if golds.is_empty() || golds.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let mut matrix = ConfusionMatrix::new();
    for (&truth, &predicted) in golds.iter().zip(preds) {
        matrix.add(truth, predicted);
    }
    Ok(matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when any ratio was 0/0 and reported as 0 by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub accuracy: f64,
    pub macro_f1: f64,
}

fn ratio(numerator: f64, denominator: f64, degenerate: &mut bool) -> f64 {
    if denominator == 0.0 {
        *degenerate = true;
        0.0
    } else {
        numerator / denominator
    }
}

/// Precision, recall and F1 per class, plus accuracy and macro-F1.
/// Every 0/0 is reported as 0 and sets the class's degenerate flag.
pub fn metrics(matrix: &ConfusionMatrix) -> Metrics {
    let mut per_class = [ClassMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        degenerate: false,
    }; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let tp = matrix.get(c, c) as f64;
        let mut degenerate = false;
        let precision = ratio(tp, matrix.column_total(c) as f64, &mut degenerate);
        let recall = ratio(tp, matrix.row_total(c) as f64, &mut degenerate);
        let f1 = ratio(2.0 * precision * recall, precision + recall, &mut degenerate);
        per_class[c] = ClassMetrics {
            precision,
            recall,
            f1,
            degenerate,
        };
    }
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / NUM_CLASSES as f64;
    Metrics {
        per_class,
        accuracy: matrix.accuracy(),
        macro_f1,
    }
}

/// How per-class loss weights are chosen when fitting on a training fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Unweighted,
    /// `w_c = n / (3 * n_c)` computed from training-fold class counts.
    InverseFrequency,
}

/// Which model family to evaluate and with what hyperparameters.
///
/// For `LogReg` and `Bilstm`, the embedded `seed` and `class_weights`
/// fields are overridden by `run_cv`: seeds are derived per repeat from the
/// settings seed, and weights follow the declared `Weighting`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    NaiveBayes {
        alpha: f64,
    },
    LogReg {
        hyperparams: LrHyperParams,
        weighting: Weighting,
    },
    Bilstm {
        config: BilstmConfig,
        weighting: Weighting,
        val_fraction: f64,
    },
    /// Constant baseline: always predicts the training fold's most frequent
    /// class (ties break toward the lowest class index).
    Majority,
}

impl ModelSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            ModelSpec::NaiveBayes { .. } => "nb",
            ModelSpec::LogReg { .. } => "logreg",
            ModelSpec::Bilstm { .. } => "bilstm",
            ModelSpec::Majority => "majority",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSettings {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Vocabulary document-frequency floor, fitted per training fold.
    pub min_df: usize,
    /// Vocabulary size cap.
    pub max_size: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            k: 5,
            repeats: 1,
            seed: 0,
            min_df: 2,
            max_size: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub matrix: ConfusionMatrix,
    /// Wall-clock seconds; excluded from the canonical report so that
    /// serialized reports stay byte-identical across runs.
    #[serde(skip)]
    pub train_seconds: f64,
    #[serde(skip)]
    pub predict_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_accuracy: f64,
    /// Population standard deviation over fold accuracies.
    pub std_accuracy: f64,
    /// Trace sum over all fold matrices divided by total evaluations.
    pub pooled_accuracy: f64,
    pub per_class: [ClassAggregate; NUM_CLASSES],
    pub mean_macro_f1: f64,
    /// Index into `folds` of the highest-accuracy fold (first on ties).
    pub best_fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelSpec,
    pub settings: CvSettings,
    pub dataset_hash: String,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
}

/// Per-fold wall-clock timings, kept out of the canonical report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub repeat: usize,
    pub fold: usize,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

impl EvaluationReport {
    /// Canonical JSON: deterministic for a fixed seed and dataset.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Wall-clock sidecar, serialized separately from the canonical report.
    pub fn timings(&self) -> Vec<TimingRow> {
        self.folds
            .iter()
            .map(|f| TimingRow {
                repeat: f.repeat,
                fold: f.fold,
                train_seconds: f.train_seconds,
                predict_seconds: f.predict_seconds,
            })
            .collect()
    }

    /// Aligned-column text rendering of the aggregate and best fold.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let agg = &self.aggregate;
        out.push_str(&format!(
            "model: {}   k={} repeats={} seed={}\n",
            self.model.family_name(),
            self.settings.k,
            self.settings.repeats,
            self.settings.seed
        ));
        out.push_str(&format!("dataset: {}\n", self.dataset_hash));
        out.push_str(&format!(
            "accuracy: mean {:.4} +/- {:.4}   pooled {:.4}   macro-F1 {:.4}\n\n",
            agg.mean_accuracy, agg.std_accuracy, agg.pooled_accuracy, agg.mean_macro_f1
        ));
        out.push_str(&format!(
            "{:<10} {:>10} {:>10} {:>10}\n",
            "class", "precision", "recall", "f1"
        ));
        for label in Label::ALL {
            let m = &agg.per_class[label.index()];
            out.push_str(&format!(
                "{:<10} {:>10.4} {:>10.4} {:>10.4}\n",
                label.name(),
                m.mean_precision,
                m.mean_recall,
                m.mean_f1
            ));
        }
        let best = &self.folds[agg.best_fold];
        out.push_str(&format!(
            "\nbest fold: repeat {} fold {} (accuracy {:.4}), rows=true cols=predicted\n",
            best.repeat,
            best.fold,
            best.matrix.accuracy()
        ));
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8}\n",
            "", "Change", "Problem", "Request"
        ));
        for t in Label::ALL {
            out.push_str(&format!(
                "{:<10} {:>8} {:>8} {:>8}\n",
                t.name(),
                best.matrix.get(t.index(), 0),
                best.matrix.get(t.index(), 1),
                best.matrix.get(t.index(), 2)
            ));
        }
        out
    }
}

// One trained fold model; prediction dispatches per family.
enum FittedModel {
    Nb(NbModel),
    Lr(LrModel),
    Bilstm(Box<BilstmModel>),
    Majority(Label),
}

fn fit_fold(
    spec: &ModelSpec,
    dataset: &Dataset,
    train_ids: &[usize],
    vocab: &Vocabulary,
    model_seed: u64,
) -> Result<FittedModel, String> {
    let train_counts = {
        let mut counts = [0usize; NUM_CLASSES];
        for &id in train_ids {
            counts[dataset.documents[id].label.index()] += 1;
        }
        counts
    };
    let weights_for = |weighting: Weighting| -> Result<[f64; NUM_CLASSES], String> {
        match weighting {
            Weighting::Unweighted => Ok([1.0; NUM_CLASSES]),
            Weighting::InverseFrequency => {
                class_weights_from_counts(train_counts).map_err(|e| e.to_string())
            }
        }
    };
    match spec {
        ModelSpec::NaiveBayes { alpha } => {
            let vectors: Vec<_> = train_ids
                .iter()
                .map(|&id| {
                    let doc = &dataset.documents[id];
                    (bow_counts(doc, vocab), doc.label)
                })
                .collect();
            let model = nb_train(&vectors, *alpha, vocab).map_err(|e| e.to_string())?;
            Ok(FittedModel::Nb(model))
        }
        ModelSpec::LogReg {
            hyperparams,
            weighting,
        } => {
            let vectors: Vec<_> = train_ids
                .iter()
                .map(|&id| {
                    let doc = &dataset.documents[id];
                    (tfidf_transform(&bow_counts(doc, vocab), vocab), doc.label)
                })
                .collect();
            let hp = LrHyperParams {
                class_weights: weights_for(*weighting)?,
                seed: model_seed,
                ..hyperparams.clone()
            };
            let (model, _) = lr_train(&vectors, vocab.size(), &hp).map_err(|e| e.to_string())?;
            Ok(FittedModel::Lr(model))
        }
        ModelSpec::Bilstm {
            config,
            weighting,
            val_fraction,
        } => {
            let sequences: Vec<_> = train_ids
                .iter()
                .map(|&id| {
                    let doc = &dataset.documents[id];
                    (encode_sequence(doc, vocab, config.max_len), doc.label)
                })
                .collect();
            let cfg = BilstmConfig {
                class_weights: weights_for(*weighting)?,
                seed: model_seed,
                ..config.clone()
            };
            let (model, _) = bilstm_train(&sequences, vocab.size(), &cfg, *val_fraction)
                .map_err(|e| e.to_string())?;
            Ok(FittedModel::Bilstm(Box::new(model)))
        }
        ModelSpec::Majority => {
            let counts = [
                train_counts[0] as f64,
                train_counts[1] as f64,
                train_counts[2] as f64,
            ];
            Ok(FittedModel::Majority(argmax_label(&counts)))
        }
    }
}

fn predict_fold(
    fitted: &FittedModel,
    dataset: &Dataset,
    test_ids: &[usize],
    vocab: &Vocabulary,
) -> Result<Vec<Label>, String> {
    match fitted {
        FittedModel::Nb(model) => Ok(test_ids
            .iter()
            .map(|&id| nb_predict(model, &bow_counts(&dataset.documents[id], vocab)).0)
            .collect()),
        FittedModel::Lr(model) => Ok(test_ids
            .iter()
            .map(|&id| {
                let doc = &dataset.documents[id];
                lr_predict(model, &tfidf_transform(&bow_counts(doc, vocab), vocab)).0
            })
            .collect()),
        FittedModel::Bilstm(model) => {
            let sequences: Vec<_> = test_ids
                .iter()
                .map(|&id| encode_sequence(&dataset.documents[id], vocab, model.config.max_len))
                .collect();
            let refs: Vec<&_> = sequences.iter().collect();
            let predictions = bilstm_predict(model, &refs).map_err(|e| e.to_string())?;
            Ok(predictions.into_iter().map(|(label, _)| label).collect())
        }
        FittedModel::Majority(label) => Ok(vec![*label; test_ids.len()]),
    }
}

fn aggregate(folds: &[FoldResult]) -> Aggregate {
    let n = folds.len() as f64;
    let accuracies: Vec<f64> = folds.iter().map(|f| f.matrix.accuracy()).collect();
    let mean_accuracy = accuracies.iter().sum::<f64>() / n;
    let variance = accuracies
        .iter()
        .map(|a| (a - mean_accuracy).powi(2))
        .sum::<f64>()
        / n;
    let std_accuracy = variance.max(0.0).sqrt();
    let trace_sum: u64 = folds.iter().map(|f| f.matrix.trace()).sum();
    let total_sum: u64 = folds.iter().map(|f| f.matrix.total()).sum();
    let pooled_accuracy = trace_sum as f64 / total_sum as f64;

    let fold_metrics: Vec<Metrics> = folds.iter().map(|f| metrics(&f.matrix)).collect();
    let mut per_class = [ClassAggregate {
        mean_precision: 0.0,
        mean_recall: 0.0,
        mean_f1: 0.0,
    }; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        per_class[c] = ClassAggregate {
            mean_precision: fold_metrics.iter().map(|m| m.per_class[c].precision).sum::<f64>() / n,
            mean_recall: fold_metrics.iter().map(|m| m.per_class[c].recall).sum::<f64>() / n,
            mean_f1: fold_metrics.iter().map(|m| m.per_class[c].f1).sum::<f64>() / n,
        };
    }
    let mean_macro_f1 = fold_metrics.iter().map(|m| m.macro_f1).sum::<f64>() / n;
    let best_fold = accuracies
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0;
    Aggregate {
        mean_accuracy,
        std_accuracy,
        pooled_accuracy,
        per_class,
        mean_macro_f1,
        best_fold,
    }
}

/// Repeated stratified k-fold cross-validation.
///
/// For each repeat r and fold f, the vocabulary is built from the training
/// folds only, the model is fitted with seed `mix(settings.seed, [4, r])`,
/// and the held-out fold is scored. Training and prediction wall-clock
/// seconds are recorded per fold but excluded from canonical serialization.
pub fn run_cv(
    dataset: &Dataset,
    spec: &ModelSpec,
    settings: &CvSettings,
) -> Result<EvaluationReport, EvalError> {
    dataset.require_trainable()?;
    if settings.repeats == 0 {
        return Err(EvalError::BadRepeats);
    }
    let mut folds = Vec::with_capacity(settings.repeats * settings.k);
    for repeat in 0..settings.repeats {
        let assignment = assign_folds(dataset, settings.k, repeat as u64, settings.seed)?;
        let model_seed = seed::mix(settings.seed, &[TAG_MODEL_SEED, repeat as u64]);
        for fold in 0..settings.k {
            let annotate = |message: String| EvalError::Fold {
                repeat,
                fold,
                message,
            };
            let train_ids: Vec<usize> = assignment.docs_outside_fold(fold).collect();
            let test_ids: Vec<usize> = assignment.docs_in_fold(fold).collect();

            let train_start = Instant::now();
            let vocab = build_vocab(
                train_ids.iter().map(|&id| &dataset.documents[id]),
                settings.min_df,
                settings.max_size,
            )
            .map_err(|e| annotate(e.to_string()))?;
            let fitted =
                fit_fold(spec, dataset, &train_ids, &vocab, model_seed).map_err(annotate)?;
            let train_seconds = train_start.elapsed().as_secs_f64();

            let predict_start = Instant::now();
            let preds = predict_fold(&fitted, dataset, &test_ids, &vocab).map_err(annotate)?;
            let predict_seconds = predict_start.elapsed().as_secs_f64();

            let golds: Vec<Label> = test_ids
                .iter()
                .map(|&id| dataset.documents[id].label)
                .collect();
            let matrix = confusion(&golds, &preds)?;
            folds.push(FoldResult {
                repeat,
                fold,
                matrix,
                train_seconds,
                predict_seconds,
            });
        }
    }
    let aggregate = aggregate(&folds);
    Ok(EvaluationReport {
        model: spec.clone(),
        settings: settings.clone(),
        dataset_hash: dataset.content_hash(),
        folds,
        aggregate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model_type: String,
    pub batch_size: usize,
    pub docs_per_second: f64,
    pub p50_latency_seconds: f64,
    pub p95_latency_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub hardware: String,
    pub sample_size: usize,
    pub rows: Vec<BenchRow>,
}

impl ThroughputReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "hardware: {}   sample: {} docs\n",
            self.hardware, self.sample_size
        ));
        out.push_str(&format!(
            "{:<10} {:>6} {:>12} {:>12} {:>12}\n",
            "model", "batch", "docs/sec", "p50 (s)", "p95 (s)"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>6} {:>12.1} {:>12.6} {:>12.6}\n",
                row.model_type,
                row.batch_size,
                row.docs_per_second,
                row.p50_latency_seconds,
                row.p95_latency_seconds
            ));
        }
        out
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    // Nearest-rank on a sorted slice.
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Time classification over `docs` for every (model, batch size) pair.
///
/// A full warm-up pass per model is excluded from timing. Latencies are
/// per-document (batch time divided by batch length), with p50/p95 taken
/// over batches by nearest rank. Documents that clean to empty are skipped.
pub fn bench(models: &[&TrainedModel], docs: &[String], batch_sizes: &[usize]) -> ThroughputReport {
    let usable: Vec<&String> = docs
        .iter()
        .filter(|text| models.is_empty() || models[0].classify_text(text).is_ok())
        .collect();
    let hardware = format!("{} {}", std::env::consts::OS, std::env::consts::ARCH);
    let mut rows = Vec::new();
    for model in models {
        if usable.is_empty() {
            break;
        }
        // Warm-up pass, untimed.
        for text in &usable {
            let _ = model.classify_text(text);
        }
        for &batch_size in batch_sizes {
            if batch_size == 0 {
                continue;
            }
            let mut latencies = Vec::new();
            let total_start = Instant::now();
            for chunk in usable.chunks(batch_size) {
                let start = Instant::now();
                for text in chunk {
                    let _ = model.classify_text(text);
                }
                latencies.push(start.elapsed().as_secs_f64() / chunk.len() as f64);
            }
            let elapsed = total_start.elapsed().as_secs_f64().max(1e-9);
            latencies.sort_by(|a, b| a.total_cmp(b));
            rows.push(BenchRow {
                model_type: model.model_type().as_str().to_string(),
                batch_size,
                docs_per_second: usable.len() as f64 / elapsed,
                p50_latency_seconds: percentile(&latencies, 0.50),
                p95_latency_seconds: percentile(&latencies, 0.95),
            });
        }
    }
    ThroughputReport {
        hardware,
        sample_size: usable.len(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_dataset;
    use crate::model::ModelParams;
    use crate::synth::{generate, SynthConfig};

    fn labels(indices: &[usize]) -> Vec<Label> {
        indices
            .iter()
            .map(|&i| Label::from_index(i).unwrap())
            .collect()
    }

    #[test]
    fn confusion_counts_match_hand_examples() {
        // Perfect classifier over 9 balanced docs: diagonal (3,3,3).
        let golds = labels(&[0, 0, 0, 1, 1, 1, 2, 2, 2]);
        let m = confusion(&golds, &golds).unwrap();
        assert_eq!([m.get(0, 0), m.get(1, 1), m.get(2, 2)], [3, 3, 3]);
        assert_eq!(m.total(), 9);
        assert_eq!(m.trace(), 9);

        // Constant classifier: only the Problem column is nonzero.
        let preds = labels(&[1; 9]);
        let m = confusion(&golds, &preds).unwrap();
        for t in 0..3 {
            assert_eq!(m.get(t, 1), 3);
            assert_eq!(m.get(t, 0), 0);
            assert_eq!(m.get(t, 2), 0);
        }

        // golds (C,C,P), preds (C,P,P).
        let m = confusion(&labels(&[0, 0, 1]), &labels(&[0, 1, 1])).unwrap();
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.get(0, 1), 1);
        assert_eq!(m.get(1, 1), 1);
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn confusion_rejects_mismatched_or_empty_inputs() {
        assert!(matches!(
            confusion(&labels(&[0]), &labels(&[0, 1])),
            Err(EvalError::LengthMismatch { golds: 1, preds: 2 })
        ));
        assert!(matches!(
            confusion(&[], &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn perfect_diagonal_gives_all_ones() {
        let golds = labels(&[0, 0, 1, 1, 2, 2]);
        let m = metrics(&confusion(&golds, &golds).unwrap());
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        for c in m.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
            assert!(!c.degenerate);
        }
    }

    #[test]
    fn minority_row_reproduces_known_rates() {
        // Change: TP=55, FN=45 (all to Problem), FP=0; other classes filled
        // so their columns stay clean.
        let mut matrix = ConfusionMatrix::new();
        matrix.cells[0] = [55, 45, 0];
        matrix.cells[1] = [0, 100, 0];
        matrix.cells[2] = [0, 0, 100];
        let m = metrics(&matrix);
        let change = &m.per_class[0];
        assert_eq!(change.precision, 1.0);
        assert_eq!(change.recall, 0.55);
        assert!((change.f1 - 0.71).abs() < 0.005);
        assert!(!change.degenerate);
    }

    #[test]
    fn absent_class_reports_zeros_with_degenerate_flag() {
        // Request never true and never predicted.
        let golds = labels(&[0, 0, 1, 1]);
        let preds = labels(&[0, 1, 1, 1]);
        let m = metrics(&confusion(&golds, &preds).unwrap());
        let request = &m.per_class[2];
        assert_eq!((request.precision, request.recall, request.f1), (0.0, 0.0, 0.0));
        assert!(request.degenerate);
        assert!(!m.per_class[0].degenerate);
    }

    #[test]
    fn zero_precision_and_recall_flags_f1_as_degenerate() {
        // Change exists and is predicted, but never correctly: P=0/1, R=0/1,
        // so F1 is 0/0.
        let golds = labels(&[0, 1, 1]);
        let preds = labels(&[1, 0, 1]);
        let m = metrics(&confusion(&golds, &preds).unwrap());
        let change = &m.per_class[0];
        assert_eq!(change.f1, 0.0);
        assert!(change.degenerate);
    }

    fn toy_dataset(counts: [usize; 3], seed: u64) -> Dataset {
        build_dataset(generate(&SynthConfig {
            counts,
            seed,
            ..SynthConfig::default()
        }))
    }

    #[test]
    fn minimal_protocol_walk_evaluates_every_fold_once() {
        let dataset = toy_dataset([2, 2, 2], 1);
        let settings = CvSettings {
            k: 2,
            repeats: 1,
            min_df: 1,
            ..CvSettings::default()
        };
        let report = run_cv(&dataset, &ModelSpec::NaiveBayes { alpha: 1.0 }, &settings).unwrap();
        assert_eq!(report.folds.len(), 2);
        let total: u64 = report.folds.iter().map(|f| f.matrix.total()).sum();
        assert_eq!(total, 6, "every document scored exactly once");
        let trace: u64 = report.folds.iter().map(|f| f.matrix.trace()).sum();
        assert_eq!(report.aggregate.pooled_accuracy, trace as f64 / 6.0);
    }

    #[test]
    fn majority_baseline_scores_exactly_the_majority_ratio() {
        let dataset = toy_dataset([30, 60, 45], 2);
        let settings = CvSettings {
            k: 5,
            repeats: 2,
            min_df: 1,
            ..CvSettings::default()
        };
        let report = run_cv(&dataset, &ModelSpec::Majority, &settings).unwrap();
        // Problem dominates every training fold, so every prediction is
        // Problem and pooled accuracy is its share of the data exactly.
        assert_eq!(report.aggregate.pooled_accuracy, 60.0 / 135.0);
        for fold in &report.folds {
            assert_eq!(fold.matrix.column_total(0), 0);
            assert_eq!(fold.matrix.column_total(2), 0);
        }
    }

    #[test]
    fn nb_separates_the_synthetic_corpus() {
        let dataset = toy_dataset([40, 80, 60], 3);
        let settings = CvSettings {
            k: 5,
            repeats: 1,
            min_df: 1,
            ..CvSettings::default()
        };
        let report = run_cv(&dataset, &ModelSpec::NaiveBayes { alpha: 1.0 }, &settings).unwrap();
        assert!(
            report.aggregate.mean_accuracy > 0.85,
            "mean accuracy {} too low for a separable corpus",
            report.aggregate.mean_accuracy
        );
        assert!(report.aggregate.best_fold < report.folds.len());
    }

    #[test]
    fn aggregates_recompute_from_stored_matrices() {
        let dataset = toy_dataset([20, 40, 30], 4);
        let settings = CvSettings {
            k: 3,
            repeats: 2,
            min_df: 1,
            ..CvSettings::default()
        };
        let report = run_cv(&dataset, &ModelSpec::NaiveBayes { alpha: 0.5 }, &settings).unwrap();
        let recomputed = aggregate(&report.folds);
        assert_eq!(report.aggregate, recomputed);
        let n = report.folds.len() as f64;
        let mean = report.folds.iter().map(|f| f.matrix.accuracy()).sum::<f64>() / n;
        assert_eq!(report.aggregate.mean_accuracy, mean);
    }

    #[test]
    fn reports_are_byte_identical_across_runs() {
        let dataset = toy_dataset([10, 20, 15], 5);
        let settings = CvSettings {
            k: 2,
            repeats: 2,
            seed: 42,
            min_df: 1,
            ..CvSettings::default()
        };
        let spec = ModelSpec::LogReg {
            hyperparams: LrHyperParams {
                epochs: 3,
                ..LrHyperParams::default()
            },
            weighting: Weighting::InverseFrequency,
        };
        let a = run_cv(&dataset, &spec, &settings).unwrap().to_json();
        let b = run_cv(&dataset, &spec, &settings).unwrap().to_json();
        assert_eq!(a, b);
        assert!(
            !a.contains("seconds"),
            "canonical report must not embed wall-clock timings"
        );
        let parsed = EvaluationReport::from_json(&a).unwrap();
        assert_eq!(parsed.aggregate, run_cv(&dataset, &spec, &settings).unwrap().aggregate);
    }

    #[test]
    fn training_failures_are_annotated_with_repeat_and_fold() {
        let dataset = toy_dataset([4, 4, 4], 6);
        let settings = CvSettings {
            k: 2,
            repeats: 1,
            min_df: 1,
            ..CvSettings::default()
        };
        let err = run_cv(&dataset, &ModelSpec::NaiveBayes { alpha: 0.0 }, &settings).unwrap_err();
        match err {
            EvalError::Fold { repeat, fold, .. } => {
                assert_eq!((repeat, fold), (0, 0));
            }
            other => panic!("expected fold annotation, got {other:?}"),
        }
    }

    #[test]
    fn untrainable_and_bad_settings_are_rejected() {
        let dataset = toy_dataset([4, 4, 4], 7);
        let err = run_cv(
            &dataset,
            &ModelSpec::Majority,
            &CvSettings {
                repeats: 0,
                ..CvSettings::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::BadRepeats));

        let empty = build_dataset(Vec::new());
        assert!(matches!(
            run_cv(&empty, &ModelSpec::Majority, &CvSettings::default()),
            Err(EvalError::Corpus(CorpusError::Untrainable { .. }))
        ));
    }

    fn bench_model() -> TrainedModel {
        let dataset = toy_dataset([10, 20, 15], 8);
        let vocab = build_vocab(dataset.documents.iter(), 1, 10_000).unwrap();
        let vectors: Vec<_> = dataset
            .documents
            .iter()
            .map(|d| (bow_counts(d, &vocab), d.label))
            .collect();
        let nb = nb_train(&vectors, 1.0, &vocab).unwrap();
        TrainedModel {
            vocab,
            params: ModelParams::Nb(nb),
            dataset_hash: dataset.content_hash(),
        }
    }

    #[test]
    fn bench_reports_each_model_batch_pair() {
        let model = bench_model();
        let docs: Vec<String> = generate(&SynthConfig {
            counts: [20, 20, 20],
            seed: 9,
            ..SynthConfig::default()
        })
        .into_iter()
        .map(|t| format!("{} {}", t.subject, t.body))
        .collect();
        let report = bench(&[&model], &docs, &[1, 7]);
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert!(row.docs_per_second > 0.0);
            assert!(row.p50_latency_seconds <= row.p95_latency_seconds);
            assert_eq!(row.model_type, "nb");
        }
        assert_eq!(report.sample_size, 60);
        assert!(report.render_text().contains("docs/sec"));
    }

    #[test]
    fn bench_with_no_batch_sizes_is_an_empty_valid_report() {
        let model = bench_model();
        let docs = vec!["prb0 prb1 noise2".to_string()];
        let report = bench(&[&model], &docs, &[]);
        assert!(report.rows.is_empty());
        assert!(!report.to_json().is_empty());
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&sorted, 0.50), 2.0);
        assert_eq!(percentile(&sorted, 0.95), 4.0);
        assert_eq!(percentile(&[7.0], 0.95), 7.0);
    }
}
