//! End-to-end checks of the repeated stratified k-fold protocol: fold
//! coverage, train/test isolation, seed derivation, and aggregate identities.

use triage_core::bilstm::BilstmConfig;
use triage_core::corpus::{assign_folds, build_dataset, Dataset, Label, RawTicket};
use triage_core::eval::{confusion, run_cv, ConfusionMatrix, CvSettings, ModelSpec, Weighting};
use triage_core::logreg::{class_weights_from_counts, lr_predict, lr_train, LrHyperParams};
use triage_core::nb::{nb_predict, nb_train};
use triage_core::seed;
use triage_core::synth::{generate, SynthConfig};
use triage_core::vectorize::{bow_counts, build_vocab, tfidf_transform};

fn synth_dataset(counts: [usize; 3], seed: u64) -> Dataset {
    build_dataset(generate(&SynthConfig {
        counts,
        seed,
        ..SynthConfig::default()
    }))
}

#[test]
fn every_document_lands_in_exactly_one_test_fold_per_repeat() {
    let dataset = synth_dataset([30, 60, 45], 1);
    for repeat in 0..3u64 {
        let assignment = assign_folds(&dataset, 5, repeat, 17).unwrap();
        let mut seen = vec![0usize; dataset.len()];
        for fold in 0..5 {
            for doc_id in assignment.docs_in_fold(fold) {
                seen[doc_id] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    // The same invariant observed through run_cv: each repeat scores every
    // document exactly once, so each repeat's matrices total n.
    let settings = CvSettings {
        k: 5,
        repeats: 3,
        seed: 17,
        min_df: 1,
        ..CvSettings::default()
    };
    let report = run_cv(&dataset, &ModelSpec::Majority, &settings).unwrap();
    for repeat in 0..3 {
        let total: u64 = report
            .folds
            .iter()
            .filter(|f| f.repeat == repeat)
            .map(|f| f.matrix.total())
            .sum();
        assert_eq!(total as usize, dataset.len());
    }
    let grid: Vec<(usize, usize)> = report.folds.iter().map(|f| (f.repeat, f.fold)).collect();
    let expected: Vec<(usize, usize)> =
        (0..3).flat_map(|r| (0..5).map(move |f| (r, f))).collect();
    assert_eq!(grid, expected);
}

// Replicates run_cv for Naive Bayes with the public pieces, fitting the
// vocabulary strictly on training folds. Byte-equal matrices prove run_cv
// follows the same leakage-free protocol.
#[test]
fn run_cv_matches_a_hand_rolled_leakage_free_protocol() {
    let dataset = synth_dataset([20, 40, 30], 2);
    let settings = CvSettings {
        k: 3,
        repeats: 2,
        seed: 11,
        min_df: 2,
        max_size: 50,
    };
    let report = run_cv(&dataset, &ModelSpec::NaiveBayes { alpha: 1.0 }, &settings).unwrap();

    let mut expected: Vec<ConfusionMatrix> = Vec::new();
    for repeat in 0..settings.repeats {
        let assignment = assign_folds(&dataset, settings.k, repeat as u64, settings.seed).unwrap();
        for fold in 0..settings.k {
            let train_ids: Vec<usize> = assignment.docs_outside_fold(fold).collect();
            let test_ids: Vec<usize> = assignment.docs_in_fold(fold).collect();
            let vocab = build_vocab(
                train_ids.iter().map(|&id| &dataset.documents[id]),
                settings.min_df,
                settings.max_size,
            )
            .unwrap();
            let vectors: Vec<_> = train_ids
                .iter()
                .map(|&id| {
                    let doc = &dataset.documents[id];
                    (bow_counts(doc, &vocab), doc.label)
                })
                .collect();
            let model = nb_train(&vectors, 1.0, &vocab).unwrap();
            let golds: Vec<Label> = test_ids
                .iter()
                .map(|&id| dataset.documents[id].label)
                .collect();
            let preds: Vec<Label> = test_ids
                .iter()
                .map(|&id| nb_predict(&model, &bow_counts(&dataset.documents[id], &vocab)).0)
                .collect();
            expected.push(confusion(&golds, &preds).unwrap());
        }
    }
    let actual: Vec<ConfusionMatrix> = report.folds.iter().map(|f| f.matrix).collect();
    assert_eq!(actual, expected);
}

// Pins the documented seed derivation: repeat r trains with seed
// mix(settings.seed, [4, r]), and inverse-frequency weights come from the
// training fold's class counts.
#[test]
fn logreg_folds_use_per_repeat_derived_seeds_and_fold_weights() {
    let dataset = synth_dataset([12, 24, 18], 3);
    let settings = CvSettings {
        k: 2,
        repeats: 2,
        seed: 5,
        min_df: 1,
        ..CvSettings::default()
    };
    let base_hp = LrHyperParams {
        epochs: 4,
        ..LrHyperParams::default()
    };
    let spec = ModelSpec::LogReg {
        hyperparams: base_hp.clone(),
        weighting: Weighting::InverseFrequency,
    };
    let report = run_cv(&dataset, &spec, &settings).unwrap();

    let mut expected: Vec<ConfusionMatrix> = Vec::new();
    for repeat in 0..settings.repeats {
        let assignment = assign_folds(&dataset, settings.k, repeat as u64, settings.seed).unwrap();
        let model_seed = seed::mix(settings.seed, &[4, repeat as u64]);
        for fold in 0..settings.k {
            let train_ids: Vec<usize> = assignment.docs_outside_fold(fold).collect();
            let test_ids: Vec<usize> = assignment.docs_in_fold(fold).collect();
            let vocab = build_vocab(
                train_ids.iter().map(|&id| &dataset.documents[id]),
                settings.min_df,
                settings.max_size,
            )
            .unwrap();
            let vectors: Vec<_> = train_ids
                .iter()
                .map(|&id| {
                    let doc = &dataset.documents[id];
                    (tfidf_transform(&bow_counts(doc, &vocab), &vocab), doc.label)
                })
                .collect();
            let mut train_counts = [0usize; 3];
            for &id in &train_ids {
                train_counts[dataset.documents[id].label.index()] += 1;
            }
            let hp = LrHyperParams {
                class_weights: class_weights_from_counts(train_counts).unwrap(),
                seed: model_seed,
                ..base_hp.clone()
            };
            let (model, _) = lr_train(&vectors, vocab.size(), &hp).unwrap();
            let golds: Vec<Label> = test_ids
                .iter()
                .map(|&id| dataset.documents[id].label)
                .collect();
            let preds: Vec<Label> = test_ids
                .iter()
                .map(|&id| {
                    let doc = &dataset.documents[id];
                    lr_predict(&model, &tfidf_transform(&bow_counts(doc, &vocab), &vocab)).0
                })
                .collect();
            expected.push(confusion(&golds, &preds).unwrap());
        }
    }
    let actual: Vec<ConfusionMatrix> = report.folds.iter().map(|f| f.matrix).collect();
    assert_eq!(actual, expected);
}

fn marked_ticket(row: usize, class: Label, marker: &str) -> RawTicket {
    let keyword = match class {
        Label::Change => "upgrade",
        Label::Problem => "crash",
        Label::Request => "access",
    };
    RawTicket {
        subject: format!("{keyword} {keyword}"),
        body: format!("{keyword} {marker} {marker}"),
        label_text: class.name().to_string(),
        language_tag: Some("en".to_string()),
        source_row: row,
    }
}

// Every document carries a marker token unique to it. A training-fold
// vocabulary may never contain a held-out document's marker.
#[test]
fn fold_vocabularies_never_contain_test_only_tokens() {
    let tickets: Vec<RawTicket> = (0..12)
        .map(|i| {
            marked_ticket(
                i + 1,
                Label::from_index(i % 3).unwrap(),
                &format!("uniq{i}"),
            )
        })
        .collect();
    let dataset = build_dataset(tickets);
    assert_eq!(dataset.len(), 12);

    for repeat in 0..2u64 {
        let assignment = assign_folds(&dataset, 4, repeat, 9).unwrap();
        for fold in 0..4 {
            let vocab = build_vocab(
                assignment
                    .docs_outside_fold(fold)
                    .map(|id| &dataset.documents[id]),
                1,
                1000,
            )
            .unwrap();
            for doc_id in assignment.docs_in_fold(fold) {
                let marker = format!("uniq{doc_id}");
                assert!(
                    vocab.index_of(&marker).is_none(),
                    "repeat {repeat} fold {fold}: held-out marker {marker} leaked into the vocabulary"
                );
            }
        }
    }
}

#[test]
fn bilstm_cv_is_deterministic() {
    let dataset = synth_dataset([12, 12, 12], 4);
    let settings = CvSettings {
        k: 2,
        repeats: 1,
        seed: 21,
        min_df: 1,
        ..CvSettings::default()
    };
    let spec = ModelSpec::Bilstm {
        config: BilstmConfig {
            hidden_sizes: vec![3],
            embedding_dim: 4,
            batch_size: 8,
            max_epochs: 2,
            max_len: 8,
            learning_rate: 0.1,
            ..BilstmConfig::default()
        },
        weighting: Weighting::Unweighted,
        val_fraction: 0.25,
    };
    let a = run_cv(&dataset, &spec, &settings).unwrap();
    let b = run_cv(&dataset, &spec, &settings).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.folds.len(), 2);
}

#[test]
fn aggregate_accuracy_is_trace_sum_over_total() {
    let dataset = synth_dataset([15, 30, 20], 5);
    let settings = CvSettings {
        k: 5,
        repeats: 2,
        seed: 7,
        min_df: 1,
        ..CvSettings::default()
    };
    let report = run_cv(&dataset, &ModelSpec::NaiveBayes { alpha: 0.5 }, &settings).unwrap();
    let trace: u64 = report.folds.iter().map(|f| f.matrix.trace()).sum();
    let total: u64 = report.folds.iter().map(|f| f.matrix.total()).sum();
    assert_eq!(report.aggregate.pooled_accuracy, trace as f64 / total as f64);
    let n = report.folds.len() as f64;
    let mean = report
        .folds
        .iter()
        .map(|f| f.matrix.accuracy())
        .sum::<f64>()
        / n;
    assert_eq!(report.aggregate.mean_accuracy, mean);
}

#[test]
fn majority_baseline_tracks_the_class_ratio_exactly() {
    let dataset = synth_dataset([24, 72, 24], 6);
    let settings = CvSettings {
        k: 4,
        repeats: 2,
        seed: 13,
        min_df: 1,
        ..CvSettings::default()
    };
    let report = run_cv(&dataset, &ModelSpec::Majority, &settings).unwrap();
    assert_eq!(report.aggregate.pooled_accuracy, 72.0 / 120.0);
}
