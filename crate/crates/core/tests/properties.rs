//! Property-based checks over cleaning, vectorization, Naive Bayes and
//! metric formulas.

use proptest::prelude::*;

use triage_core::corpus::{clean_text, CleanDocument, Label};
use triage_core::eval::{metrics, ConfusionMatrix};
use triage_core::nb::{nb_predict, nb_train};
use triage_core::vectorize::{
    bow_counts, build_vocab, encode_sequence, tfidf_transform, PAD_ID,
};

fn documents() -> impl Strategy<Value = Vec<CleanDocument>> {
    prop::collection::vec(
        (prop::collection::vec(0usize..8, 1..10), 0usize..3),
        1..12,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(doc_id, (token_ids, label))| {
                let tokens: Vec<String> =
                    token_ids.iter().map(|t| format!("tok{t}")).collect();
                CleanDocument {
                    doc_id,
                    text: tokens.join(" "),
                    tokens,
                    label: Label::from_index(label).unwrap(),
                }
            })
            .collect()
    })
}

fn matrix_from_cells(cells: [[u64; 3]; 3]) -> ConfusionMatrix {
    serde_json::from_value(serde_json::json!(cells)).unwrap()
}

proptest! {
    // Cleaning is a total, idempotent function onto single-spaced
    // lowercase alphanumeric text.
    #[test]
    fn cleaning_is_idempotent_and_closed(raw in any::<String>()) {
        let once = clean_text(&raw);
        prop_assert_eq!(&clean_text(&once), &once);
        prop_assert!(once
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' '));
        let rejoined = once.split(' ').collect::<Vec<_>>().join(" ");
        prop_assert_eq!(rejoined, once);
    }

    // Every nonzero TF-IDF vector has unit L2 norm; documents made purely
    // of out-of-vocabulary tokens map to the zero vector.
    #[test]
    fn tfidf_vectors_have_unit_or_zero_norm(docs in documents()) {
        let vocab = build_vocab(docs.iter(), 1, 1000).unwrap();
        for doc in &docs {
            let vector = tfidf_transform(&bow_counts(doc, &vocab), &vocab);
            prop_assert!((vector.l2_norm() - 1.0).abs() < 1e-9);
        }
        let oov = CleanDocument {
            doc_id: docs.len(),
            text: "zzz".into(),
            tokens: vec!["zzz".into()],
            label: Label::Change,
        };
        let vector = tfidf_transform(&bow_counts(&oov, &vocab), &vocab);
        prop_assert_eq!(vector.l2_norm(), 0.0);
    }

    // The fitted vocabulary is canonical: document order cannot change it.
    #[test]
    fn vocabulary_ignores_document_order(docs in documents(), rotate in 0usize..12) {
        let vocab = build_vocab(docs.iter(), 1, 1000).unwrap();
        let mut rotated = docs.clone();
        rotated.rotate_left(rotate % docs.len().max(1));
        let again = build_vocab(rotated.iter(), 1, 1000).unwrap();
        prop_assert_eq!(vocab.tokens(), again.tokens());
        prop_assert_eq!(vocab.doc_freqs(), again.doc_freqs());
        prop_assert_eq!(vocab.total_docs(), again.total_docs());
    }

    // Sequences are always exactly max_len wide: real ids first, PAD after,
    // and a shorter window is a prefix of a longer one.
    #[test]
    fn encoded_sequences_pad_and_truncate_consistently(
        docs in documents(),
        short in 1usize..6,
        extra in 1usize..6,
    ) {
        let vocab = build_vocab(docs.iter(), 1, 1000).unwrap();
        let long = short + extra;
        for doc in &docs {
            let narrow = encode_sequence(doc, &vocab, short);
            let wide = encode_sequence(doc, &vocab, long);
            prop_assert_eq!(narrow.ids.len(), short);
            prop_assert_eq!(wide.ids.len(), long);
            prop_assert_eq!(narrow.true_length, doc.tokens.len().min(short));
            prop_assert_eq!(wide.true_length, doc.tokens.len().min(long));
            prop_assert_eq!(
                &narrow.ids[..narrow.true_length],
                &wide.ids[..narrow.true_length]
            );
            for (pos, &id) in narrow.ids.iter().enumerate() {
                if pos < narrow.true_length {
                    prop_assert!(id != PAD_ID);
                    prop_assert!((id as usize) < vocab.size() + 2);
                } else {
                    prop_assert_eq!(id, PAD_ID);
                }
            }
        }
    }

    // Naive Bayes is fit from sufficient statistics, so training order is
    // irrelevant, and predicted labels are the argmax of returned scores.
    #[test]
    fn nb_is_order_invariant_and_consistent(docs in documents(), rotate in 0usize..12) {
        let mut by_class = [0usize; 3];
        for doc in &docs {
            by_class[doc.label.index()] += 1;
        }
        prop_assume!(by_class.iter().all(|&c| c > 0));

        let vocab = build_vocab(docs.iter(), 1, 1000).unwrap();
        let vectors: Vec<_> = docs
            .iter()
            .map(|d| (bow_counts(d, &vocab), d.label))
            .collect();
        let mut rotated = vectors.clone();
        rotated.rotate_left(rotate % vectors.len());

        let a = nb_train(&vectors, 1.0, &vocab).unwrap();
        let b = nb_train(&rotated, 1.0, &vocab).unwrap();
        prop_assert_eq!(a.class_log_prior, b.class_log_prior);
        prop_assert_eq!(&a.token_log_likelihood, &b.token_log_likelihood);

        for (vector, _) in &vectors {
            let (label, scores) = nb_predict(&a, vector);
            prop_assert!(scores.iter().all(|s| s.is_finite()));
            let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(scores[label.index()], best);
        }
    }

    // Metric formulas stay in range and agree with their definitions on
    // arbitrary matrices.
    #[test]
    fn metrics_stay_in_range_on_random_matrices(
        cells in prop::array::uniform3(prop::array::uniform3(0u64..60)),
    ) {
        let matrix = matrix_from_cells(cells);
        prop_assume!(matrix.total() > 0);
        let m = metrics(&matrix);
        prop_assert_eq!(m.accuracy, matrix.trace() as f64 / matrix.total() as f64);
        let mean_f1 = m.per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
        prop_assert_eq!(m.macro_f1, mean_f1);
        for (c, class) in m.per_class.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&class.precision));
            prop_assert!((0.0..=1.0).contains(&class.recall));
            prop_assert!((0.0..=1.0).contains(&class.f1));
            let row: u64 = (0..3).map(|p| matrix.get(c, p)).sum();
            let column: u64 = (0..3).map(|t| matrix.get(t, c)).sum();
            if class.degenerate {
                prop_assert!(
                    row == 0 || column == 0 || class.precision + class.recall == 0.0
                );
            } else {
                prop_assert!(row > 0 && column > 0);
            }
        }
    }
}
