//! Shared fixtures for router integration tests.

use std::path::Path;

use triage_core::corpus::{build_dataset, RawTicket};
use triage_core::model::{ModelParams, TrainedModel};
use triage_core::nb::nb_train;
use triage_core::vectorize::{bow_counts, build_vocab};
use triage_router::RouterConfig;

pub fn ticket(subject: &str, body: &str, label: &str, row: usize) -> RawTicket {
    RawTicket {
        subject: subject.to_string(),
        body: body.to_string(),
        label_text: label.to_string(),
        language_tag: Some("en".to_string()),
        source_row: row,
    }
}

/// A tiny Naive Bayes model over unambiguous vocabulary, so every test
/// knows the label of each submission in advance.
pub fn toy_model() -> TrainedModel {
    let docs = vec![
        ticket("firewall change", "schedule firewall change tonight", "Change", 1),
        ticket("maintenance window", "planned upgrade change window", "Change", 2),
        ticket("deploy change", "deploy new release change", "Change", 3),
        ticket("server outage", "server crashed outage error", "Problem", 4),
        ticket("printer broken", "printer broken error jam", "Problem", 5),
        ticket("database down", "database outage error failure", "Problem", 6),
        ticket("password reset", "password reset request please", "Request", 7),
        ticket("access request", "access request account", "Request", 8),
        ticket("laptop order", "new laptop request order", "Request", 9),
    ];
    let dataset = build_dataset(docs);
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

pub fn config_in(dir: &Path) -> RouterConfig {
    let mut config = RouterConfig::new(dir.join("model.json"), dir.join("data"));
    config.worker_count = 2;
    config
}
