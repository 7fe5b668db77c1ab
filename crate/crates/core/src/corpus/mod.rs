//! Ticket corpus handling: labels, CSV ingestion, cleaning, dataset
//! assembly and cross-validation fold assignment.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::seed;

mod clean;
mod ingest;

pub use clean::{clean_text, clean_text_with, StopwordSet};
pub use ingest::{load_csv, ColumnMap, TicketReader};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("required column {name:?} not found in CSV header")]
    MissingColumn { name: String },
    #[error("malformed CSV row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("fold count must be at least 2, got {k}")]
    BadFoldCount { k: usize },
    #[error("class {label} has {count} documents, fewer than k = {k}")]
    ClassTooSmall { label: Label, count: usize, k: usize },
    #[error("dataset is not trainable: class counts are {counts:?}, every class needs at least one document")]
    Untrainable { counts: [usize; NUM_CLASSES] },
}

/// Ticket category. The discriminants fix the class index used everywhere
/// downstream (score vectors, confusion matrices, model tensors).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Change,
    Problem,
    Request,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::Change, Label::Problem, Label::Request];

    pub fn index(self) -> usize {
        match self {
            Label::Change => 0,
            Label::Problem => 1,
            Label::Request => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Change => "Change",
            Label::Problem => "Problem",
            Label::Request => "Request",
        }
    }

    /// Case-insensitive parse after trimming surrounding whitespace.
    pub fn parse(text: &str) -> Option<Label> {
        match text.trim().to_lowercase().as_str() {
            "change" => Some(Label::Change),
            "problem" => Some(Label::Problem),
            "request" => Some(Label::Request),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One CSV data row, untouched apart from field extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTicket {
    pub subject: String,
    pub body: String,
    pub label_text: String,
    /// Trimmed language cell; `None` when the column is absent or empty.
    pub language_tag: Option<String>,
    /// 1-based data row number, header excluded.
    pub source_row: usize,
}

/// A ticket that survived cleaning, ready for vectorization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanDocument {
    /// Dense index into `Dataset::documents`.
    pub doc_id: usize,
    pub text: String,
    pub tokens: Vec<String>,
    pub label: Label,
}

/// Why tickets were dropped during dataset assembly. One reason per ticket;
/// checks run in field order: language, then label, then cleaned text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReasons {
    pub non_english: usize,
    pub missing_label: usize,
    pub unknown_label: usize,
    pub empty_after_clean: usize,
}

impl DropReasons {
    pub fn total(&self) -> usize {
        self.non_english + self.missing_label + self.unknown_label + self.empty_after_clean
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub documents: Vec<CleanDocument>,
    pub class_counts: [usize; NUM_CLASSES],
    pub dropped_count: usize,
    pub drop_reasons: DropReasons,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Training requires at least one document of every class.
    pub fn require_trainable(&self) -> Result<(), CorpusError> {
        if self.class_counts.iter().all(|&c| c > 0) {
            Ok(())
        } else {
            Err(CorpusError::Untrainable {
                counts: self.class_counts,
            })
        }
    }

    /// Content fingerprint over cleaned text and labels, independent of how
    /// the data reached us (file path, column names, row order of drops).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for doc in &self.documents {
            hasher.update(doc.text.as_bytes());
            hasher.update([0u8, doc.label.index() as u8, b'\n']);
        }
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Assemble a dataset with the built-in stopword list.
pub fn build_dataset<I>(tickets: I) -> Dataset
where
    I: IntoIterator<Item = RawTicket>,
{
    build_dataset_with(tickets, StopwordSet::builtin())
}

/// Assemble a dataset, dropping unusable tickets and counting why.
///
/// Never fails: an all-drops input yields an empty dataset, and holes in the
/// class coverage are caught later by [`Dataset::require_trainable`].
pub fn build_dataset_with<I>(tickets: I, stopwords: &StopwordSet) -> Dataset
where
    I: IntoIterator<Item = RawTicket>,
{
    let mut dataset = Dataset::default();
    for ticket in tickets {
        if let Some(tag) = &ticket.language_tag {
            if !tag.trim().eq_ignore_ascii_case("en") {
                dataset.drop_reasons.non_english += 1;
                continue;
            }
        }
        if ticket.label_text.trim().is_empty() {
            dataset.drop_reasons.missing_label += 1;
            continue;
        }
        let Some(label) = Label::parse(&ticket.label_text) else {
            dataset.drop_reasons.unknown_label += 1;
            continue;
        };
        let mut combined = ticket.subject;
        combined.push(' ');
        combined.push_str(&ticket.body);
        let text = clean_text_with(&combined, stopwords);
        if text.is_empty() {
            dataset.drop_reasons.empty_after_clean += 1;
            continue;
        }
        let tokens = text.split(' ').map(str::to_string).collect();
        dataset.class_counts[label.index()] += 1;
        dataset.documents.push(CleanDocument {
            doc_id: dataset.documents.len(),
            text,
            tokens,
            label,
        });
    }
    dataset.dropped_count = dataset.drop_reasons.total();
    dataset
}

/// Fold membership for one repeat of stratified k-fold cross-validation.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    pub k: usize,
    pub repeat_index: u64,
    fold_of_doc: Vec<u32>,
}

impl FoldAssignment {
    pub fn fold_of(&self, doc_id: usize) -> usize {
        self.fold_of_doc[doc_id] as usize
    }

    pub fn len(&self) -> usize {
        self.fold_of_doc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of_doc.is_empty()
    }

    pub fn docs_in_fold(&self, fold: usize) -> impl Iterator<Item = usize> + '_ {
        self.fold_of_doc
            .iter()
            .enumerate()
            .filter(move |(_, &f)| f as usize == fold)
            .map(|(doc_id, _)| doc_id)
    }

    pub fn docs_outside_fold(&self, fold: usize) -> impl Iterator<Item = usize> + '_ {
        self.fold_of_doc
            .iter()
            .enumerate()
            .filter(move |(_, &f)| f as usize != fold)
            .map(|(doc_id, _)| doc_id)
    }
}

/// Stratified fold assignment: per class, documents are shuffled with a
/// generator keyed on `(seed, repeat_index, class)` and dealt round-robin
/// into `k` folds, so per-fold class proportions match the dataset within
/// one document.
///
/// Classes absent from the dataset are skipped; every present class must
/// have at least `k` documents.
pub fn assign_folds(
    dataset: &Dataset,
    k: usize,
    repeat_index: u64,
    base_seed: u64,
) -> Result<FoldAssignment, CorpusError> {
    if k < 2 {
        return Err(CorpusError::BadFoldCount { k });
    }
    for label in Label::ALL {
        let count = dataset.class_counts[label.index()];
        if count > 0 && count < k {
            return Err(CorpusError::ClassTooSmall { label, count, k });
        }
    }
    let mut fold_of_doc = vec![0u32; dataset.len()];
    for label in Label::ALL {
        let mut ids: Vec<usize> = dataset
            .documents
            .iter()
            .filter(|d| d.label == label)
            .map(|d| d.doc_id)
            .collect();
        if ids.is_empty() {
            continue;
        }
        let stream = seed::mix(base_seed, &[repeat_index, label.index() as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        ids.shuffle(&mut rng);
        for (position, doc_id) in ids.into_iter().enumerate() {
            fold_of_doc[doc_id] = (position % k) as u32;
        }
    }
    Ok(FoldAssignment {
        k,
        repeat_index,
        fold_of_doc,
    })
}
