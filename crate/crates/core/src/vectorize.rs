//! Numeric representations of cleaned documents: bag-of-words counts,
//! TF-IDF vectors and padded token-id sequences.
//!
//! A [`Vocabulary`] is always fitted on training-fold documents only;
//! every transform is a pure function of (document, vocabulary).

use std::collections::{BTreeMap, HashMap};

use crate::corpus::CleanDocument;

/// Sequence id reserved for padding positions.
pub const PAD_ID: u32 = 0;
/// Sequence id reserved for out-of-vocabulary tokens.
pub const UNK_ID: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum VectorizeError {
    #[error("cannot build a vocabulary from an empty training set")]
    EmptyTrainingSet,
    #[error("min_df must be at least 1, got {0}")]
    BadMinDf(usize),
    #[error("max_size must be at least 1, got {0}")]
    BadMaxSize(usize),
    #[error("no token passed the document-frequency filter (min_df = {min_df})")]
    EmptyVocabulary { min_df: usize },
    #[error("vocabulary data is inconsistent: {0}")]
    Corrupt(String),
}

/// Token table fitted on a training fold.
///
/// Indices are assigned lexicographically over the kept tokens, which makes
/// the build independent of document order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index_to_token: Vec<String>,
    doc_freq: Vec<usize>,
    total_docs: usize,
    token_to_index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Number of real tokens, excluding the PAD/UNK sequence reservations.
    pub fn size(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token_at(&self, index: usize) -> &str {
        &self.index_to_token[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn doc_freq_at(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    pub fn doc_freqs(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    /// Rebuild from serialized parts, validating the type invariants.
    pub fn from_parts(
        tokens: Vec<String>,
        doc_freq: Vec<usize>,
        total_docs: usize,
    ) -> Result<Self, VectorizeError> {
        if tokens.is_empty() {
            return Err(VectorizeError::Corrupt("token list is empty".into()));
        }
        if tokens.len() != doc_freq.len() {
            return Err(VectorizeError::Corrupt(format!(
                "{} tokens but {} doc_freq entries",
                tokens.len(),
                doc_freq.len()
            )));
        }
        if total_docs == 0 {
            return Err(VectorizeError::Corrupt("total_docs is zero".into()));
        }
        if let Some(df) = doc_freq.iter().find(|&&df| df == 0 || df > total_docs) {
            return Err(VectorizeError::Corrupt(format!(
                "doc_freq {df} outside [1, {total_docs}]"
            )));
        }
        let mut token_to_index = HashMap::with_capacity(tokens.len());
        for (index, token) in tokens.iter().enumerate() {
            if token_to_index.insert(token.clone(), index).is_some() {
                return Err(VectorizeError::Corrupt(format!("duplicate token {token:?}")));
            }
        }
        Ok(Vocabulary {
            index_to_token: tokens,
            doc_freq,
            total_docs,
            token_to_index,
        })
    }
}

/// Sparse token counts over a vocabulary; indices strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountVector {
    pairs: Vec<(usize, u32)>,
}

impl CountVector {
    pub fn pairs(&self) -> &[(usize, u32)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.pairs.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Sparse L2-normalized TF-IDF weights; all-zero input stays all-zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TfidfVector {
    pairs: Vec<(usize, f64)>,
}

impl TfidfVector {
    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.pairs.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Fixed-length id sequence for the recurrent model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub true_length: usize,
}

/// Fit a vocabulary on training documents.
///
/// Tokens with document frequency below `min_df` are dropped; if more than
/// `max_size` remain, the highest-df tokens win, ties broken alphabetically.
pub fn build_vocab<'a, I>(
    train_docs: I,
    min_df: usize,
    max_size: usize,
) -> Result<Vocabulary, VectorizeError>
where
    I: IntoIterator<Item = &'a CleanDocument>,
{
    if min_df < 1 {
        return Err(VectorizeError::BadMinDf(min_df));
    }
    if max_size < 1 {
        return Err(VectorizeError::BadMaxSize(max_size));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut total_docs = 0usize;
    let mut seen: Vec<&str> = Vec::new();
    for doc in train_docs {
        total_docs += 1;
        seen.clear();
        seen.extend(doc.tokens.iter().map(String::as_str));
        seen.sort_unstable();
        seen.dedup();
        for token in &seen {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    if total_docs == 0 {
        return Err(VectorizeError::EmptyTrainingSet);
    }
    let mut kept: Vec<(&str, usize)> = df
        .iter()
        .filter(|&(_, &count)| count >= min_df)
        .map(|(&token, &count)| (token, count))
        .collect();
    if kept.is_empty() {
        return Err(VectorizeError::EmptyVocabulary { min_df });
    }
    if kept.len() > max_size {
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        kept.truncate(max_size);
    }
    kept.sort_unstable_by(|a, b| a.0.cmp(b.0));

    let index_to_token: Vec<String> = kept.iter().map(|&(t, _)| t.to_string()).collect();
    let doc_freq: Vec<usize> = kept.iter().map(|&(_, c)| c).collect();
    let token_to_index = index_to_token
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(Vocabulary {
        index_to_token,
        doc_freq,
        total_docs,
        token_to_index,
    })
}

/// Count in-vocabulary tokens; OOV tokens are ignored.
pub fn bow_counts(doc: &CleanDocument, vocab: &Vocabulary) -> CountVector {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for token in &doc.tokens {
        if let Some(index) = vocab.index_of(token) {
            *counts.entry(index).or_insert(0) += 1;
        }
    }
    CountVector {
        pairs: counts.into_iter().collect(),
    }
}

/// TF-IDF with smoothed idf: `count × (ln((1+N)/(1+df)) + 1)`, L2-normalized.
pub fn tfidf_transform(counts: &CountVector, vocab: &Vocabulary) -> TfidfVector {
    debug_assert!(vocab.total_docs() >= 1);
    let n = vocab.total_docs() as f64;
    let mut pairs: Vec<(usize, f64)> = counts
        .pairs
        .iter()
        .map(|&(index, count)| {
            let idf = ((1.0 + n) / (1.0 + vocab.doc_freq_at(index) as f64)).ln() + 1.0;
            (index, count as f64 * idf)
        })
        .collect();
    let norm = pairs.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in &mut pairs {
            *w /= norm;
        }
    }
    TfidfVector { pairs }
}

/// Map the first `max_len` tokens to vocabulary ids shifted by +2 (PAD=0,
/// UNK=1), right-padding with PAD.
pub fn encode_sequence(doc: &CleanDocument, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    debug_assert!(max_len >= 1);
    let mut ids = Vec::with_capacity(max_len);
    for token in doc.tokens.iter().take(max_len) {
        match vocab.index_of(token) {
            Some(index) => ids.push(index as u32 + 2),
            None => ids.push(UNK_ID),
        }
    }
    let true_length = ids.len();
    ids.resize(max_len, PAD_ID);
    TokenSequence { ids, true_length }
}
