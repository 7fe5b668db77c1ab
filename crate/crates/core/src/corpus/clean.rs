//! Text normalization: lowercasing, special-character stripping, stopword
//! removal.
//!
//! The rules are intentionally rigid so the rest of the pipeline can rely on
//! them: output text contains only `a-z`, `0-9` and single spaces, and never
//! contains a token from the active stopword list. The shipped list is the
//! classic 179-entry English list, stored at `assets/stopwords_en.txt`; a
//! custom list can be loaded with [`StopwordSet::from_path`].

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use super::CorpusError;

static STOPWORDS_RAW: &str = include_str!("../../assets/stopwords_en.txt");
static BUILTIN: OnceLock<StopwordSet> = OnceLock::new();

/// A set of tokens removed after character normalization.
///
/// Entries are passed through the same character rules as document text, so
/// a list entry like `don't` contributes the tokens `don` and `t`.
#[derive(Debug, Clone)]
pub struct StopwordSet {
    tokens: HashSet<String>,
}

impl StopwordSet {
    pub fn from_lines(lines: &str) -> Self {
        let mut tokens = HashSet::new();
        for line in lines.lines() {
            for token in normalize_chars(line).split_whitespace() {
                tokens.insert(token.to_string());
            }
        }
        StopwordSet { tokens }
    }

    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_lines(&raw))
    }

    /// The list shipped with the crate.
    pub fn builtin() -> &'static StopwordSet {
        BUILTIN.get_or_init(|| StopwordSet::from_lines(STOPWORDS_RAW))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercase and replace every character outside `a-z` / `0-9` with a space.
fn normalize_chars(raw: &str) -> String {
    raw.to_lowercase()
        .chars()
        .map(|c| match c {
            'a'..='z' | '0'..='9' => c,
            _ => ' ',
        })
        .collect()
}

/// Clean free text with the built-in stopword list.
///
/// Total function: any input is accepted and the result may be empty.
pub fn clean_text(raw: &str) -> String {
    clean_text_with(raw, StopwordSet::builtin())
}

/// Clean free text against an explicit stopword list.
pub fn clean_text_with(raw: &str, stopwords: &StopwordSet) -> String {
    let normalized = normalize_chars(raw);
    let mut out = String::with_capacity(normalized.len());
    for token in normalized.split_whitespace() {
        if stopwords.contains(token) {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}
