//! A trained classifier bundled with its vocabulary: the unit the router
//! serves and the envelope serializes.

use std::fmt;

use crate::bilstm::{bilstm_predict, BilstmModel};
use crate::corpus::{clean_text, Label, NUM_CLASSES};
use crate::logreg::{lr_predict, LrModel};
use crate::nb::{nb_predict, NbModel};
use crate::vectorize::{bow_counts, encode_sequence, tfidf_transform, Vocabulary};
use crate::{corpus::CleanDocument, logreg::softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelType {
    Nb,
    LogReg,
    Bilstm,
}

impl ModelType {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelType::Nb => "nb",
            ModelType::LogReg => "logreg",
            ModelType::Bilstm => "bilstm",
        }
    }

    pub fn parse(text: &str) -> Option<ModelType> {
        match text {
            "nb" => Some(ModelType::Nb),
            "logreg" => Some(ModelType::LogReg),
            "bilstm" => Some(ModelType::Bilstm),
            _ => None,
        }
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub enum ModelParams {
    Nb(NbModel),
    LogReg(LrModel),
    Bilstm(BilstmModel),
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("text is empty after cleaning")]
    EmptyAfterClean,
    #[error("model rejected the input: {0}")]
    Model(String),
}

/// Trained parameters plus the vocabulary they were fitted on.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub vocab: Vocabulary,
    pub params: ModelParams,
    /// Content hash of the training dataset, carried for provenance.
    pub dataset_hash: String,
}

impl TrainedModel {
    pub fn model_type(&self) -> ModelType {
        match self.params {
            ModelParams::Nb(_) => ModelType::Nb,
            ModelParams::LogReg(_) => ModelType::LogReg,
            ModelParams::Bilstm(_) => ModelType::Bilstm,
        }
    }

    /// Classify raw text through the full pipeline: clean, vectorize per
    /// model type, predict. Confidence is a proper probability vector for
    /// every model family (Naïve Bayes log scores pass through softmax,
    /// which recovers the normalized posterior).
    pub fn classify_text(&self, raw: &str) -> Result<(Label, [f64; NUM_CLASSES]), ClassifyError> {
        let text = clean_text(raw);
        if text.is_empty() {
            return Err(ClassifyError::EmptyAfterClean);
        }
        let tokens: Vec<String> = text.split(' ').map(str::to_string).collect();
        let doc = CleanDocument {
            doc_id: 0,
            text,
            tokens,
            label: Label::Problem,
        };
        self.classify_document(&doc)
    }

    /// Classify an already-cleaned document.
    pub fn classify_document(
        &self,
        doc: &CleanDocument,
    ) -> Result<(Label, [f64; NUM_CLASSES]), ClassifyError> {
        match &self.params {
            ModelParams::Nb(nb) => {
                let (label, scores) = nb_predict(nb, &bow_counts(doc, &self.vocab));
                Ok((label, softmax(scores)))
            }
            ModelParams::LogReg(lr) => {
                let counts = bow_counts(doc, &self.vocab);
                Ok(lr_predict(lr, &tfidf_transform(&counts, &self.vocab)))
            }
            ModelParams::Bilstm(net) => {
                let seq = encode_sequence(doc, &self.vocab, net.config.max_len);
                let out = bilstm_predict(net, &[&seq])
                    .map_err(|e| ClassifyError::Model(e.to_string()))?;
                Ok(out[0])
            }
        }
    }
}
