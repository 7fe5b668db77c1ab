//! Portable model file format shared by all three classifier families.
//!
//! A model file is exactly two lines: a canonical JSON body and the
//! lowercase hex SHA-256 of the body's bytes. The body carries metadata,
//! the vocabulary, hyperparameters and named parameter tensors (row-major
//! f64, little-endian, base64). Serialization is deterministic, so training
//! with a fixed seed writes byte-identical files; the trailing hash makes
//! any single-byte corruption a load failure.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bilstm::{BilstmConfig, BilstmModel, DirectionParams};
use crate::corpus::NUM_CLASSES;
use crate::logreg::{LrHyperParams, LrModel};
use crate::model::{ModelParams, ModelType, TrainedModel};
use crate::nb::NbModel;
use crate::vectorize::Vocabulary;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EnvelopeError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
    #[error("fingerprint mismatch: file contents do not hash to the recorded fingerprint")]
    FingerprintMismatch,
    #[error("unsupported format_version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown model_type {0:?}")]
    UnknownModelType(String),
}

#[derive(Serialize, Deserialize)]
struct VocabularyBlock {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    total_docs: usize,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct EnvelopeBody {
    format_version: u32,
    model_type: String,
    created_at: String,
    dataset_hash: String,
    vocabulary: VocabularyBlock,
    hyperparams: serde_json::Value,
    tensors: Vec<Tensor>,
}

/// A model restored from disk, with the fingerprint that vouches for it.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: TrainedModel,
    pub fingerprint: String,
    pub created_at: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn tensor(name: &str, shape: &[usize], values: &[f64]) -> Tensor {
    debug_assert_eq!(shape.iter().product::<usize>(), values.len());
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Tensor {
        name: name.to_string(),
        shape: shape.to_vec(),
        data: BASE64.encode(bytes),
    }
}

fn decode_tensor(t: &Tensor) -> Result<Vec<f64>, EnvelopeError> {
    let bytes = BASE64
        .decode(&t.data)
        .map_err(|e| EnvelopeError::Corrupt(format!("tensor {}: bad base64: {e}", t.name)))?;
    if bytes.len() % 8 != 0 {
        return Err(EnvelopeError::Corrupt(format!(
            "tensor {}: byte length {} not a multiple of 8",
            t.name,
            bytes.len()
        )));
    }
    let expected: usize = t.shape.iter().product();
    if bytes.len() / 8 != expected {
        return Err(EnvelopeError::Corrupt(format!(
            "tensor {}: shape {:?} wants {expected} values, found {}",
            t.name,
            t.shape,
            bytes.len() / 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(EnvelopeError::Corrupt(format!(
            "tensor {}: non-finite value {v}",
            t.name
        )));
    }
    Ok(values)
}

fn build_body(model: &TrainedModel, created_at: &str) -> Result<EnvelopeBody, EnvelopeError> {
    let v = model.vocab.size();
    let (hyperparams, tensors) = match &model.params {
        ModelParams::Nb(nb) => {
            let hp = serde_json::json!({ "alpha": nb.alpha });
            let tensors = vec![
                tensor("class_log_prior", &[NUM_CLASSES], &nb.class_log_prior),
                tensor(
                    "token_log_likelihood",
                    &[NUM_CLASSES, v],
                    &nb.token_log_likelihood,
                ),
            ];
            (hp, tensors)
        }
        ModelParams::LogReg(lr) => {
            let hp = serde_json::to_value(&lr.hyperparams).expect("hyperparams serialize");
            let tensors = vec![
                tensor("weights", &[NUM_CLASSES, v], &lr.weights),
                tensor("bias", &[NUM_CLASSES], &lr.bias),
            ];
            (hp, tensors)
        }
        ModelParams::Bilstm(net) => {
            let hp = serde_json::to_value(&net.config).expect("config serialize");
            let e = net.config.embedding_dim;
            let mut tensors = vec![tensor("embedding", &[v + 2, e], &net.embedding)];
            for (l, [fwd, bwd]) in net.layers.iter().enumerate() {
                for (dir_name, dir) in [("fwd", fwd), ("bwd", bwd)] {
                    let h = dir.hidden;
                    let d = dir.input_dim;
                    tensors.push(tensor(&format!("layer{l}.{dir_name}.w"), &[4 * h, d], &dir.w));
                    tensors.push(tensor(&format!("layer{l}.{dir_name}.u"), &[4 * h, h], &dir.u));
                    tensors.push(tensor(&format!("layer{l}.{dir_name}.b"), &[4 * h], &dir.b));
                }
            }
            tensors.push(tensor(
                "head.w",
                &[NUM_CLASSES, net.repr_width()],
                &net.head_w,
            ));
            tensors.push(tensor("head.b", &[NUM_CLASSES], &net.head_b));
            (hp, tensors)
        }
    };
    Ok(EnvelopeBody {
        format_version: FORMAT_VERSION,
        model_type: model.model_type().as_str().to_string(),
        created_at: created_at.to_string(),
        dataset_hash: model.dataset_hash.clone(),
        vocabulary: VocabularyBlock {
            tokens: model.vocab.tokens().to_vec(),
            doc_freq: model.vocab.doc_freqs().to_vec(),
            total_docs: model.vocab.total_docs(),
        },
        hyperparams,
        tensors,
    })
}

/// Serialize to the two-line file format; returns (contents, fingerprint).
pub fn save_to_string(
    model: &TrainedModel,
    created_at: &str,
) -> Result<(String, String), EnvelopeError> {
    let body = build_body(model, created_at)?;
    let line = serde_json::to_string(&body)
        .map_err(|e| EnvelopeError::Corrupt(format!("serialization failed: {e}")))?;
    let fingerprint = sha256_hex(line.as_bytes());
    Ok((format!("{line}\n{fingerprint}\n"), fingerprint))
}

/// Write a model file; returns its fingerprint.
pub fn save(model: &TrainedModel, created_at: &str, path: &Path) -> Result<String, EnvelopeError> {
    let (contents, fingerprint) = save_to_string(model, created_at)?;
    std::fs::write(path, contents).map_err(|source| EnvelopeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(fingerprint)
}

fn expect_tensor<'a>(
    tensors: &'a [Tensor],
    name: &str,
    shape: &[usize],
) -> Result<&'a Tensor, EnvelopeError> {
    let t = tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| EnvelopeError::Corrupt(format!("missing tensor {name:?}")))?;
    if t.shape != shape {
        return Err(EnvelopeError::Corrupt(format!(
            "tensor {name}: expected shape {shape:?}, found {:?}",
            t.shape
        )));
    }
    Ok(t)
}

fn fixed3(values: Vec<f64>) -> [f64; NUM_CLASSES] {
    [values[0], values[1], values[2]]
}

/// Parse the two-line format and reconstruct the model, verifying the
/// fingerprint before anything else.
pub fn load_from_str(contents: &str) -> Result<LoadedModel, EnvelopeError> {
    let (body_line, hash_part) = contents
        .split_once('\n')
        .ok_or_else(|| EnvelopeError::Corrupt("missing fingerprint line".into()))?;
    let recorded = hash_part.trim_end_matches('\n');
    if recorded.len() != 64 || recorded.contains('\n') || !recorded.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(EnvelopeError::Corrupt(
            "fingerprint line is not a 64-character hex digest".into(),
        ));
    }
    if sha256_hex(body_line.as_bytes()) != recorded {
        return Err(EnvelopeError::FingerprintMismatch);
    }
    let body: EnvelopeBody = serde_json::from_str(body_line)
        .map_err(|e| EnvelopeError::Corrupt(format!("body is not valid JSON: {e}")))?;
    if body.format_version != FORMAT_VERSION {
        return Err(EnvelopeError::UnsupportedVersion(body.format_version));
    }
    let model_type = ModelType::parse(&body.model_type)
        .ok_or_else(|| EnvelopeError::UnknownModelType(body.model_type.clone()))?;
    let vocab = Vocabulary::from_parts(
        body.vocabulary.tokens,
        body.vocabulary.doc_freq,
        body.vocabulary.total_docs,
    )
    .map_err(|e| EnvelopeError::Corrupt(format!("vocabulary: {e}")))?;
    let v = vocab.size();

    let params = match model_type {
        ModelType::Nb => {
            let alpha = body
                .hyperparams
                .get("alpha")
                .and_then(|a| a.as_f64())
                .ok_or_else(|| EnvelopeError::Corrupt("missing hyperparameter alpha".into()))?;
            if !(alpha > 0.0) {
                return Err(EnvelopeError::Corrupt(format!("alpha must be positive, got {alpha}")));
            }
            let prior = decode_tensor(expect_tensor(&body.tensors, "class_log_prior", &[NUM_CLASSES])?)?;
            let tll = decode_tensor(expect_tensor(
                &body.tensors,
                "token_log_likelihood",
                &[NUM_CLASSES, v],
            )?)?;
            ModelParams::Nb(NbModel {
                class_log_prior: fixed3(prior),
                token_log_likelihood: tll,
                alpha,
                vocab_size: v,
            })
        }
        ModelType::LogReg => {
            let hp: LrHyperParams = serde_json::from_value(body.hyperparams.clone())
                .map_err(|e| EnvelopeError::Corrupt(format!("hyperparams: {e}")))?;
            let weights = decode_tensor(expect_tensor(&body.tensors, "weights", &[NUM_CLASSES, v])?)?;
            let bias = decode_tensor(expect_tensor(&body.tensors, "bias", &[NUM_CLASSES])?)?;
            ModelParams::LogReg(LrModel {
                weights,
                bias: fixed3(bias),
                vocab_size: v,
                hyperparams: hp,
            })
        }
        ModelType::Bilstm => {
            let config: BilstmConfig = serde_json::from_value(body.hyperparams.clone())
                .map_err(|e| EnvelopeError::Corrupt(format!("hyperparams: {e}")))?;
            let e = config.embedding_dim;
            let embedding = decode_tensor(expect_tensor(&body.tensors, "embedding", &[v + 2, e])?)?;
            let mut layers = Vec::with_capacity(config.hidden_sizes.len());
            let mut input_dim = e;
            for (l, &h) in config.hidden_sizes.iter().enumerate() {
                let mut dirs = Vec::with_capacity(2);
                for dir_name in ["fwd", "bwd"] {
                    let w = decode_tensor(expect_tensor(
                        &body.tensors,
                        &format!("layer{l}.{dir_name}.w"),
                        &[4 * h, input_dim],
                    )?)?;
                    let u = decode_tensor(expect_tensor(
                        &body.tensors,
                        &format!("layer{l}.{dir_name}.u"),
                        &[4 * h, h],
                    )?)?;
                    let b = decode_tensor(expect_tensor(
                        &body.tensors,
                        &format!("layer{l}.{dir_name}.b"),
                        &[4 * h],
                    )?)?;
                    dirs.push(DirectionParams {
                        w,
                        u,
                        b,
                        input_dim,
                        hidden: h,
                    });
                }
                let bwd = dirs.pop().expect("two directions");
                let fwd = dirs.pop().expect("two directions");
                layers.push([fwd, bwd]);
                input_dim = 2 * h;
            }
            let head_w = decode_tensor(expect_tensor(&body.tensors, "head.w", &[NUM_CLASSES, input_dim])?)?;
            let head_b = decode_tensor(expect_tensor(&body.tensors, "head.b", &[NUM_CLASSES])?)?;
            ModelParams::Bilstm(BilstmModel {
                embedding,
                layers,
                head_w,
                head_b: fixed3(head_b),
                config,
                vocab_size: v,
            })
        }
    };

    let expected_count = match model_type {
        ModelType::Nb | ModelType::LogReg => 2,
        ModelType::Bilstm => {
            3 + 6 * match &params {
                ModelParams::Bilstm(net) => net.layers.len(),
                _ => unreachable!(),
            }
        }
    };
    if body.tensors.len() != expected_count {
        return Err(EnvelopeError::Corrupt(format!(
            "expected {expected_count} tensors, found {}",
            body.tensors.len()
        )));
    }

    Ok(LoadedModel {
        model: TrainedModel {
            vocab,
            params,
            dataset_hash: body.dataset_hash,
        },
        fingerprint: sha256_hex(body_line.as_bytes()),
        created_at: body.created_at,
    })
}

/// Read and verify a model file.
pub fn load(path: &Path) -> Result<LoadedModel, EnvelopeError> {
    let contents = std::fs::read_to_string(path).map_err(|source| EnvelopeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_from_str(&contents)
}
