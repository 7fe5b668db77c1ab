//! Training, evaluation and serialization of support-ticket classifiers.
//!
//! The crate covers the full offline pipeline: CSV ingestion and text
//! cleaning ([`corpus`]), bag-of-words and sequence encodings
//! ([`vectorize`]), three classifier families ([`nb`], [`logreg`],
//! [`bilstm`]), repeated stratified cross-validation ([`eval`]), a portable
//! model file format ([`envelope`]) and a synthetic corpus generator for
//! self-contained benchmarks ([`synth`]).

pub mod bilstm;
pub mod corpus;
pub mod envelope;
pub mod eval;
pub mod logreg;
pub mod model;
pub mod nb;
pub mod seed;
pub mod synth;
pub mod vectorize;
