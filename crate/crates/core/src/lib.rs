//! Biomedical named-entity recognition and normalization.
//!
//! Text is tokenized with char-offset tracking, tagged by a multi-head
//! backend in one pass per window, decoded from BIO probabilities into typed
//! mentions, and normalized to concept ids by a rule cascade with a dense
//! retrieval fallback. PubMed abstracts are fetched on demand and their
//! annotations cached in an append-only log keyed by PMID.
//!
//! Numeric code is generic over [`scalar::Scalar`]; the aliases below fix the
//! precisions used by the service and tools.

pub mod bench;
pub mod conformance;
pub mod evalkit;
pub mod ingest;
pub mod model;
pub mod normalizer;
pub mod pipeline;
pub mod scalar;
pub mod store;
pub mod tagger;
pub mod textproc;

pub type TagProbSeqF32 = tagger::TagProbSeq<f32>;
pub type TagProbSeqF64 = tagger::TagProbSeq<f64>;
pub type EmbeddingIndexF32 = normalizer::EmbeddingIndex<f32>;
pub type EmbeddingIndexF64 = normalizer::EmbeddingIndex<f64>;
pub type HybridNormalizerF32 = normalizer::HybridNormalizer<f32>;
pub type PipelineF32 = pipeline::Pipeline<f32>;
pub type PipelineF64 = pipeline::Pipeline<f64>;
pub type NerScoreF64 = evalkit::NerScore<f64>;
pub type PrfScoreF64 = evalkit::PrfScore<f64>;
