//! Hybrid entity normalization.
//!
//! A mention is first looked up in the type's lexicon through a cascade of
//! increasingly lenient keys. Mentions the rules miss fall back to dense
//! retrieval over a dictionary embedding matrix for the types that have one
//! (gene, disease, drug). Every result records which path produced it.

mod encoder;
mod index;
mod keys;
mod lexicon;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{EntityType, Normalization};
use crate::scalar::Scalar;

pub use encoder::{
    parse_embed_response, CountingEncoder, EmbedRequest, EmbedResponse, Encoder, MockEncoder,
    RemoteEncoder, MOCK_DIM,
};
pub use index::{
    build_index, build_index_from_pairs, dense_retrieve, EmbeddingIndex, Retrieved, INDEX_MAGIC,
};
pub use keys::normalize_keys;
pub use lexicon::{rule_normalize, Lexicon};

/// Default minimum cosine score for accepting a dense-retrieval hit.
pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexiconError {
    #[error("{file}:{line_no}: {reason}")]
    InvalidLine {
        file: String,
        line_no: usize,
        reason: String,
    },
    #[error("cannot read lexicon {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncoderError {
    #[error("encoder unavailable: {0}")]
    Unavailable(String),
    #[error("encoder protocol violation: {0}")]
    ProtocolViolation(String),
}

#[derive(Debug, Error)]
pub enum IndexFormatError {
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("index file truncated or unreadable: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid index file: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("cannot build an index from an empty lexicon")]
    EmptyLexicon,
    #[error("embedding index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Rule cascade first; dense retrieval for neural-capable types when the
/// best score reaches `threshold`; otherwise unmapped.
///
/// The encoder is never called when the rules hit.
pub fn hybrid_normalize<S: Scalar>(
    mention: &str,
    etype: EntityType,
    lex: Option<&Lexicon>,
    idx: Option<&EmbeddingIndex<S>>,
    enc: &dyn Encoder<S>,
    threshold: f64,
) -> Result<Normalization, NormalizeError> {
    if let Some((ids, _)) = lex.and_then(|l| rule_normalize(mention, l)) {
        return Ok(Normalization::rule(ids));
    }
    if !etype.has_neural_normalizer() {
        return Ok(Normalization::unmapped());
    }
    let Some(idx) = idx else {
        return Ok(Normalization::unmapped());
    };
    let hits = dense_retrieve(mention, idx, enc, 1)?;
    match hits.into_iter().next() {
        Some(top) if top.score.to_f64_lossy() >= threshold => {
            Ok(Normalization::neural(top.cui, top.score.to_f64_lossy()))
        }
        _ => Ok(Normalization::unmapped()),
    }
}

/// Lexicons, indexes and thresholds for every configured type.
pub struct HybridNormalizer<S: Scalar> {
    lexicons: BTreeMap<EntityType, Lexicon>,
    indexes: BTreeMap<EntityType, EmbeddingIndex<S>>,
    encoder: Arc<dyn Encoder<S>>,
    thresholds: BTreeMap<EntityType, f64>,
    default_threshold: f64,
    neural: bool,
}

impl<S: Scalar> std::fmt::Debug for HybridNormalizer<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridNormalizer")
            .field("types", &self.lexicons.keys().collect::<Vec<_>>())
            .field("indexed", &self.indexes.keys().collect::<Vec<_>>())
            .field("neural", &self.neural)
            .finish()
    }
}

impl<S: Scalar> HybridNormalizer<S> {
    /// Builds dense indexes for the neural-capable types among `lexicons`.
    pub fn new(lexicons: Vec<Lexicon>, encoder: Arc<dyn Encoder<S>>) -> Result<Self, NormalizeError> {
        let mut indexes = BTreeMap::new();
        for lex in &lexicons {
            if lex.etype().has_neural_normalizer() && !lex.is_empty() {
                indexes.insert(lex.etype(), build_index(lex, encoder.as_ref())?);
            }
        }
        Ok(Self::with_indexes(lexicons, indexes, encoder))
    }

    /// Uses prebuilt indexes instead of embedding the lexicons.
    pub fn with_indexes(
        lexicons: Vec<Lexicon>,
        indexes: BTreeMap<EntityType, EmbeddingIndex<S>>,
        encoder: Arc<dyn Encoder<S>>,
    ) -> Self {
        Self {
            lexicons: lexicons.into_iter().map(|l| (l.etype(), l)).collect(),
            indexes,
            encoder,
            thresholds: BTreeMap::new(),
            default_threshold: DEFAULT_THRESHOLD,
            neural: true,
        }
    }

    pub fn set_threshold(&mut self, etype: EntityType, threshold: f64) {
        self.thresholds.insert(etype, threshold);
    }

    pub fn set_default_threshold(&mut self, threshold: f64) {
        self.default_threshold = threshold;
    }

    /// Disables the dense fallback (rule-only normalization).
    pub fn set_neural(&mut self, enabled: bool) {
        self.neural = enabled;
    }

    pub fn threshold(&self, etype: EntityType) -> f64 {
        self.thresholds.get(&etype).copied().unwrap_or(self.default_threshold)
    }

    pub fn lexicon(&self, etype: EntityType) -> Option<&Lexicon> {
        self.lexicons.get(&etype)
    }

    pub fn index(&self, etype: EntityType) -> Option<&EmbeddingIndex<S>> {
        self.indexes.get(&etype)
    }

    pub fn lexicons(&self) -> impl Iterator<Item = &Lexicon> {
        self.lexicons.values()
    }

    pub fn normalize(&self, mention: &str, etype: EntityType) -> Result<Normalization, NormalizeError> {
        let idx = if self.neural { self.indexes.get(&etype) } else { None };
        hybrid_normalize(
            mention,
            etype,
            self.lexicons.get(&etype),
            idx,
            self.encoder.as_ref(),
            self.threshold(etype),
        )
    }
}
