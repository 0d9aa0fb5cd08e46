//! Multi-head tagging: the backend contract, BIO decoding, cross-type overlap
//! resolution, windowing and the pattern-based mutation recognizer.
//!
//! A backend answers every requested entity-type head from one `tag()` call.
//! Each head is a [`TagProbSeq`]: one `(p_B, p_I, p_O)` row per token.

mod bio;
mod chunk;
mod gazetteer;
mod mutation;
mod overlap;
mod remote;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntityType, TokenSpan};
use crate::scalar::Scalar;

pub use bio::{decode_bio, Label};
pub use chunk::{chunk_tokens, MIN_WINDOW};
pub use gazetteer::GazetteerTagger;
pub use mutation::recognize_mutations;
pub use overlap::{resolve_overlaps, OverlapPolicy};
pub use remote::{parse_tag_response, RemoteTagger, TagRequest, TagResponse};

/// Tolerance on `p_B + p_I + p_O = 1`.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaggerError {
    #[error("tagger backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("tagger protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("{0} has no tagging head; mutations are recognized by patterns")]
    UnsupportedType(EntityType),
    #[error("{rows} probability rows for {tokens} tokens")]
    LengthMismatch { rows: usize, tokens: usize },
    #[error("window length {0} is below the minimum of 16 tokens")]
    WindowTooSmall(usize),
}

/// Per-token BIO probabilities emitted by one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagProbSeq<S> {
    pub etype: EntityType,
    pub rows: Vec<[S; 3]>,
}

impl<S: Scalar> TagProbSeq<S> {
    pub fn new(etype: EntityType, rows: Vec<[S; 3]>) -> Self {
        Self { etype, rows }
    }

    /// Every row's winning label is O.
    pub fn outside(etype: EntityType, len: usize) -> Self {
        let o = S::from_f64_lossy(gazetteer::P_OUTSIDE_ROW[2]);
        let rest = S::from_f64_lossy(gazetteer::P_OUTSIDE_ROW[0]);
        Self::new(etype, vec![[rest, rest, o]; len])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of the first row that is out of range or does not sum to one.
    pub fn first_invalid_row(&self) -> Option<usize> {
        let tol = S::from_f64_lossy(ROW_SUM_TOLERANCE);
        self.rows.iter().position(|r| {
            let sum = r[0] + r[1] + r[2];
            r.iter().any(|p| !(*p >= S::zero() && *p <= S::one())) || (sum - S::one()).abs() > tol
        })
    }
}

/// Outputs of one `tag()` call, keyed by head.
pub type HeadOutputs<S> = BTreeMap<EntityType, TagProbSeq<S>>;

/// A multi-head tagging model.
///
/// Implementations must be deterministic and safe to call concurrently.
pub trait TaggerBackend<S: Scalar>: Send + Sync {
    fn tag(&self, tokens: &[TokenSpan], types: &[EntityType]) -> Result<HeadOutputs<S>, TaggerError>;

    /// Short identifier reported by health checks.
    fn kind(&self) -> &'static str;

    fn is_available(&self) -> bool {
        true
    }
}

impl<S: Scalar, T: TaggerBackend<S> + ?Sized> TaggerBackend<S> for Arc<T> {
    fn tag(&self, tokens: &[TokenSpan], types: &[EntityType]) -> Result<HeadOutputs<S>, TaggerError> {
        (**self).tag(tokens, types)
    }

    fn kind(&self) -> &'static str {
        (**self).kind()
    }

    fn is_available(&self) -> bool {
        (**self).is_available()
    }
}

/// Deduplicates and orders requested heads, rejecting Mutation.
pub fn requested_heads(types: &[EntityType]) -> Result<Vec<EntityType>, TaggerError> {
    let mut v = types.to_vec();
    v.sort();
    v.dedup();
    if v.contains(&EntityType::Mutation) {
        return Err(TaggerError::UnsupportedType(EntityType::Mutation));
    }
    Ok(v)
}

/// Wraps a backend and counts `tag()` invocations.
#[derive(Debug)]
pub struct CountingTagger<T> {
    inner: T,
    calls: AtomicU64,
}

impl<T> CountingTagger<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<S: Scalar, T: TaggerBackend<S>> TaggerBackend<S> for CountingTagger<T> {
    fn tag(&self, tokens: &[TokenSpan], types: &[EntityType]) -> Result<HeadOutputs<S>, TaggerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.tag(tokens, types)
    }

    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    fn is_available(&self) -> bool {
        self.inner.is_available()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_validation() {
        let ok = TagProbSeq::new(EntityType::Gene, vec![[0.2f64, 0.3, 0.5]]);
        assert_eq!(ok.first_invalid_row(), None);
        let bad = TagProbSeq::new(EntityType::Gene, vec![[0.2f64, 0.3, 0.5], [0.5, 0.5, 0.5]]);
        assert_eq!(bad.first_invalid_row(), Some(1));
        let neg = TagProbSeq::new(EntityType::Gene, vec![[-0.1f32, 0.6, 0.5]]);
        assert_eq!(neg.first_invalid_row(), Some(0));
        assert_eq!(TagProbSeq::<f32>::outside(EntityType::Rna, 4).first_invalid_row(), None);
    }

    #[test]
    fn mutation_head_rejected() {
        assert_eq!(
            requested_heads(&[EntityType::Gene, EntityType::Mutation]),
            Err(TaggerError::UnsupportedType(EntityType::Mutation))
        );
        assert_eq!(
            requested_heads(&[EntityType::Drug, EntityType::Gene, EntityType::Drug]).unwrap(),
            vec![EntityType::Gene, EntityType::Drug]
        );
    }
}
