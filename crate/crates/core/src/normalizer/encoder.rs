use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::scalar::{normalize_in_place, Scalar};

use super::EncoderError;

/// Maps entity names to unit-length vectors of a fixed dimension.
pub trait Encoder<S: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_batch(&self, names: &[&str]) -> Result<Vec<Vec<S>>, EncoderError>;

    fn embed(&self, name: &str) -> Result<Vec<S>, EncoderError> {
        let mut v = self.embed_batch(&[name])?;
        v.pop()
            .ok_or_else(|| EncoderError::ProtocolViolation("empty batch reply".into()))
    }
}

impl<S: Scalar, E: Encoder<S> + ?Sized> Encoder<S> for Arc<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed_batch(&self, names: &[&str]) -> Result<Vec<Vec<S>>, EncoderError> {
        (**self).embed_batch(names)
    }

    fn embed(&self, name: &str) -> Result<Vec<S>, EncoderError> {
        (**self).embed(name)
    }
}

pub const MOCK_DIM: usize = 256;
const MOCK_INDEX_SEED: u64 = 0x5eed_0001;
const MOCK_SIGN_SEED: u64 = 0x5eed_0002;

/// Deterministic character n-gram hashing encoder.
///
/// Strings sharing many character trigrams get a high inner product, which is
/// the property dense dictionary retrieval relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEncoder {
    pub dim: usize,
    pub index_seed: u64,
    pub sign_seed: u64,
}

impl Default for MockEncoder {
    fn default() -> Self {
        Self::new(MOCK_DIM)
    }
}

fn seeded_hash(seed: u64, bytes: &[u8]) -> u64 {
    // FNV-1a followed by the murmur3 finalizer
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

impl MockEncoder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            index_seed: MOCK_INDEX_SEED,
            sign_seed: MOCK_SIGN_SEED,
        }
    }

    /// Character n-grams of the lowercased, boundary-marked name: trigrams, or
    /// bigrams plus unigrams for names shorter than three chars.
    pub fn features(name: &str) -> Vec<String> {
        let lower: Vec<char> = name.to_lowercase().chars().collect();
        let mut marked = Vec::with_capacity(lower.len() + 2);
        marked.push('<');
        marked.extend_from_slice(&lower);
        marked.push('>');
        if lower.len() >= 3 {
            marked.windows(3).map(|w| w.iter().collect()).collect()
        } else {
            marked
                .windows(2)
                .map(|w| w.iter().collect())
                .chain(lower.iter().map(|c| c.to_string()))
                .collect()
        }
    }

    pub fn embed_f64(&self, name: &str) -> Vec<f64> {
        let mut v = vec![0.0f64; self.dim];
        for gram in Self::features(name) {
            let slot = (seeded_hash(self.index_seed, gram.as_bytes()) % self.dim as u64) as usize;
            let sign = if seeded_hash(self.sign_seed, gram.as_bytes()) & 1 == 0 {
                1.0
            } else {
                -1.0
            };
            v[slot] += sign;
        }
        if !normalize_in_place(&mut v) {
            v.iter_mut().for_each(|x| *x = 0.0);
            v[0] = 1.0;
        }
        v
    }
}

impl<S: Scalar> Encoder<S> for MockEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, names: &[&str]) -> Result<Vec<Vec<S>>, EncoderError> {
        Ok(names
            .iter()
            .map(|n| {
                let mut v: Vec<S> = self.embed_f64(n).into_iter().map(S::from_f64_lossy).collect();
                // re-normalize after narrowing so the norm holds in S
                normalize_in_place(&mut v);
                v
            })
            .collect())
    }
}

/// Wraps an encoder and counts how many names it has embedded.
#[derive(Debug)]
pub struct CountingEncoder<E> {
    inner: E,
    names: AtomicU64,
}

impl<E> CountingEncoder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            names: AtomicU64::new(0),
        }
    }

    pub fn invocations(&self) -> u64 {
        self.names.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.names.store(0, Ordering::SeqCst);
    }
}

impl<S: Scalar, E: Encoder<S>> Encoder<S> for CountingEncoder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_batch(&self, names: &[&str]) -> Result<Vec<Vec<S>>, EncoderError> {
        self.names.fetch_add(names.len() as u64, Ordering::SeqCst);
        self.inner.embed_batch(names)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Vectors may deviate from unit norm by this much before renormalization.
const WIRE_NORM_TOLERANCE: f64 = 1e-4;

/// Checks a wire reply: one `dim`-vector per name, each of unit norm.
pub fn parse_embed_response<S: Scalar>(
    resp: &EmbedResponse,
    n_names: usize,
    dim: usize,
) -> Result<Vec<Vec<S>>, EncoderError> {
    if resp.vectors.len() != n_names {
        return Err(EncoderError::ProtocolViolation(format!(
            "{} vectors for {n_names} names",
            resp.vectors.len()
        )));
    }
    resp.vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if v.len() != dim {
                return Err(EncoderError::ProtocolViolation(format!(
                    "vector {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > WIRE_NORM_TOLERANCE {
                return Err(EncoderError::ProtocolViolation(format!(
                    "vector {i} has norm {norm}"
                )));
            }
            let mut out: Vec<S> = v.iter().map(|&x| S::from_f64_lossy(x / norm)).collect();
            normalize_in_place(&mut out);
            Ok(out)
        })
        .collect()
}

/// Client for an encoder served over HTTP: `POST {base_url}/embed`.
#[derive(Debug, Clone)]
pub struct RemoteEncoder {
    base_url: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteEncoder {
    pub fn new(base_url: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            dim,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl<S: Scalar> Encoder<S> for RemoteEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, names: &[&str]) -> Result<Vec<Vec<S>>, EncoderError> {
        let req = EmbedRequest {
            names: names.iter().map(|s| s.to_string()).collect(),
        };
        let resp = self
            .agent
            .post(&format!("{}/embed", self.base_url))
            .send_json(&req)
            .map_err(|e| EncoderError::Unavailable(e.to_string()))?;
        let body: EmbedResponse = resp
            .into_json()
            .map_err(|e| EncoderError::ProtocolViolation(format!("undecodable reply: {e}")))?;
        parse_embed_response(&body, names.len(), self.dim)
    }
}
