use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::{EntityType, TokenSpan};
use crate::scalar::Scalar;

use super::{requested_heads, HeadOutputs, TagProbSeq, TaggerBackend, TaggerError};

/// Remote replies may be off by this much before renormalization.
const WIRE_ROW_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRequest {
    pub tokens: Vec<String>,
    pub types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagResponse {
    pub heads: BTreeMap<String, Vec<Vec<f64>>>,
}

/// Validates a wire reply against the request and converts it to head outputs.
///
/// Every requested head must be present with one row per token; each row must
/// hold three probabilities summing to one (within 1e-4, then renormalized).
pub fn parse_tag_response<S: Scalar>(
    resp: &TagResponse,
    types: &[EntityType],
    n_tokens: usize,
) -> Result<HeadOutputs<S>, TaggerError> {
    let mut out = BTreeMap::new();
    for &t in types {
        let rows = resp
            .heads
            .get(t.as_str())
            .ok_or_else(|| TaggerError::ProtocolViolation(format!("missing head {t}")))?;
        if rows.len() != n_tokens {
            return Err(TaggerError::ProtocolViolation(format!(
                "head {t} has {} rows for {n_tokens} tokens",
                rows.len()
            )));
        }
        let mut parsed = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let bad = |why: &str| TaggerError::ProtocolViolation(format!("head {t} row {i}: {why}"));
            let &[b, inside, o] = row.as_slice() else {
                return Err(bad("expected 3 probabilities"));
            };
            if [b, inside, o].iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(bad("probability outside [0,1]"));
            }
            let sum = b + inside + o;
            if (sum - 1.0).abs() > WIRE_ROW_TOLERANCE {
                return Err(bad("row does not sum to 1"));
            }
            parsed.push([b / sum, inside / sum, o / sum].map(S::from_f64_lossy));
        }
        out.insert(t, TagProbSeq::new(t, parsed));
    }
    Ok(out)
}

/// Client for a tagging model served over HTTP.
///
/// `POST {base_url}/tag` with a [`TagRequest`]; `GET {base_url}/health` for liveness.
#[derive(Debug, Clone)]
pub struct RemoteTagger {
    base_url: String,
    agent: ureq::Agent,
}

impl RemoteTagger {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl<S: Scalar> TaggerBackend<S> for RemoteTagger {
    fn tag(&self, tokens: &[TokenSpan], types: &[EntityType]) -> Result<HeadOutputs<S>, TaggerError> {
        let heads = requested_heads(types)?;
        let req = TagRequest {
            tokens: tokens.iter().map(|t| t.surface.clone()).collect(),
            types: heads.iter().map(|t| t.as_str().to_string()).collect(),
        };
        let resp = self
            .agent
            .post(&format!("{}/tag", self.base_url))
            .send_json(&req)
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => {
                    TaggerError::BackendUnavailable(format!("tagger replied HTTP {code}"))
                }
                ureq::Error::Transport(t) => TaggerError::BackendUnavailable(t.to_string()),
            })?;
        let body: TagResponse = resp
            .into_json()
            .map_err(|e| TaggerError::ProtocolViolation(format!("undecodable reply: {e}")))?;
        parse_tag_response(&body, &heads, tokens.len())
    }

    fn kind(&self) -> &'static str {
        "remote"
    }

    fn is_available(&self) -> bool {
        self.agent
            .get(&format!("{}/health", self.base_url))
            .timeout(Duration::from_millis(500))
            .call()
            .is_ok()
    }
}
