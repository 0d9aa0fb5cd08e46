//! Wire-protocol checks for remote tagger and encoder services.
//!
//! The same checks run against the in-repo stub servers in tests and can be
//! pointed at any external model server.

use std::time::Duration;

use serde::Serialize;

use crate::model::EntityType;
use crate::normalizer::{parse_embed_response, EmbedRequest, EmbedResponse};
use crate::tagger::{parse_tag_response, TagRequest, TagResponse};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn record(&mut self, name: &'static str, outcome: Result<(), String>) {
        let (passed, detail) = match outcome {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.checks.push(CheckResult { name, passed, detail });
    }
}

const FIXTURE_TOKENS: [&str; 8] = ["Atg7", "suppresses", "tumor", "growth", "through", "arginine", "metabolism", "."];

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

fn post_json<T: Serialize>(agent: &ureq::Agent, url: &str, body: &T) -> Result<(u16, String), String> {
    match agent.post(url).send_json(body) {
        Ok(r) => {
            let code = r.status();
            r.into_string().map(|b| (code, b)).map_err(|e| e.to_string())
        }
        Err(ureq::Error::Status(code, r)) => Ok((code, r.into_string().unwrap_or_default())),
        Err(ureq::Error::Transport(t)) => Err(t.to_string()),
    }
}

fn tag_call(agent: &ureq::Agent, base: &str, tokens: &[&str], types: &[EntityType]) -> Result<String, String> {
    let req = TagRequest {
        tokens: tokens.iter().map(|s| s.to_string()).collect(),
        types: types.iter().map(|t| t.as_str().to_string()).collect(),
    };
    let (code, body) = post_json(agent, &format!("{base}/tag"), &req)?;
    if code != 200 {
        return Err(format!("HTTP {code}: {body}"));
    }
    Ok(body)
}

fn parse_tag(body: &str, types: &[EntityType], n: usize) -> Result<TagResponse, String> {
    let resp: TagResponse = serde_json::from_str(body).map_err(|e| format!("bad JSON: {e}"))?;
    parse_tag_response::<f64>(&resp, types, n).map_err(|e| e.to_string())?;
    Ok(resp)
}

/// Runs the tagger protocol checks against `base_url`.
pub fn check_tagger(base_url: &str, timeout: Duration) -> ConformanceReport {
    let base = base_url.trim_end_matches('/');
    let agent = agent(timeout);
    let types = EntityType::TAGGED;
    let mut report = ConformanceReport::default();

    report.record(
        "tagger_health",
        match agent.get(&format!("{base}/health")).call() {
            Ok(r) if r.status() == 200 => Ok(()),
            Ok(r) => Err(format!("HTTP {}", r.status())),
            Err(e) => Err(e.to_string()),
        },
    );

    report.record(
        "tagger_empty_tokens",
        tag_call(&agent, base, &[], &types).and_then(|b| parse_tag(&b, &types, 0).map(|_| ())),
    );

    let first = tag_call(&agent, base, &FIXTURE_TOKENS, &types)
        .and_then(|b| parse_tag(&b, &types, FIXTURE_TOKENS.len()));
    report.record("tagger_fixture_schema", first.as_ref().map(|_| ()).map_err(Clone::clone));

    report.record(
        "tagger_deterministic",
        match &first {
            Ok(a) => tag_call(&agent, base, &FIXTURE_TOKENS, &types)
                .and_then(|b| parse_tag(&b, &types, FIXTURE_TOKENS.len()))
                .and_then(|b| if &b == a { Ok(()) } else { Err("repeated request changed the reply".into()) }),
            Err(_) => Err("skipped: fixture request failed".into()),
        },
    );

    let mut reversed = types;
    reversed.reverse();
    report.record(
        "tagger_type_order_independent",
        match &first {
            Ok(a) => tag_call(&agent, base, &FIXTURE_TOKENS, &reversed)
                .and_then(|b| parse_tag(&b, &reversed, FIXTURE_TOKENS.len()))
                .and_then(|b| {
                    if b.heads == a.heads {
                        Ok(())
                    } else {
                        Err("head values depend on type order".into())
                    }
                }),
            Err(_) => Err("skipped: fixture request failed".into()),
        },
    );

    report.record(
        "tagger_rejects_mutation",
        match tag_call(&agent, base, &FIXTURE_TOKENS, &[EntityType::Gene, EntityType::Mutation]) {
            Err(e) if e.starts_with("HTTP 400") => Ok(()),
            Err(e) => Err(format!("expected HTTP 400, got {e}")),
            Ok(_) => Err("expected HTTP 400, got 200".into()),
        },
    );
    report
}

fn embed_call(agent: &ureq::Agent, base: &str, names: &[String], dim: usize) -> Result<Vec<Vec<f64>>, String> {
    let (code, body) = post_json(agent, &format!("{base}/embed"), &EmbedRequest { names: names.to_vec() })?;
    if code != 200 {
        return Err(format!("HTTP {code}: {body}"));
    }
    let resp: EmbedResponse = serde_json::from_str(&body).map_err(|e| format!("bad JSON: {e}"))?;
    parse_embed_response::<f64>(&resp, names.len(), dim).map_err(|e| e.to_string())?;
    Ok(resp.vectors)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs the encoder protocol checks against `base_url` for dimension `dim`.
pub fn check_encoder(base_url: &str, dim: usize, timeout: Duration) -> ConformanceReport {
    let base = base_url.trim_end_matches('/');
    let agent = agent(timeout);
    let mut report = ConformanceReport::default();

    let single = embed_call(&agent, base, &["hydroxychloroquine".to_string()], dim);
    report.record("encoder_single_unit_norm", single.as_ref().map(|_| ()).map_err(Clone::clone));

    report.record(
        "encoder_duplicates_identical",
        embed_call(&agent, base, &["arginine".to_string(), "arginine".to_string()], dim).and_then(|v| {
            if v[0] == v[1] {
                Ok(())
            } else {
                Err("duplicate names got different vectors".into())
            }
        }),
    );

    let names: Vec<String> = (0..64).map(|i| format!("name {i} atg{}", i * 7)).collect();
    report.record(
        "encoder_batch_order",
        embed_call(&agent, base, &names, dim).and_then(|batch| {
            for probe in [0usize, 17, 63] {
                let alone = embed_call(&agent, base, &names[probe..=probe], dim)?;
                if max_abs_diff(&alone[0], &batch[probe]) > 1e-6 {
                    return Err(format!("batch row {probe} differs from a single request"));
                }
            }
            Ok(())
        }),
    );
    report
}
