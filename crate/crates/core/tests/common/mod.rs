#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use bioann_core::model::{EntityType, TokenSpan};
use bioann_core::normalizer::{EmbedRequest, EmbedResponse, MockEncoder};
use bioann_core::tagger::{GazetteerTagger, HeadOutputs, TagRequest, TagResponse, TaggerBackend};

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub content_type: &'static str,
}

impl Reply {
    pub fn json(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
            content_type: "application/json",
        }
    }

    pub fn xml(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
            content_type: "application/xml",
        }
    }
}

/// Minimal HTTP server answering every request with `handler(method, url, body)`.
pub struct Stub {
    pub url: String,
    pub hits: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Stub {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&str, &str, &str) -> Reply + Send + Sync + 'static,
    {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let hits = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let (h, s) = (hits.clone(), stop.clone());
        let thread = std::thread::spawn(move || {
            while !s.load(Ordering::SeqCst) {
                let Ok(Some(mut req)) = server.recv_timeout(std::time::Duration::from_millis(20)) else {
                    continue;
                };
                h.fetch_add(1, Ordering::SeqCst);
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let reply = handler(&req.method().to_string(), req.url(), &body);
                let header = tiny_http::Header::from_bytes("Content-Type", reply.content_type).unwrap();
                let resp = tiny_http::Response::from_string(reply.body)
                    .with_status_code(reply.status)
                    .with_header(header);
                let _ = req.respond(resp);
            }
        });
        Self {
            url,
            hits,
            stop,
            thread: Some(thread),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves the tagger protocol from a gazetteer.
pub fn tagger_stub(gaz: GazetteerTagger) -> Stub {
    Stub::start(move |method, url, body| match (method, url) {
        ("GET", "/health") => Reply::json(200, r#"{"status":"ok"}"#),
        ("POST", "/tag") => {
            let Ok(req) = serde_json::from_str::<TagRequest>(body) else {
                return Reply::json(400, r#"{"error":"bad request"}"#);
            };
            let mut types = Vec::new();
            for t in &req.types {
                match t.parse::<EntityType>() {
                    Ok(EntityType::Mutation) | Err(_) => return Reply::json(400, r#"{"error":"unsupported type"}"#),
                    Ok(et) => types.push(et),
                }
            }
            // offsets are irrelevant to the gazetteer; only surfaces matter
            let tokens: Vec<TokenSpan> = req
                .tokens
                .iter()
                .map(|s| TokenSpan {
                    begin: 0,
                    end: 0,
                    surface: s.clone(),
                })
                .collect();
            let out: HeadOutputs<f64> = gaz.tag(&tokens, &types).unwrap();
            let heads: BTreeMap<String, Vec<Vec<f64>>> = out
                .into_iter()
                .map(|(t, seq)| (t.as_str().to_string(), seq.rows.iter().map(|r| r.to_vec()).collect()))
                .collect();
            Reply::json(200, serde_json::to_string(&TagResponse { heads }).unwrap())
        }
        _ => Reply::json(404, r#"{"error":"not found"}"#),
    })
}

/// Serves the encoder protocol from the mock encoder.
pub fn encoder_stub() -> Stub {
    let enc = MockEncoder::default();
    Stub::start(move |method, url, body| match (method, url) {
        ("POST", "/embed") => {
            let Ok(req) = serde_json::from_str::<EmbedRequest>(body) else {
                return Reply::json(400, r#"{"error":"bad request"}"#);
            };
            let vectors = req.names.iter().map(|n| enc.embed_f64(n)).collect();
            Reply::json(200, serde_json::to_string(&EmbedResponse { vectors }).unwrap())
        }
        _ => Reply::json(404, r#"{"error":"not found"}"#),
    })
}
