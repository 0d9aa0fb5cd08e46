mod common;

use std::sync::Arc;

use bioann_core::ingest::MapFetcher;
use bioann_core::pipeline::{BackendKind, Pipeline, PipelineConfig};
use bioann_core::store::AnnotationStore;
use bioann_service::{ApiResult, AppState, Health, ItemStatus, PmidItem};
use common::{call, PubmedStub, Server};
use serde_json::Value;

const SENTENCE: &str = "Atg7 suppresses tumor growth through arginine metabolism.";

fn assert_error_body(body: &str) {
    let v: Value = serde_json::from_str(body).unwrap_or_else(|e| panic!("non-JSON error body {body:?}: {e}"));
    let obj = v.as_object().unwrap();
    assert_eq!(obj.len(), 1, "{body}");
    assert!(obj["error"].is_string(), "{body}");
}

fn fixture() -> (tempfile::TempDir, PubmedStub, Server) {
    let dir = tempfile::tempdir().unwrap();
    let stub = PubmedStub::start(30);
    let server = Server::start(common::state(dir.path(), &stub.url));
    (dir, stub, server)
}

#[test]
fn plain_empty_text() {
    let (_d, _s, srv) = fixture();
    let (code, body) = call("POST", &format!("{}/plain", srv.url), Some(r#"{"text":""}"#));
    assert_eq!(code, 200);
    let r: ApiResult = serde_json::from_str(&body).unwrap();
    assert!(r.annotations.is_empty());
    assert_eq!(r.text, "");
}

#[test]
fn plain_reference_sentence() {
    let (_d, _s, srv) = fixture();
    let req = serde_json::json!({ "text": SENTENCE }).to_string();
    let (code, body) = call("POST", &format!("{}/plain", srv.url), Some(&req));
    assert_eq!(code, 200);
    let r: ApiResult = serde_json::from_str(&body).unwrap();
    let arg = r.annotations.iter().find(|a| a.mention == "arginine").expect("arginine");
    assert_eq!(arg.obj, "drug");
    assert_eq!(arg.id, vec!["mesh:D001120"]);
    assert_eq!((arg.span.begin, arg.span.end), (37, 45));
    assert!(!arg.is_neural_normalized);
    let atg = r.annotations.iter().find(|a| a.mention == "Atg7").expect("Atg7");
    assert_eq!((atg.obj.as_str(), atg.id.as_slice()), ("gene", &["NCBIGene:10533".to_string()][..]));
    // sorted by begin offset
    assert!(r.annotations.windows(2).all(|w| w[0].span.begin <= w[1].span.begin));
    let raw: Value = serde_json::from_str(&body).unwrap();
    assert!(raw.get("pmid").is_none());
}

#[test]
fn plain_neural_flag_matches_ids() {
    let (_d, _s, srv) = fixture();
    let req = serde_json::json!({ "text": "Patients took oxichlorochine and an unknownase inhibitor." }).to_string();
    let (_, body) = call("POST", &format!("{}/plain", srv.url), Some(&req));
    let r: ApiResult = serde_json::from_str(&body).unwrap();
    let oxi = r.annotations.iter().find(|a| a.mention == "oxichlorochine").expect("gazetteer phrase");
    assert!(oxi.is_neural_normalized);
    assert_eq!(oxi.id, vec!["mesh:D006886"]);
    for a in &r.annotations {
        if a.is_neural_normalized {
            assert_eq!(a.id.len(), 1);
        }
    }
}

#[test]
fn plain_bad_requests() {
    let (_d, _s, srv) = fixture();
    let url = format!("{}/plain", srv.url);
    for body in [r#"{"txt":"Atg7"}"#, r#"{"text":5}"#, "not json", "[]"] {
        let (code, reply) = call("POST", &url, Some(body));
        assert_eq!(code, 400, "{body}");
        assert_error_body(&reply);
        if body.contains("txt") {
            assert!(reply.contains("text"));
        }
    }
}

#[test]
fn plain_input_too_large() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        max_chars: 10,
        ..Default::default()
    };
    let state = AppState::new(
        Pipeline::from_config(cfg).unwrap(),
        AnnotationStore::open(dir.path().join("c.log")).unwrap(),
        Arc::new(MapFetcher::new()),
    );
    let srv = Server::start(state);
    let (code, body) = call("POST", &format!("{}/plain", srv.url), Some(r#"{"text":"0123456789x"}"#));
    assert_eq!(code, 400);
    assert_error_body(&body);
    // ten multi-byte characters still fit
    let (code, _) = call("POST", &format!("{}/plain", srv.url), Some(r#"{"text":"ééééééééé€"}"#));
    assert_eq!(code, 200);
}

fn dead_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    format!("http://{}", l.local_addr().unwrap())
}

#[test]
fn remote_backend_down() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        backend: BackendKind::Remote,
        tagger_url: Some(dead_url()),
        tagger_timeout_ms: 500,
        ..Default::default()
    };
    let state = AppState::new(
        Pipeline::from_config(cfg).unwrap(),
        AnnotationStore::open(dir.path().join("c.log")).unwrap(),
        Arc::new(MapFetcher::new()),
    );
    let srv = Server::start(state);
    let (code, body) = call("POST", &format!("{}/plain", srv.url), Some(r#"{"text":"Atg7 binds."}"#));
    assert_eq!(code, 503);
    assert_error_body(&body);
    let (code, body) = call("GET", &format!("{}/health", srv.url), None);
    assert_eq!(code, 200);
    let h: Health = serde_json::from_str(&body).unwrap();
    assert_eq!(h.backend, "remote");
    assert!(!h.backend_ok);
}

#[test]
fn health_and_cache_records() {
    let (_d, stub, srv) = fixture();
    let (code, body) = call("GET", &format!("{}/health", srv.url), None);
    assert_eq!(code, 200);
    let h: Health = serde_json::from_str(&body).unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.backend, "gazetteer");
    assert!(h.backend_ok);
    assert_eq!(h.cache_records, 0);
    assert!(!h.pipeline_version.is_empty());

    let (code, _) = call("POST", &format!("{}/pmid", srv.url), Some(r#"{"pmids":["3"]}"#));
    assert_eq!(code, 200);
    let (_, body) = call("GET", &format!("{}/health", srv.url), None);
    let h: Health = serde_json::from_str(&body).unwrap();
    assert_eq!(h.cache_records, 1);
    assert_eq!(stub.hits(), 1);
}

#[test]
fn pmid_cold_then_warm() {
    let (_d, stub, srv) = fixture();
    let url = format!("{}/pmid", srv.url);
    let req = r#"{"pmids":["1","2"]}"#;
    let (code, cold) = call("POST", &url, Some(req));
    assert_eq!(code, 200);
    let (_, warm) = call("POST", &url, Some(req));
    assert_eq!(stub.hits(), 2, "second call must be served from the cache");
    let strip = |s: &str| {
        let mut items: Vec<PmidItem> = serde_json::from_str(s).unwrap();
        for i in &mut items {
            assert_eq!(i.status, ItemStatus::Ok);
            i.result.as_mut().unwrap().elapsed_ms = 0.0;
        }
        items
    };
    let (c, w) = (strip(&cold), strip(&warm));
    assert_eq!(c, w);
    assert_eq!(c.iter().map(|i| i.pmid.as_str()).collect::<Vec<_>>(), ["1", "2"]);
    assert_eq!(c[0].result.as_ref().unwrap().pmid.as_deref(), Some("1"));
    let (title, _) = common::abstract_for(1);
    assert!(c[0].result.as_ref().unwrap().text.starts_with(&title));
}

#[test]
fn pmid_partial_failure_keeps_order() {
    let (_d, _s, srv) = fixture();
    let (code, body) = call("POST", &format!("{}/pmid", srv.url), Some(r#"{"pmids":["5","999","6"]}"#));
    assert_eq!(code, 200);
    let items: Vec<PmidItem> = serde_json::from_str(&body).unwrap();
    let got: Vec<(&str, ItemStatus)> = items.iter().map(|i| (i.pmid.as_str(), i.status)).collect();
    assert_eq!(
        got,
        [("5", ItemStatus::Ok), ("999", ItemStatus::NotFound), ("6", ItemStatus::Ok)]
    );
    assert!(items[1].result.is_none());
}

#[test]
fn pmid_fetch_error_is_per_item() {
    let dir = tempfile::tempdir().unwrap();
    let srv = Server::start(common::state(dir.path(), &dead_url()));
    let (code, body) = call("POST", &format!("{}/pmid", srv.url), Some(r#"{"pmids":["5"]}"#));
    assert_eq!(code, 200);
    let items: Vec<PmidItem> = serde_json::from_str(&body).unwrap();
    assert_eq!(items[0].status, ItemStatus::Error);
    assert!(items[0].error.is_some());
}

#[test]
fn pmid_bad_requests() {
    let (_d, stub, srv) = fixture();
    let url = format!("{}/pmid", srv.url);
    let many: Vec<String> = (1..=101).map(|i| i.to_string()).collect();
    let too_many = serde_json::json!({ "pmids": many }).to_string();
    let ok_cap: Vec<String> = (1..=100).map(|i| (i % 30 + 1).to_string()).collect();
    for body in [
        r#"{"pmids":[]}"#.to_string(),
        too_many,
        r#"{"pmids":["12a"]}"#.to_string(),
        r#"{"pmids":[12]}"#.to_string(),
        r#"{"pmids":[""]}"#.to_string(),
        r#"{"ids":["1"]}"#.to_string(),
    ] {
        let (code, reply) = call("POST", &url, Some(&body));
        assert_eq!(code, 400, "{body}");
        assert_error_body(&reply);
    }
    assert_eq!(stub.hits(), 0);
    let (code, body) = call("POST", &url, Some(&serde_json::json!({ "pmids": ok_cap }).to_string()));
    assert_eq!(code, 200);
    assert_eq!(serde_json::from_str::<Vec<PmidItem>>(&body).unwrap().len(), 100);
}

#[test]
fn unknown_route_and_method_are_json() {
    let (_d, _s, srv) = fixture();
    let (code, body) = call("GET", &format!("{}/nope", srv.url), None);
    assert_eq!(code, 404);
    assert_error_body(&body);
    let (code, body) = call("GET", &format!("{}/plain", srv.url), None);
    assert_eq!(code, 405);
    assert_error_body(&body);
}
