#![allow(dead_code)]

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use bioann_core::ingest::{FetcherConfig, HttpFetcher};
use bioann_core::pipeline::{Pipeline, PipelineConfig};
use bioann_core::store::AnnotationStore;
use bioann_service::AppState;

/// The service running on an ephemeral port in a background runtime.
pub struct Server {
    pub url: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(state: AppState) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                bioann_service::serve(listener, state, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            url: format!("http://{addr}"),
            stop: Some(stop_tx),
            thread: Some(thread),
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Sends a request and returns (status, body) for any HTTP status.
pub fn call(method: &str, url: &str, body: Option<&str>) -> (u16, String) {
    let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build();
    let req = agent.request(method, url).set("Content-Type", "application/json");
    let res = match body {
        Some(b) => req.send_string(b),
        None => req.call(),
    };
    match res {
        Ok(r) => {
            let code = r.status();
            (code, r.into_string().unwrap())
        }
        Err(ureq::Error::Status(code, r)) => (code, r.into_string().unwrap()),
        Err(e) => panic!("transport error: {e}"),
    }
}

pub fn abstract_for(i: usize) -> (String, String) {
    let genes = ["Atg7", "BRCA1", "TP53", "EGFR", "KRAS"];
    let drugs = ["arginine", "hydroxychloroquine", "cisplatin", "metformin", "aspirin"];
    let title = format!("{} signalling and {} response in study {i}", genes[i % 5], drugs[(i / 5) % 5]);
    let body = format!(
        "We examined {} expression in patients with breast cancer. Treatment with {} reduced tumor growth. \
         The p.V600E mutation was detected in {} of 40 samples. Mice received {} daily.",
        genes[(i + 1) % 5],
        drugs[i % 5],
        i + 3,
        drugs[(i + 2) % 5]
    );
    (title, body)
}

/// Stub literature server answering `GET /{pmid}` for pmids 1..=n with JSON.
pub struct PubmedStub {
    pub url: String,
    pub hits: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl PubmedStub {
    pub fn start(n: usize) -> Self {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let hits = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let (h, s) = (hits.clone(), stop.clone());
        let thread = std::thread::spawn(move || {
            while !s.load(Ordering::SeqCst) {
                let Ok(Some(req)) = server.recv_timeout(Duration::from_millis(20)) else {
                    continue;
                };
                h.fetch_add(1, Ordering::SeqCst);
                let pmid = req.url().trim_start_matches('/').to_string();
                let found = pmid.parse::<usize>().ok().filter(|&i| (1..=n).contains(&i));
                let (code, body) = match found {
                    Some(i) => {
                        let (title, abs) = abstract_for(i);
                        let v = serde_json::json!({"pmid": pmid, "title": title, "abstract": abs});
                        (200, v.to_string())
                    }
                    None => (404, r#"{"error":"not found"}"#.to_string()),
                };
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(tiny_http::Response::from_string(body).with_status_code(code).with_header(header));
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

impl Drop for PubmedStub {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Default pipeline, a store under `dir` and an HTTP fetcher pointed at `stub_url`.
pub fn state(dir: &std::path::Path, stub_url: &str) -> AppState {
    let pipeline = Pipeline::from_config(PipelineConfig::default()).unwrap();
    let store = AnnotationStore::open(dir.join("cache.log")).unwrap();
    let mut fc = FetcherConfig::stub(stub_url);
    fc.retries = 0;
    let fetcher = HttpFetcher::new(fc).unwrap();
    AppState::new(pipeline, store, Arc::new(fetcher))
}
