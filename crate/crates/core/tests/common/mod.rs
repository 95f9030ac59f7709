//! Shared helpers for the integration and acceptance suites.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use rand::RngCore;

use mpg_core::model::{LanguageModel, Token, ToyModel};

// ---------------------------------------------------------------------------
// Scripted RNG
// ---------------------------------------------------------------------------

/// RNG that replays a fixed u64 stream; panics when the script runs dry.
///
/// `from_uniforms` encodes f64 draws so that the standard `[0, 1)` sampler
/// reproduces them: the sampler maps `x -> (x >> 11) * 2^-53`, so any value
/// on the 2^-53 grid round-trips exactly.
pub struct ScriptedRng {
    values: std::collections::VecDeque<u64>,
}

impl ScriptedRng {
    pub fn new(values: Vec<u64>) -> Self {
        Self {
            values: values.into(),
        }
    }

    pub fn from_uniforms(uniforms: &[f64]) -> Self {
        let values = uniforms
            .iter()
            .map(|&u| {
                assert!((0.0..1.0).contains(&u), "uniform draw {u} out of [0,1)");
                ((u * (1u64 << 53) as f64) as u64) << 11
            })
            .collect();
        Self { values }
    }

    pub fn remaining(&self) -> usize {
        self.values.len()
    }
}

impl RngCore for ScriptedRng {
    fn next_u32(&mut self) -> u32 {
        self.next_u64() as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.values.pop_front().expect("scripted RNG exhausted")
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

// ---------------------------------------------------------------------------
// Mock log-probability server
// ---------------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct LogprobsRequest {
    model: String,
    context: Vec<Token>,
}

#[derive(serde::Deserialize)]
struct ScoreRequest {
    model: String,
    context: Vec<Token>,
    continuation: Vec<Token>,
}

/// In-process HTTP server speaking the log-probability wire protocol,
/// backed by toy models.
pub struct MockLmServer {
    base_url: String,
    shutdown: Arc<AtomicBool>,
    requests: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

impl MockLmServer {
    pub fn start(models: HashMap<String, ToyModel>) -> Self {
        let server = tiny_http::Server::http("127.0.0.1:0").expect("bind mock server");
        let addr = server.server_addr().to_ip().expect("ip listener");
        let base_url = format!("http://{addr}");
        let shutdown = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicU64::new(0));
        let shutdown_flag = shutdown.clone();
        let request_counter = requests.clone();
        let handle = std::thread::spawn(move || {
            while !shutdown_flag.load(Ordering::Relaxed) {
                match server.recv_timeout(Duration::from_millis(50)) {
                    Ok(Some(request)) => {
                        request_counter.fetch_add(1, Ordering::Relaxed);
                        handle_request(&models, request);
                    }
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
        });
        Self {
            base_url,
            shutdown,
            requests,
            handle: Some(handle),
        }
    }

    pub fn url(&self) -> &str {
        &self.base_url
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

impl Drop for MockLmServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn respond_json(request: tiny_http::Request, status: u16, body: &str) {
    let response = tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(
            tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                .expect("static header"),
        );
    let _ = request.respond(response);
}

fn handle_request(models: &HashMap<String, ToyModel>, mut request: tiny_http::Request) {
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        respond_json(request, 400, r#"{"error": "unreadable body"}"#);
        return;
    }
    let url = request.url().to_string();
    match url.as_str() {
        "/logprobs" => {
            let parsed: Result<LogprobsRequest, _> = serde_json::from_str(&body);
            match parsed {
                Ok(req) => match models.get(&req.model) {
                    Some(model) => match model.logprobs(&req.context) {
                        Ok(dist) => {
                            let body = serde_json::json!({ "logprobs": dist.values() });
                            respond_json(request, 200, &body.to_string());
                        }
                        Err(e) => respond_json(
                            request,
                            400,
                            &serde_json::json!({ "error": e.to_string() }).to_string(),
                        ),
                    },
                    None => respond_json(request, 404, r#"{"error": "unknown model"}"#),
                },
                Err(_) => respond_json(request, 400, r#"{"error": "malformed request"}"#),
            }
        }
        "/score" => {
            let parsed: Result<ScoreRequest, _> = serde_json::from_str(&body);
            match parsed {
                Ok(req) => match models.get(&req.model) {
                    Some(model) => {
                        match model.score_continuation(&req.context, &req.continuation) {
                            Ok(scores) => {
                                let body = serde_json::json!({ "token_logprobs": scores });
                                respond_json(request, 200, &body.to_string());
                            }
                            Err(e) => respond_json(
                                request,
                                400,
                                &serde_json::json!({ "error": e.to_string() }).to_string(),
                            ),
                        }
                    }
                    None => respond_json(request, 404, r#"{"error": "unknown model"}"#),
                },
                Err(_) => respond_json(request, 400, r#"{"error": "malformed request"}"#),
            }
        }
        _ => respond_json(request, 404, r#"{"error": "unknown endpoint"}"#),
    }
}

/// Every valid context of length <= `max_len` (no eos anywhere).
pub fn all_contexts(vocab: &mpg_core::Vocabulary, max_len: usize) -> Vec<Vec<Token>> {
    let plain: Vec<Token> = (0..vocab.size()).filter(|&t| t != vocab.eos()).collect();
    let mut out: Vec<Vec<Token>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<Token>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for ctx in &frontier {
            for &t in &plain {
                let mut c = ctx.clone();
                c.push(t);
                out.push(c.clone());
                next.push(c);
            }
        }
        frontier = next;
    }
    out
}
