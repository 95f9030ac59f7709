//! Wire-protocol behavior of the remote model client against mock backends.

mod common;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use common::MockLmServer;
use mpg_core::error::Error;
use mpg_core::model::{LanguageModel, ToyModel, Vocabulary};
use mpg_core::remote::{EndpointConfig, RemoteModel};

fn vocab4() -> Vocabulary {
    Vocabulary::new(4, 3).unwrap()
}

fn endpoint(url: &str, model: &str) -> EndpointConfig {
    EndpointConfig {
        timeout_secs: 5.0,
        retries: 2,
        ..EndpointConfig::new(url, model)
    }
}

#[test]
fn uniform_round_trip() {
    let server = MockLmServer::start(HashMap::from([(
        "uniform".to_string(),
        ToyModel::uniform(vocab4()),
    )]));
    let remote = RemoteModel::new(endpoint(server.url(), "uniform"), vocab4()).unwrap();
    let dist = remote.logprobs(&[0, 1]).unwrap();
    for &v in dist.values() {
        assert!((v - 0.25f64.ln()).abs() < 1e-9);
    }
    assert_eq!(remote.forward_passes(), 1);
}

#[test]
fn score_issues_exactly_one_request() {
    let server = MockLmServer::start(HashMap::from([(
        "m".to_string(),
        ToyModel::uniform(vocab4()),
    )]));
    let remote = RemoteModel::new(endpoint(server.url(), "m"), vocab4()).unwrap();
    let before = server.request_count();
    let scores = remote.score_continuation(&[], &[0, 1, 2, 0]).unwrap();
    assert_eq!(scores.len(), 4);
    assert_eq!(server.request_count() - before, 1);
    assert_eq!(remote.forward_passes(), 1);
}

#[test]
fn zero_probability_entries_survive_the_wire() {
    // -inf serializes as JSON null and must come back as -inf.
    let model = ToyModel::unigram(vocab4(), &[0.5, 0.5, 0.0, 0.0]).unwrap();
    let server = MockLmServer::start(HashMap::from([("m".to_string(), model)]));
    let remote = RemoteModel::new(endpoint(server.url(), "m"), vocab4()).unwrap();
    let dist = remote.logprobs(&[]).unwrap();
    assert!((dist.get(0) - 0.5f64.ln()).abs() < 1e-9);
    assert_eq!(dist.get(2), f64::NEG_INFINITY);
    assert_eq!(dist.get(3), f64::NEG_INFINITY);
    let scores = remote.score_continuation(&[], &[2]).unwrap();
    assert_eq!(scores[0], f64::NEG_INFINITY);
}

#[test]
fn unknown_model_is_a_protocol_error() {
    let server = MockLmServer::start(HashMap::from([(
        "m".to_string(),
        ToyModel::uniform(vocab4()),
    )]));
    let remote = RemoteModel::new(endpoint(server.url(), "ghost"), vocab4()).unwrap();
    assert!(matches!(remote.logprobs(&[]), Err(Error::Protocol(_))));
    assert_eq!(remote.forward_passes(), 0);
}

/// One-shot server returning a scripted HTTP response for every connection.
fn scripted_server(responses: Vec<String>) -> (String, Arc<AtomicU64>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicU64::new(0));
    let count = hits.clone();
    std::thread::spawn(move || {
        for response in responses {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            count.fetch_add(1, Ordering::Relaxed);
            let mut buf = [0u8; 4096];
            let _ = stream.read(&mut buf);
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (url, hits)
}

fn http_json(status: &str, body: &str) -> String {
    format!(
        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    )
}

#[test]
fn transport_failures_retry_then_error() {
    // Three straight 500s: with retries = 2 the client attempts exactly 3
    // times and reports a transport error.
    let body = r#"{"error": "overloaded"}"#;
    let (url, hits) = scripted_server(vec![
        http_json("500 Internal Server Error", body),
        http_json("500 Internal Server Error", body),
        http_json("500 Internal Server Error", body),
        http_json("500 Internal Server Error", body),
    ]);
    let remote = RemoteModel::new(endpoint(&url, "m"), vocab4()).unwrap();
    let err = remote.logprobs(&[]);
    assert!(matches!(err, Err(Error::Transport(_))), "{err:?}");
    assert_eq!(hits.load(Ordering::Relaxed), 3);
}

#[test]
fn transient_failures_recover_within_the_retry_budget() {
    let good = r#"{"logprobs": [-1.3862943611198906, -1.3862943611198906, -1.3862943611198906, -1.3862943611198906]}"#;
    let (url, hits) = scripted_server(vec![
        http_json("500 Internal Server Error", "{}"),
        http_json("502 Bad Gateway", "{}"),
        http_json("200 OK", good),
    ]);
    let remote = RemoteModel::new(endpoint(&url, "m"), vocab4()).unwrap();
    let dist = remote.logprobs(&[]).unwrap();
    assert!((dist.get(0) - 0.25f64.ln()).abs() < 1e-9);
    assert_eq!(hits.load(Ordering::Relaxed), 3);
}

#[test]
fn http_4xx_fails_fast_without_retries() {
    let (url, hits) = scripted_server(vec![
        http_json("422 Unprocessable Entity", "{}"),
        http_json("422 Unprocessable Entity", "{}"),
    ]);
    let remote = RemoteModel::new(endpoint(&url, "m"), vocab4()).unwrap();
    assert!(matches!(remote.logprobs(&[]), Err(Error::Protocol(_))));
    assert_eq!(hits.load(Ordering::Relaxed), 1);
}

#[test]
fn connection_refused_is_a_transport_error() {
    let remote = RemoteModel::new(endpoint("http://127.0.0.1:1", "m"), vocab4()).unwrap();
    assert!(matches!(remote.logprobs(&[]), Err(Error::Transport(_))));
}

#[test]
fn unnormalized_responses_are_renormalized() {
    // Server reports shifted log-probabilities; the client restores the
    // normalization invariant.
    let shifted: Vec<f64> = [0.4f64, 0.3, 0.2, 0.1]
        .iter()
        .map(|p| p.ln() + 3.7)
        .collect();
    let body = serde_json::json!({ "logprobs": shifted }).to_string();
    let (url, _) = scripted_server(vec![http_json("200 OK", &body)]);
    let remote = RemoteModel::new(endpoint(&url, "m"), vocab4()).unwrap();
    let dist = remote.logprobs(&[]).unwrap();
    assert!(mpg_core::math::logsumexp(dist.values()).abs() <= 1e-9);
    for (v, p) in dist.values().iter().zip([0.4f64, 0.3, 0.2, 0.1]) {
        assert!((v - p.ln()).abs() < 1e-9);
    }
}

#[test]
fn truncated_responses_respect_the_mass_budget() {
    // Top-3 response dropping a 0.1-mass token: rejected at the default
    // 1e-4 tolerance.
    let body = serde_json::json!({
        "logprobs": [0.4f64.ln(), 0.3f64.ln(), 0.2f64.ln(), null]
    })
    .to_string();
    let (url, _) = scripted_server(vec![http_json("200 OK", &body)]);
    let remote = RemoteModel::new(endpoint(&url, "m"), vocab4()).unwrap();
    let err = remote.logprobs(&[]);
    assert!(matches!(err, Err(Error::Fidelity(_))), "{err:?}");

    // The same shape with negligible missing mass is accepted and
    // renormalized.
    let tiny = 1e-7f64;
    let body = serde_json::json!({
        "logprobs": [(0.4 - tiny/3.0).ln(), (0.35 - tiny/3.0).ln(), (0.25 - tiny/3.0).ln(), null]
    })
    .to_string();
    let (url, _) = scripted_server(vec![http_json("200 OK", &body)]);
    let remote = RemoteModel::new(endpoint(&url, "m"), vocab4()).unwrap();
    let dist = remote.logprobs(&[]).unwrap();
    assert_eq!(dist.get(3), f64::NEG_INFINITY);
    assert!(mpg_core::math::logsumexp(dist.values()).abs() <= 1e-9);
}

#[test]
fn wrong_vector_length_is_a_protocol_error() {
    let body = serde_json::json!({ "logprobs": [-1.0, -1.0] }).to_string();
    let (url, _) = scripted_server(vec![http_json("200 OK", &body)]);
    let remote = RemoteModel::new(endpoint(&url, "m"), vocab4()).unwrap();
    assert!(matches!(remote.logprobs(&[]), Err(Error::Protocol(_))));
}

#[test]
fn remote_matches_local_tables_everywhere() {
    // Differential contract: a mock backend serving the verification tables
    // answers within 1e-6 of local evaluation for every context and for
    // teacher-forced scoring.
    let server = MockLmServer::start(HashMap::from([
        (
            "ref".to_string(),
            mpg_core::fixtures::verification_reference(),
        ),
        (
            "pref-a".to_string(),
            mpg_core::fixtures::verification_pref_a(),
        ),
        (
            "pref-b".to_string(),
            mpg_core::fixtures::verification_pref_b(),
        ),
    ]));
    let vocab = mpg_core::fixtures::verification_vocab();
    let locals: Vec<(&str, ToyModel)> = vec![
        ("ref", mpg_core::fixtures::verification_reference()),
        ("pref-a", mpg_core::fixtures::verification_pref_a()),
        ("pref-b", mpg_core::fixtures::verification_pref_b()),
    ];
    for (name, local) in &locals {
        let remote = RemoteModel::new(endpoint(server.url(), name), vocab.clone()).unwrap();
        for ctx in common::all_contexts(&vocab, 2) {
            let a = local.logprobs(&ctx).unwrap();
            let b = remote.logprobs(&ctx).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() <= 1e-6, "{name} context {ctx:?}");
            }
            let continuation = [0u32, 2, 1];
            let s_local = local.score_continuation(&ctx, &continuation).unwrap();
            let s_remote = remote.score_continuation(&ctx, &continuation).unwrap();
            for (x, y) in s_local.iter().zip(&s_remote) {
                assert!((x - y).abs() <= 1e-6);
            }
        }
    }
}
