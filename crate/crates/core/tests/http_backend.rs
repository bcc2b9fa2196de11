use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use codecorpus::backend::http::HttpBackend;
use codecorpus::backend::{Backend, BackendError, CompletionRequest, FinishReason};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    url: String,
    auth: Option<String>,
    body: Value,
}

/// Serve the scripted (status, body) replies in order, then stop.
fn fake_server(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, thread::JoinHandle<()>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let port = server.server_addr().to_ip().unwrap().port();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, reply) in script {
            let mut req = server.recv().unwrap();
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let auth = req
                .headers()
                .iter()
                .find(|h| h.field.equiv("Authorization"))
                .map(|h| h.value.to_string());
            log.lock().unwrap().push(Seen {
                url: req.url().to_string(),
                auth,
                body: serde_json::from_str(&body).unwrap_or(Value::Null),
            });
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
            let resp = tiny_http::Response::from_string(reply)
                .with_status_code(status)
                .with_header(header);
            req.respond(resp).unwrap();
        }
    });
    (format!("http://127.0.0.1:{port}/"), seen, handle)
}

fn samples_body() -> String {
    json!({"samples": [
        {"text": "  return 1\n", "tokens": ["  return", " 1", "\n"], "token_logprobs": [-0.5, -0.25, -0.125], "finish_reason": "stop"},
        {"text": "  pass", "tokens": ["  pass"], "token_logprobs": [-1.0], "finish_reason": "length"}
    ]})
    .to_string()
}

fn fast(url: &str, retries: u32) -> HttpBackend {
    HttpBackend::new(url)
        .with_timeout(Duration::from_secs(5))
        .with_retries(retries, Duration::from_millis(5))
}

#[test]
fn complete_roundtrip_sends_wire_body_and_bearer() {
    let (url, seen, h) = fake_server(vec![(200, samples_body())]);
    let backend = fast(&url, 0).with_bearer("s3cret");
    let mut req = CompletionRequest::new("def f():\n");
    req.n = 2;
    req.max_tokens = 16;
    req.temperature = 0.8;
    req.top_p = 0.95;
    req.stop = vec!["\ndef".into()];
    let out = backend.complete(&req).unwrap();
    h.join().unwrap();

    assert_eq!(out.len(), 2);
    assert_eq!(out[0].text, "  return 1\n");
    assert_eq!(out[0].token_logprobs[2], ("\n".to_string(), -0.125));
    assert_eq!(out[0].finish_reason, FinishReason::Stop);
    assert_eq!(out[1].finish_reason, FinishReason::Length);

    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].url, "/v1/complete");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer s3cret"));
    assert_eq!(
        seen[0].body,
        json!({"prompt": "def f():\n", "max_tokens": 16, "temperature": 0.8, "top_p": 0.95,
               "n": 2, "stop": ["\ndef"], "logprobs": true})
    );
}

#[test]
fn retries_after_server_error_and_bad_body() {
    let (url, seen, h) = fake_server(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, "not json".into()),
        (200, json!({"sum_logprob": -12.5, "token_count": 7}).to_string()),
    ]);
    let s = fast(&url, 3).score_logprobs("x = 1\n").unwrap();
    h.join().unwrap();
    assert_eq!(s.sum_logprob, -12.5);
    assert_eq!(s.token_count, 7);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 4);
    assert!(seen.iter().all(|r| r.url == "/v1/score" && r.body == json!({"text": "x = 1\n"})));
    assert!(seen[0].auth.is_none());
}

#[test]
fn retry_budget_exhaustion_is_transport_error() {
    let (url, seen, h) = fake_server(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let err = fast(&url, 2).score_logprobs("y").unwrap_err();
    h.join().unwrap();
    match err {
        BackendError::Transport { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_error_is_not_retried() {
    let (url, seen, h) = fake_server(vec![(400, "{\"error\":\"bad\"}".into())]);
    let err = fast(&url, 5).score_logprobs("z").unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, BackendError::Transport { attempts: 1, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn sample_count_mismatch_and_positive_logprob_are_rejected() {
    let one = json!({"samples": [{"text": "a", "tokens": ["a"], "token_logprobs": [-0.1], "finish_reason": "stop"}]});
    let (url, _, h) = fake_server(vec![(200, one.to_string())]);
    let mut req = CompletionRequest::new("p");
    req.n = 2;
    assert!(fast(&url, 0).complete(&req).is_err());
    h.join().unwrap();

    let (url, _, h) = fake_server(vec![(200, json!({"sum_logprob": 0.5, "token_count": 1}).to_string())]);
    assert!(fast(&url, 0).score_logprobs("p").is_err());
    h.join().unwrap();
}

#[test]
fn unreachable_server_fails_after_retries() {
    // Bind then drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = fast(&format!("http://127.0.0.1:{port}"), 1).score_logprobs("a").unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 2, .. }), "{err:?}");
}
