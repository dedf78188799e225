//! Chat-completions client against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use maze_core::backend::{
    Backend, BackendError, CallContext, ChatCompletionsBackend, DecodingParams, RemoteConfig,
};
use maze_core::prompting::{PromptText, TemplateId};

#[derive(Debug, Clone)]
struct Seen {
    authorization: Option<String>,
    body: serde_json::Value,
}

struct Stub {
    endpoint: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "id": "cmpl-1",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

/// Serves one scripted `(status, body)` per connection, then repeats the last.
fn stub(script: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (i, conn) in listener.incoming().enumerate() {
            let Ok(mut conn) = conn else { return };
            let mut reader = BufReader::new(conn.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen {
                authorization: auth,
                body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
            });
            let (status, payload) = script[i.min(script.len() - 1)].clone();
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = conn.write_all(resp.as_bytes());
        }
    });
    Stub { endpoint, seen }
}

fn config(stub: &Stub) -> RemoteConfig {
    RemoteConfig {
        endpoint: stub.endpoint.clone(),
        model: "stub-model".into(),
        api_key_env: "MAZE_STUB_TEST_KEY_UNSET".into(),
        max_retries: 2,
        base_delay_ms: 1,
        max_delay_ms: 5,
        timeout_secs: 5,
        ..RemoteConfig::default()
    }
}

fn prompt(text: &str) -> PromptText {
    PromptText {
        text: text.into(),
        template_id: TemplateId::OneRound,
        fill_map: Default::default(),
    }
}

fn call(b: &ChatCompletionsBackend, text: &str) -> Result<maze_core::backend::ModelResponse, BackendError> {
    b.complete(&prompt(text), &DecodingParams::default(), &CallContext::keyed("k", 0))
}

#[test]
fn success_then_cache_hit() {
    let s = stub(vec![(200, ok_body("[0], [1]"))]);
    let b = ChatCompletionsBackend::new(config(&s)).unwrap();
    let first = call(&b, "hello").unwrap();
    assert_eq!(first.text, "[0], [1]");
    assert!(!first.cached);
    let second = call(&b, "hello").unwrap();
    assert!(second.cached);
    assert_eq!(second.text, first.text);
    let seen = s.seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].body["model"], "stub-model");
    assert_eq!(seen[0].body["messages"][0]["role"], "user");
    assert_eq!(seen[0].body["messages"][0]["content"], "hello");
    assert_eq!(seen[0].body["temperature"], 0.0);
    assert!(seen[0].authorization.is_none());
}

#[test]
fn transient_status_is_retried() {
    let s = stub(vec![(503, "busy".into()), (429, "slow down".into()), (200, ok_body("[2]"))]);
    let b = ChatCompletionsBackend::new(config(&s)).unwrap();
    let r = call(&b, "retry me").unwrap();
    assert_eq!(r.text, "[2]");
    assert_eq!(r.attempt, 2);
    assert_eq!(s.seen.lock().unwrap().len(), 3);
}

#[test]
fn client_error_carries_status_and_is_not_retried() {
    let s = stub(vec![(400, "{\"error\":\"bad request\"}".into())]);
    let b = ChatCompletionsBackend::new(config(&s)).unwrap();
    match call(&b, "bad") {
        Err(BackendError::Status { status, body }) => {
            assert_eq!(status, 400);
            assert!(body.contains("bad request"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(s.seen.lock().unwrap().len(), 1);
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let s = stub(vec![(500, "boom".into())]);
    let b = ChatCompletionsBackend::new(config(&s)).unwrap();
    match call(&b, "doomed") {
        Err(BackendError::RetriesExhausted { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert!(last.contains("500"), "{last}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(s.seen.lock().unwrap().len(), 3);
}

#[test]
fn malformed_body_is_an_error() {
    let s = stub(vec![(200, "{\"choices\": []}".into())]);
    let b = ChatCompletionsBackend::new(config(&s)).unwrap();
    assert!(matches!(call(&b, "x"), Err(BackendError::Malformed(_))));
}

#[test]
fn bearer_token_comes_from_the_environment() {
    let s = stub(vec![(200, ok_body("[0]"))]);
    let cfg = RemoteConfig {
        api_key_env: "MAZE_STUB_TEST_KEY".into(),
        ..config(&s)
    };
    std::env::set_var("MAZE_STUB_TEST_KEY", "sk-test-123");
    let b = ChatCompletionsBackend::new(cfg).unwrap();
    call(&b, "auth").unwrap();
    assert!(!b.id().contains("sk-test"));
    assert_eq!(s.seen.lock().unwrap()[0].authorization.as_deref(), Some("Bearer sk-test-123"));
}

#[test]
fn cache_file_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let s = stub(vec![(200, ok_body("[1]"))]);
    let cfg = RemoteConfig {
        cache_path: Some(dir.path().join("cache.jsonl")),
        ..config(&s)
    };
    {
        let b = ChatCompletionsBackend::new(cfg.clone()).unwrap();
        assert!(!call(&b, "persist").unwrap().cached);
    }
    let b = ChatCompletionsBackend::new(cfg).unwrap();
    assert_eq!(b.cache().len(), 1);
    let r = call(&b, "persist").unwrap();
    assert!(r.cached);
    assert_eq!(r.text, "[1]");
    assert_eq!(s.seen.lock().unwrap().len(), 1);
}

#[test]
fn identical_concurrent_requests_hit_the_server_once() {
    let s = stub(vec![(200, ok_body("[0]"))]);
    let b = Arc::new(ChatCompletionsBackend::new(config(&s)).unwrap());
    let handles: Vec<_> = (0..6)
        .map(|_| {
            let b = Arc::clone(&b);
            thread::spawn(move || call(&b, "same prompt").unwrap().text)
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), "[0]");
    }
    assert_eq!(s.seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_server_is_a_transport_failure() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let cfg = RemoteConfig {
        endpoint: format!("http://{addr}/v1/chat/completions"),
        max_retries: 1,
        base_delay_ms: 1,
        max_delay_ms: 1,
        timeout_secs: 2,
        ..RemoteConfig::default()
    };
    let b = ChatCompletionsBackend::new(cfg).unwrap();
    assert!(matches!(call(&b, "x"), Err(BackendError::RetriesExhausted { attempts: 2, .. })));
}
