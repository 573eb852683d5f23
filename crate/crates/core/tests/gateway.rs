//! Remote profile against a local HTTP stub, and mock isolation.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use opfunkb_core::gateway::{ExchangeLog, Gateway, GatewayProfile, ProfileKind};
use opfunkb_core::Error;

struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<(String, String)>>>,
}

/// Serves `statuses` in order (the last one repeats), answering 200s with a
/// chat-completion body.
fn stub(statuses: Vec<u16>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, b) = (hits.clone(), bodies.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let n = h.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut auth = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            b.lock().unwrap().push((auth, String::from_utf8(body).unwrap()));
            let status = statuses[n.min(statuses.len() - 1)];
            let payload = if status == 200 {
                r#"{"choices":[{"message":{"role":"assistant","content":"pong"}}]}"#.to_string()
            } else {
                r#"{"error":"busy"}"#.to_string()
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    Stub { url, hits, bodies }
}

fn remote(url: &str, key_env: &str) -> GatewayProfile {
    let mut p = GatewayProfile::mock("remote");
    p.kind = ProfileKind::Remote;
    p.base_url = Some(url.to_string());
    p.model_name = Some("gpt-4".into());
    p.api_key_env = Some(key_env.into());
    p.max_retries = 2;
    p.backoff_base_ms = 1;
    p.timeout_s = 5;
    p
}

#[test]
fn remote_success_sends_wire_format() {
    std::env::set_var("OPFUNKB_KEY_A", "sekrit");
    let s = stub(vec![200]);
    let g = Gateway::connect(&remote(&s.url, "OPFUNKB_KEY_A")).unwrap();
    let ex = g.chat("ping", None).unwrap();
    assert_eq!(ex.response, "pong");
    assert_eq!(ex.attempts, 1);
    let (auth, body) = s.bodies.lock().unwrap()[0].clone();
    assert_eq!(auth.to_ascii_lowercase(), "authorization: bearer sekrit");
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["model"], "gpt-4");
    assert_eq!(v["temperature"], 0.2);
    assert_eq!(v["top_p"], 1.0);
    assert_eq!(v["messages"][0]["content"], "ping");
}

#[test]
fn remote_retries_transient_then_succeeds() {
    std::env::set_var("OPFUNKB_KEY_B", "k");
    let s = stub(vec![503, 429, 200]);
    let g = Gateway::connect(&remote(&s.url, "OPFUNKB_KEY_B")).unwrap();
    let ex = g.chat("ping", None).unwrap();
    assert_eq!(ex.attempts, 3);
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn remote_exhausts_after_max_retries_plus_one() {
    std::env::set_var("OPFUNKB_KEY_C", "k");
    let s = stub(vec![500]);
    let g = Gateway::connect(&remote(&s.url, "OPFUNKB_KEY_C")).unwrap();
    let log = ExchangeLog::new();
    let err = g.chat("ping", Some(&log)).unwrap_err();
    assert!(matches!(err, Error::GatewayExhausted { attempts: 3, .. }), "{err}");
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
    assert_eq!(log.entries()[0].attempts, 3);
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn remote_client_error_is_not_retried() {
    std::env::set_var("OPFUNKB_KEY_D", "k");
    let s = stub(vec![401]);
    let g = Gateway::connect(&remote(&s.url, "OPFUNKB_KEY_D")).unwrap();
    assert!(matches!(g.chat("ping", None), Err(Error::GatewayExhausted { attempts: 1, .. })));
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn missing_key_fails_before_any_request() {
    let s = stub(vec![200]);
    let err = Gateway::connect(&remote(&s.url, "OPFUNKB_KEY_NEVER_SET")).err().unwrap();
    assert!(matches!(err, Error::GatewayConfig(_)));
    assert_eq!(s.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn mock_never_touches_the_network() {
    // A mock profile pointing at a live stub must not contact it.
    let s = stub(vec![200]);
    let mut p = GatewayProfile::mock("m");
    p.base_url = Some(s.url.clone());
    let g = Gateway::connect(&p).unwrap();
    for i in 0..10 {
        g.chat(&format!("prompt {i}"), None).unwrap();
    }
    assert_eq!(s.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn mock_fixture_table_wins() {
    let dir = tempfile::tempdir().unwrap();
    let prompt = "what is ee.List?";
    let key = opfunkb_core::corpus::sha256_hex(prompt.as_bytes());
    let path = dir.path().join("fixtures.json");
    std::fs::write(&path, serde_json::json!({ key: "a list constructor" }).to_string()).unwrap();
    let mut p = GatewayProfile::mock("m");
    p.mock.fixtures = Some(path);
    let g = Gateway::connect(&p).unwrap();
    assert_eq!(g.chat(prompt, None).unwrap().response, "a list constructor");
}
