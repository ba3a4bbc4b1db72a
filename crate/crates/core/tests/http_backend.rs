use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use cpr_core::llm::{GenerationBackend, GenerationRequest, HttpBackend, HttpSettings, PromptKind};
use cpr_core::{run_trial, Error, SimulationConfig};
use serde_json::Value;

struct Captured {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Captured {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Serve one canned `(status, body)` per connection, in order, and report
/// every request received.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut raw = vec![0; len];
            reader.read_exact(&mut raw).unwrap();
            let _ = tx.send(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&raw).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), rx)
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn settings(endpoint: String, key_var: &str) -> HttpSettings {
    HttpSettings {
        endpoint,
        model: "test-model".into(),
        timeout_secs: 5.0,
        max_retries: 2,
        backoff_ms: 1,
        temperature: None,
        max_tokens: Some(16),
        api_key_env: key_var.into(),
    }
}

fn ask(backend: &HttpBackend, prompt: &str) -> cpr_core::Result<String> {
    backend.generate(&GenerationRequest {
        agent: 0,
        round: 0,
        kind: PromptKind::Effort,
        attempt: 0,
        prompt,
    })
}

#[test]
fn credential_comes_from_api_key_by_default() {
    assert_eq!(HttpSettings::default().api_key_env, "API_KEY");
}

#[test]
fn request_wire_format_and_bearer_header() {
    std::env::set_var("CPR_TEST_KEY_WIRE", "sk-test-123");
    let (url, rx) = serve(vec![(200, completion("0.4"))]);
    let backend = HttpBackend::new(settings(url, "CPR_TEST_KEY_WIRE"));
    assert_eq!(ask(&backend, "How much effort?").unwrap(), "0.4");

    let req = rx.recv().unwrap();
    assert_eq!(req.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(req.header("authorization"), Some("Bearer sk-test-123"));
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["max_tokens"], 16);
    assert!(req.body.get("temperature").is_none());
    assert_eq!(req.body["messages"][0]["role"], "user");
    assert_eq!(req.body["messages"][0]["content"], "How much effort?");
}

#[test]
fn missing_credential_sends_no_authorization() {
    let (url, rx) = serve(vec![(200, completion("N/A"))]);
    let backend = HttpBackend::new(settings(url, "CPR_TEST_KEY_UNSET"));
    assert_eq!(ask(&backend, "p").unwrap(), "N/A");
    assert!(rx.recv().unwrap().header("authorization").is_none());
}

#[test]
fn server_errors_are_retried() {
    let (url, rx) = serve(vec![(500, "{}".into()), (429, "{}".into()), (200, completion("0.7"))]);
    let backend = HttpBackend::new(settings(url, "CPR_TEST_KEY_UNSET"));
    assert_eq!(ask(&backend, "p").unwrap(), "0.7");
    assert_eq!(rx.iter().take(3).count(), 3);
}

#[test]
fn client_errors_fail_without_retry() {
    let (url, rx) = serve(vec![(400, "{\"error\":\"bad\"}".into()), (200, completion("0.7"))]);
    let backend = HttpBackend::new(settings(url, "CPR_TEST_KEY_UNSET"));
    match ask(&backend, "p") {
        Err(Error::Transport(msg)) => assert!(msg.contains("400"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(rx.try_iter().count(), 1);
}

#[test]
fn exhausted_retries_abort_the_trial_but_keep_logs() {
    // Round 0 needs 10 effort, 10 punish, 10 norm and 10 vote replies.
    let mut responses = vec![(200, completion("0.3")); 10];
    responses.extend(vec![(200, completion("N/A")); 10]);
    responses.extend(vec![(200, completion("Personal: fish less\nCommunity: keep catches small")); 10]);
    responses.extend(vec![(200, completion("keep catches small")); 10]);
    responses.extend(vec![(503, "{}".into()); 3]);
    let (url, _rx) = serve(responses);

    let mut cfg = SimulationConfig::llm_default();
    cfg.llm = settings(url, "CPR_TEST_KEY_UNSET");
    cfg.llm_retries = 0;
    let backend = HttpBackend::new(cfg.llm.clone());
    // One connection at a time keeps the canned replies in phase order.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let trial = pool.install(|| run_trial(&cfg, 0, Some(&backend))).unwrap();

    assert_eq!(trial.logs.len(), 1);
    assert!(trial.aborted.as_deref().is_some_and(|m| m.contains("503")));
    assert_eq!(trial.logs[0].group_norm.norm.text(), Some("keep catches small"));
}
