use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use sade_core::scorer::{
    open_provider, request_logprobs, Endpoint, HttpProvider, LogProbProvider, ProviderError,
    ProviderOptions, ScoreRequest,
};
use serde_json::Value;

/// Serves one scripted `(status, body)` per connection and records request
/// paths and bodies.
struct Script {
    url: String,
    seen: Arc<Mutex<Vec<(String, Value)>>>,
}

fn serve(responses: Vec<(u16, &'static str)>) -> Script {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let path = request_line
                .split_whitespace()
                .nth(1)
                .unwrap_or_default()
                .to_string();
            log.lock()
                .unwrap()
                .push((path, serde_json::from_slice(&buf).unwrap_or(Value::Null)));
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    Script { url, seen }
}

fn opts() -> ProviderOptions {
    ProviderOptions {
        model: "llava-test".into(),
        retries: 2,
        timeout: Duration::from_secs(5),
        backoff: Duration::from_millis(5),
    }
}

#[test]
fn well_formed_response_round_trips() {
    let server = serve(vec![(
        200,
        r#"{"tokens":["a","red","bike","."],"logprobs":[-0.5,-1.25,-2.0,-0.125]}"#,
    )]);
    let provider = HttpProvider::new(&server.url, &opts());
    let req = ScoreRequest::text_only("llava-test", "Describe.", "a red bike.")
        .with_image(Some(vec![1, 2, 3]));
    let out = provider.logprobs(&req).unwrap();
    assert_eq!(out.tokens(), ["a", "red", "bike", "."]);
    assert_eq!(out.logprobs(), [-0.5, -1.25, -2.0, -0.125]);

    let seen = server.seen.lock().unwrap();
    let (path, body) = &seen[0];
    assert_eq!(path, "/v1/logprobs");
    assert_eq!(body["model"], "llava-test");
    assert_eq!(body["prompt"], "Describe.");
    assert_eq!(body["continuation"], "a red bike.");
    assert_eq!(body["image_b64_png"], "AQID");
}

#[test]
fn text_only_request_sends_null_image() {
    let server = serve(vec![(200, r#"{"tokens":["x"],"logprobs":[0.0]}"#)]);
    let provider = HttpProvider::new(format!("{}/", server.url), &opts());
    provider
        .logprobs(&ScoreRequest::text_only("m", "", "x"))
        .unwrap();
    assert_eq!(
        server.seen.lock().unwrap()[0].1["image_b64_png"],
        Value::Null
    );
}

#[test]
fn mismatched_lengths_are_malformed() {
    let server = serve(vec![(200, r#"{"tokens":["a","b"],"logprobs":[-1.0]}"#)]);
    let err = HttpProvider::new(&server.url, &opts())
        .logprobs(&ScoreRequest::text_only("m", "", "a b"))
        .unwrap_err();
    assert!(matches!(err, ProviderError::MalformedResponse(_)), "{err}");
}

#[test]
fn positive_logprob_and_bad_json_are_malformed() {
    let server = serve(vec![
        (200, r#"{"tokens":["a"],"logprobs":[0.5]}"#),
        (200, "not json"),
    ]);
    let p = HttpProvider::new(&server.url, &opts());
    let req = ScoreRequest::text_only("m", "", "a");
    assert!(matches!(
        p.logprobs(&req),
        Err(ProviderError::MalformedResponse(_))
    ));
    assert!(matches!(
        p.logprobs(&req),
        Err(ProviderError::MalformedResponse(_))
    ));
}

#[test]
fn client_errors_are_rejections_without_retry() {
    let server = serve(vec![
        (422, r#"{"error":"unsupported modality"}"#),
        (400, r#"{"error":"empty"}"#),
    ]);
    let p = HttpProvider::new(&server.url, &opts());
    let req = ScoreRequest::text_only("m", "", "a").with_image(Some(vec![0]));
    match p.logprobs(&req) {
        Err(ProviderError::Rejected(msg)) => {
            assert!(msg.contains("422") && msg.contains("unsupported"))
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(p.logprobs(&req), Err(ProviderError::Rejected(m)) if m.contains("400")));
    assert_eq!(server.seen.lock().unwrap().len(), 2);
}

#[test]
fn empty_continuation_never_reaches_the_wire() {
    let p = HttpProvider::new("http://127.0.0.1:9", &opts());
    assert!(matches!(
        p.logprobs(&ScoreRequest::text_only("m", "", "")),
        Err(ProviderError::Rejected(_))
    ));
}

#[test]
fn transient_server_error_is_retried() {
    let server = serve(vec![
        (503, "busy"),
        (200, r#"{"tokens":["ok"],"logprobs":[-0.1]}"#),
    ]);
    let out = HttpProvider::new(&server.url, &opts())
        .logprobs(&ScoreRequest::text_only("m", "", "ok"))
        .unwrap();
    assert_eq!(out.logprobs(), [-0.1]);
    assert_eq!(server.seen.lock().unwrap().len(), 2);
}

#[test]
fn persistent_server_error_is_rejected_after_retries() {
    let server = serve(vec![(500, "boom"), (500, "boom"), (500, "boom")]);
    let err = HttpProvider::new(&server.url, &opts())
        .logprobs(&ScoreRequest::text_only("m", "", "x"))
        .unwrap_err();
    assert!(
        matches!(err, ProviderError::Rejected(ref m) if m.contains("500")),
        "{err}"
    );
    assert_eq!(server.seen.lock().unwrap().len(), 3);
}

#[test]
fn unreachable_endpoint() {
    // bind then drop to get a port with nothing listening
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let p = HttpProvider::new(
        format!("http://127.0.0.1:{port}"),
        &ProviderOptions {
            retries: 1,
            ..opts()
        },
    );
    assert!(matches!(
        p.logprobs(&ScoreRequest::text_only("m", "", "x")),
        Err(ProviderError::Unreachable(_))
    ));
}

#[test]
fn endpoint_dispatch() {
    let server = serve(vec![(200, r#"{"tokens":["x"],"logprobs":[-3.0]}"#)]);
    let endpoint: Endpoint = server.url.parse().unwrap();
    let out = request_logprobs(&ScoreRequest::text_only("m", "", "x"), &endpoint).unwrap();
    assert_eq!(out.logprobs(), [-3.0]);

    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.tsv");
    std::fs::write(&table, "x\t0.5\n").unwrap();
    let mock = open_provider(
        &format!("mock://{}", table.display()).parse().unwrap(),
        &opts(),
    )
    .unwrap();
    assert_eq!(mock.model_id(), "llava-test");
    assert!(
        (mock
            .logprobs(&ScoreRequest::text_only("m", "", "x"))
            .unwrap()
            .logprobs()[0]
            - 0.5f64.ln())
        .abs()
            < 1e-12
    );

    let missing = open_provider(&Endpoint::Mock(dir.path().join("nope.tsv")), &opts());
    assert!(matches!(missing, Err(ProviderError::MockTable { .. })));
}
