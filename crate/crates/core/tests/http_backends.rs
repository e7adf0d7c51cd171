//! Wire-level tests of the HTTP clients against scripted local servers.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rvr_core::bank::ValueBank;
use rvr_core::grid::{render_prompts, DemographicProfile};
use rvr_core::llm::{
    collect, ApiShape, BackendError, CollectError, CollectOptions, CompletionBackend, CompletionRequest,
    HttpCompletionBackend, PremiseStore, SamplingConfig,
};
use rvr_core::retry::RetryPolicy;
use rvr_core::rvr::{
    label_from_reply, score_premise, HttpNliBackend, NliBackend, NliRequest, ResonanceLabel, ScoreCache, ScoreError,
};

#[derive(Debug, Clone)]
struct Captured {
    request_line: String,
    headers: Vec<(String, String)>,
    body: String,
}

impl Captured {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap()
    }
}

/// Serves one scripted `(status, extra headers, body)` per connection, then
/// repeats the last one. Returns the base URL and the captured requests.
fn serve(script: Vec<(u16, Vec<(&'static str, String)>, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
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
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: String::from_utf8(body).unwrap(),
            });
            let (status, extra, reply) = &script[i.min(script.len() - 1)];
            let mut head = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
                reply.len()
            );
            for (k, v) in extra {
                head.push_str(&format!("{k}: {v}\r\n"));
            }
            head.push_str("\r\n");
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (base, seen)
}

fn ok(body: &str) -> (u16, Vec<(&'static str, String)>, String) {
    (200, vec![], body.to_string())
}

fn nli(base: &str) -> HttpNliBackend {
    HttpNliBackend::new(base, "test-model", Duration::from_secs(5))
}

fn premise(text: &str) -> rvr_core::llm::PremiseRecord {
    rvr_core::llm::PremiseRecord {
        prompt_id: "p".into(),
        sample_index: 0,
        text: text.into(),
        model_name: "m".into(),
        backend: "b".into(),
        collected_at: "t".into(),
        profile: DemographicProfile::default(),
        dimension_id: "general".into(),
    }
}

#[test]
fn nli_request_shape_and_argmax_label() {
    let (base, seen) = serve(vec![ok(r#"{"label":"contradiction","scores":[0.1,0.2,0.7]}"#)]);
    let backend = nli(&base);
    assert_eq!(backend.name(), "http-nli:test-model");
    let reply = backend
        .classify(&NliRequest {
            premise: "God is moderately important to me.".into(),
            hypothesis: "God is very important in my life.".into(),
        })
        .unwrap();
    assert_eq!(label_from_reply(&reply), Ok(ResonanceLabel::Conflict));
    let req = seen.lock().unwrap()[0].clone();
    assert_eq!(req.request_line, "POST /score HTTP/1.1");
    assert_eq!(
        req.json(),
        serde_json::json!({
            "premise": "God is moderately important to me.",
            "hypothesis": "God is very important in my life."
        })
    );
}

#[test]
fn nli_label_disagreeing_with_scores_is_malformed() {
    let (base, _) = serve(vec![ok(r#"{"label":"entailment","scores":[0.1,0.2,0.7]}"#)]);
    let hyps = ValueBank::builtin().hypothesis_pairs();
    let err = score_premise(
        &premise("x"),
        &hyps,
        &nli(&base),
        &ScoreCache::in_memory(),
        &RetryPolicy::immediate(0),
    )
    .unwrap_err();
    assert!(matches!(err, ScoreError::Malformed(_)), "{err:?}");
}

#[test]
fn nli_garbage_and_client_errors_are_malformed() {
    for reply in [ok("not json"), (400, vec![], r#"{"error":"bad request"}"#.to_string())] {
        let (base, _) = serve(vec![reply]);
        let err = score_premise(
            &premise("x"),
            &ValueBank::builtin().hypothesis_pairs(),
            &nli(&base),
            &ScoreCache::in_memory(),
            &RetryPolicy::immediate(2),
        )
        .unwrap_err();
        assert!(matches!(err, ScoreError::Malformed(_)), "{err:?}");
    }
}

#[test]
fn nli_server_errors_are_retried() {
    let (base, seen) = serve(vec![
        (503, vec![], "{}".into()),
        ok(r#"{"label":"neutral","scores":[0.2,0.6,0.2]}"#),
    ]);
    let out = score_premise(
        &premise("x"),
        &ValueBank::builtin().hypothesis_pairs(),
        &nli(&base),
        &ScoreCache::in_memory(),
        &RetryPolicy::immediate(3),
    )
    .unwrap();
    assert_eq!(out.len(), 10);
    assert!(out.iter().all(|s| s.label == ResonanceLabel::Neutral));
    assert_eq!(seen.lock().unwrap().len(), 11);
}

#[test]
fn nli_refused_connection_is_unreachable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = score_premise(
        &premise("x"),
        &ValueBank::builtin().hypothesis_pairs(),
        &nli(&format!("http://127.0.0.1:{port}")),
        &ScoreCache::in_memory(),
        &RetryPolicy::immediate(1),
    )
    .unwrap_err();
    assert!(matches!(err, ScoreError::Unreachable { attempts: 2, .. }), "{err:?}");
}

fn one_prompt() -> rvr_core::grid::PromptRecord {
    let bank = ValueBank::builtin();
    let p = DemographicProfile::new(Some(35), Some("American"), Some("woman"));
    render_prompts(&[p], &bank).pop().unwrap()
}

#[test]
fn completions_request_shape() {
    let (base, seen) = serve(vec![ok(r#"{"choices":[{"text":"  I value family.  "}]}"#)]);
    let backend = HttpCompletionBackend::new(
        &base,
        Some("sk-test".into()),
        ApiShape::Completions,
        Duration::from_secs(5),
    );
    let prompt = one_prompt();
    let sampling = SamplingConfig::default();
    let text = backend
        .complete(&CompletionRequest {
            prompt: &prompt,
            sample_index: 0,
            sampling: &sampling,
        })
        .unwrap();
    assert_eq!(text.trim(), "I value family.");
    let req = seen.lock().unwrap()[0].clone();
    assert_eq!(req.request_line, "POST /completions HTTP/1.1");
    assert_eq!(req.header("authorization"), Some("Bearer sk-test"));
    let body = req.json();
    assert_eq!(body["model"], "text-davinci-003");
    assert_eq!(body["max_tokens"], 200);
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["top_p"], 0.5);
    assert_eq!(body["prompt"], prompt.rendered_prompt.as_str());
}

#[test]
fn chat_request_shape() {
    let (base, seen) = serve(vec![ok(
        r#"{"choices":[{"message":{"role":"assistant","content":"Tradition."}}]}"#,
    )]);
    let backend = HttpCompletionBackend::new(&base, None, ApiShape::Chat, Duration::from_secs(5));
    let prompt = one_prompt();
    let sampling = SamplingConfig::default();
    let text = backend
        .complete(&CompletionRequest {
            prompt: &prompt,
            sample_index: 0,
            sampling: &sampling,
        })
        .unwrap();
    assert_eq!(text, "Tradition.");
    let req = seen.lock().unwrap()[0].clone();
    assert_eq!(req.request_line, "POST /chat/completions HTTP/1.1");
    assert_eq!(req.header("authorization"), None);
    assert_eq!(req.json()["messages"][0]["content"], prompt.rendered_prompt.as_str());
}

#[test]
fn status_mapping() {
    let prompt = one_prompt();
    let sampling = SamplingConfig::default();
    let cases: Vec<(u16, Vec<(&'static str, String)>)> = vec![
        (401, vec![]),
        (429, vec![("Retry-After", "7".into())]),
        (502, vec![]),
        (404, vec![]),
    ];
    let mut got = Vec::new();
    for (status, headers) in cases {
        let (base, _) = serve(vec![(status, headers, "{}".into())]);
        let backend = HttpCompletionBackend::new(&base, None, ApiShape::Completions, Duration::from_secs(5));
        got.push(
            backend
                .complete(&CompletionRequest {
                    prompt: &prompt,
                    sample_index: 0,
                    sampling: &sampling,
                })
                .unwrap_err(),
        );
    }
    assert!(matches!(got[0], BackendError::Auth(_)));
    assert!(matches!(got[1], BackendError::Quota { retry_after: Some(d), .. } if d == Duration::from_secs(7)));
    assert!(matches!(got[2], BackendError::Transport(_)));
    assert!(matches!(got[3], BackendError::Rejected(_)));
}

fn opts() -> CollectOptions {
    CollectOptions {
        concurrency: 2,
        retry: RetryPolicy::immediate(2),
        quota_pause: Duration::from_millis(1),
        ..CollectOptions::default()
    }
}

#[test]
fn collect_through_quota_and_server_errors() {
    let (base, seen) = serve(vec![
        (429, vec![("Retry-After", "0".into())], "{}".into()),
        (500, vec![], "{}".into()),
        ok(r#"{"choices":[{"text":"Family first."}]}"#),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let store = PremiseStore::open(&dir.path().join("p.jsonl")).unwrap();
    let backend = HttpCompletionBackend::new(&base, None, ApiShape::Completions, Duration::from_secs(5));
    let sampling = SamplingConfig {
        samples_per_prompt: 2,
        ..SamplingConfig::default()
    };
    let report = collect(&[one_prompt()], &sampling, &backend, &store, &opts()).unwrap();
    assert_eq!(report.written, 2);
    assert!(report.failures.is_empty());
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn collect_stops_on_auth_failure() {
    let (base, _) = serve(vec![(401, vec![], "{}".into())]);
    let dir = tempfile::tempdir().unwrap();
    let store = PremiseStore::open(&dir.path().join("p.jsonl")).unwrap();
    let backend = HttpCompletionBackend::new(&base, Some("bad".into()), ApiShape::Completions, Duration::from_secs(5));
    let err = collect(&[one_prompt()], &SamplingConfig::default(), &backend, &store, &opts()).unwrap_err();
    assert!(matches!(err, CollectError::Auth(_)), "{err:?}");
    assert_eq!(store.len(), 0);
}
