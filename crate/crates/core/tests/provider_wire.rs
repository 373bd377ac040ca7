mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use scirag::embed::{embed_texts, BatchConfig, EmbedError, HttpImageEmbedder, HttpTextEmbedder, ImageEmbedder};
use scirag::ingest::{parse_tei, GrobidClient, PdfConverter};
use scirag::llm::{complete_with_retry, stream_with_retry, ChatModel, CompletionRequest, HttpChatModel};
use scirag::provider::{ProviderError, RetryPolicy};

#[derive(Default)]
struct Mock {
    /// Requests answered with 503 before the server starts behaving.
    fail_first: AtomicUsize,
    calls: AtomicUsize,
    batch_sizes: Mutex<Vec<usize>>,
    last_body: Mutex<Value>,
    last_auth: Mutex<Option<String>>,
}

fn vector_for(text: &str) -> Vec<f32> {
    vec![text.len() as f32, text.bytes().map(f32::from).sum::<f32>(), 1.0]
}

async fn embeddings(State(m): State<Arc<Mock>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    m.calls.fetch_add(1, Ordering::SeqCst);
    *m.last_auth.lock().unwrap() = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    if m.fail_first.load(Ordering::SeqCst) > 0 {
        m.fail_first.fetch_sub(1, Ordering::SeqCst);
        return (StatusCode::SERVICE_UNAVAILABLE, "busy").into_response();
    }
    let inputs: Vec<String> = serde_json::from_value(body["input"].clone()).unwrap();
    if inputs.iter().any(|t| t.contains("FORBIDDEN")) {
        return (StatusCode::BAD_REQUEST, "input rejected").into_response();
    }
    m.batch_sizes.lock().unwrap().push(inputs.len());
    // Deliberately out of order: clients must sort by index.
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| json!({"index": i, "embedding": vector_for(t)}))
        .collect();
    Json(json!({"data": data, "model": body["model"]})).into_response()
}

async fn completions(State(m): State<Arc<Mock>>, Json(body): Json<Value>) -> Response {
    m.calls.fetch_add(1, Ordering::SeqCst);
    *m.last_body.lock().unwrap() = body.clone();
    if m.fail_first.load(Ordering::SeqCst) > 0 {
        m.fail_first.fetch_sub(1, Ordering::SeqCst);
        return (StatusCode::TOO_MANY_REQUESTS, "slow down").into_response();
    }
    if body["stream"] == json!(true) {
        let mut sse = String::new();
        for piece in ["Colloids ", "self-", "assemble."] {
            let chunk = json!({"choices": [{"delta": {"content": piece}}]});
            sse.push_str(&format!("data: {chunk}\n\n"));
        }
        sse.push_str("data: [DONE]\n\n");
        return ([("content-type", "text/event-stream")], sse).into_response();
    }
    let n = body["messages"].as_array().map_or(0, Vec::len);
    Json(json!({"choices": [{"message": {"role": "assistant", "content": format!("saw {n} messages")}}]}))
        .into_response()
}

async fn grobid(headers: HeaderMap, body: Bytes) -> Response {
    let ct = headers.get("content-type").unwrap().to_str().unwrap().to_string();
    let text = String::from_utf8_lossy(&body);
    if !ct.starts_with("multipart/form-data") || !text.contains("name=\"input\"") || !text.contains("%PDF-1.4") {
        return (StatusCode::BAD_REQUEST, "expected a multipart PDF upload").into_response();
    }
    common::fixture("colloids.xml").into_response()
}

async fn clip(body: Bytes) -> Json<Value> {
    Json(json!({"embedding": [body.len() as f32, 2.0, -3.0]}))
}

fn server() -> (Arc<Mock>, String) {
    let m = Arc::new(Mock::default());
    let app = Router::new()
        .route("/v1/embeddings", post(embeddings))
        .route("/v1/chat/completions", post(completions))
        .route("/api/processFulltextDocument", post(grobid))
        .route("/clip", post(clip))
        .with_state(m.clone());
    let base = common::spawn(app);
    (m, base)
}

fn fast(batch_size: usize) -> BatchConfig {
    BatchConfig {
        batch_size,
        parallel_batches: 2,
        retry: RetryPolicy::immediate(3),
    }
}

#[test]
fn embeddings_are_batched_and_returned_in_input_order() {
    let (m, base) = server();
    let client = HttpTextEmbedder::new(&format!("{base}/v1"), "test-embed", Some("sk-test".into()));
    let texts: Vec<String> = (0..23).map(|i| format!("text number {i}")).collect();
    let out = embed_texts(&texts, &client, &fast(10)).unwrap();
    assert_eq!(out.len(), 23);
    for (t, v) in texts.iter().zip(&out) {
        assert_eq!(v.values(), vector_for(t).as_slice());
        assert_eq!(v.model_id(), "test-embed");
    }
    let mut sizes = m.batch_sizes.lock().unwrap().clone();
    sizes.sort();
    assert_eq!(sizes, vec![3, 10, 10]);
    assert_eq!(m.last_auth.lock().unwrap().as_deref(), Some("Bearer sk-test"));
}

#[test]
fn transient_embedding_failures_are_retried() {
    let (m, base) = server();
    m.fail_first.store(2, Ordering::SeqCst);
    let client = HttpTextEmbedder::new(&format!("{base}/v1"), "e", None);
    let out = embed_texts(&["a", "bb"], &client, &fast(8)).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(m.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn rejected_input_is_named() {
    let (_m, base) = server();
    let client = HttpTextEmbedder::new(&format!("{base}/v1"), "e", None);
    let err = embed_texts(&["fine", "also fine", "FORBIDDEN text"], &client, &fast(8)).unwrap_err();
    match err {
        EmbedError::Permanent { index, source } => {
            assert_eq!(index, 2);
            assert!(matches!(source, ProviderError::Status { status: 400, .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn chat_completion_round_trip() {
    let (m, base) = server();
    let model = HttpChatModel::new(&format!("{base}/v1"), "gpt-test", None);
    m.fail_first.store(1, Ordering::SeqCst);
    let req = CompletionRequest::single("hello", 0.3);
    let reply = complete_with_retry(&model, &req, &RetryPolicy::immediate(3)).unwrap();
    assert_eq!(reply, "saw 1 messages");
    let body = m.last_body.lock().unwrap().clone();
    assert_eq!(body["model"], "gpt-test");
    assert_eq!(body["temperature"], 0.3);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello");
    assert_eq!(model.model_id(), "gpt-test");
}

#[test]
fn chat_stream_is_delivered_in_order() {
    let (_m, base) = server();
    let model = HttpChatModel::new(&format!("{base}/v1"), "gpt-test", None);
    let mut pieces = Vec::new();
    let text = stream_with_retry(
        &model,
        &CompletionRequest::single("q", 1.0),
        &RetryPolicy::immediate(1),
        &mut |d: &str| pieces.push(d.to_string()),
    )
    .unwrap();
    assert_eq!(pieces, ["Colloids ", "self-", "assemble."]);
    assert_eq!(text, "Colloids self-assemble.");
}

#[test]
fn grobid_upload_returns_parsable_tei() {
    let (_m, base) = server();
    let tei = GrobidClient::new(&base).convert(b"%PDF-1.4 fake").unwrap();
    let (doc, figures) = parse_tei(&tei).unwrap();
    assert_eq!(doc.title, "Directed Assembly of Patchy Colloids");
    assert_eq!(figures.len(), 1);
}

#[test]
fn image_provider_posts_bytes() {
    let (_m, base) = server();
    let client = HttpImageEmbedder::new(&format!("{base}/clip"), "clip-test");
    let v = client.embed_image("x.png", &[0u8; 7]).unwrap();
    assert_eq!(v, vec![7.0, 2.0, -3.0]);
    assert_eq!(client.model_id(), "clip-test");
}
