mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use scirag::chat::{ChatEngine, EngineConfig};
use scirag::embed::{MockEmbedder, ThumbnailEmbedder};
use scirag::images::{ingest_images, ImageKind, ImageRecord};
use scirag::ingest::ChunkParams;
use scirag::llm::FnChatModel;
use scirag::pipeline::Pipeline;
use scirag::provider::RetryPolicy;
use scirag::service::{router, AppState};
use scirag::store::{CorpusStore, SqliteStore};

fn state_with(store: Arc<dyn CorpusStore>) -> AppState {
    let embedder = Arc::new(MockEmbedder::new(32));
    let engine = ChatEngine::new(store.clone(), embedder.clone(), Arc::new(FnChatModel::offline()), EngineConfig::default())
        .unwrap();
    AppState {
        engine: Arc::new(engine),
        pipeline: Arc::new(Pipeline::new(store, embedder, ChunkParams::new(400, 80).unwrap())),
        images: Arc::new(ThumbnailEmbedder::new()),
    }
}

fn fresh() -> (AppState, Router) {
    let state = state_with(Arc::new(SqliteStore::in_memory().unwrap()));
    (state.clone(), router(state, None))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn post_json(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn loaded() -> (AppState, Router) {
    let (state, app) = fresh();
    for name in ["colloids.xml", "electrolytes.xml", "azobenzene.xml"] {
        let req = Request::post("/api/ingest").body(Body::from(common::fixture(name))).unwrap();
        let (s, _) = call(&app, req).await;
        assert_eq!(s, StatusCode::OK);
    }
    (state, app)
}

#[tokio::test]
async fn health_on_fresh_start() {
    let (_, app) = fresh();
    let (s, v) = get_json(&app, "/api/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"status": "ok", "documents": 0}));
}

#[tokio::test]
async fn empty_query_is_rejected() {
    let (_, app) = loaded().await;
    let (s, v) = post_json(&app, "/api/chat", json!({"query": "   "})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "invalid_request");
    assert!(v["message"].is_string());
}

#[tokio::test]
async fn chat_on_empty_corpus_is_unavailable() {
    let (_, app) = fresh();
    let (s, v) = post_json(&app, "/api/chat", json!({"query": "anything"})).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["code"], "corpus_empty");
    // Raw chunks exist but no summaries yet.
    let (_, app) = loaded().await;
    let (s, _) = post_json(&app, "/api/chat", json!({"query": "anything", "mode": "summary"})).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn chat_is_deterministic_and_provenance_resolves() {
    let (_, app) = loaded().await;
    let body = json!({"query": "How do patchy colloids assemble?", "temperature": 0.0});
    let (s, a) = post_json(&app, "/api/chat", body.clone()).await;
    assert_eq!(s, StatusCode::OK);
    let (_, b) = post_json(&app, "/api/chat", body).await;
    assert_eq!(a["response_text"], b["response_text"]);
    assert_eq!(a["provenance"], b["provenance"]);
    assert_eq!(a["model_id"], "offline");
    let prov = a["provenance"].as_array().unwrap();
    assert!(!prov.is_empty());
    for p in prov {
        let id = p["chunk_id"].as_u64().unwrap();
        assert!(id < 1 << 53);
        let (s, c) = get_json(&app, &format!("/api/chunks/{id}")).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(c["chunk_id"].as_u64(), Some(id));
        assert!(c["display_name"].is_string());
    }
}

#[tokio::test]
async fn bad_temperature_is_rejected() {
    let (_, app) = loaded().await;
    let (s, _) = post_json(&app, "/api/chat", json!({"query": "q", "temperature": 7.5})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn streamed_chat_ends_with_answer_event() {
    let (_, app) = loaded().await;
    let req = Request::post("/api/chat")
        .header("content-type", "application/json")
        .body(Body::from(json!({"query": "light driven bending", "stream": true}).to_string()))
        .unwrap();
    let (s, body) = call(&app, req).await;
    assert_eq!(s, StatusCode::OK);
    let text = String::from_utf8(body).unwrap();
    let delta = text.find("event: delta").expect("a delta event");
    let answer = text.find("event: answer").expect("an answer event");
    assert!(delta < answer);
    let data = text[answer..].lines().find_map(|l| l.strip_prefix("data: ")).unwrap();
    let v: Value = serde_json::from_str(data).unwrap();
    assert!(v["response_text"].as_str().unwrap().starts_with("Offline answer"));
}

#[tokio::test]
async fn sessions_accumulate_turns() {
    let (state, app) = loaded().await;
    for q in ["first question", "second question"] {
        let (s, _) = post_json(&app, "/api/chat", json!({"query": q, "session_id": "s1"})).await;
        assert_eq!(s, StatusCode::OK);
    }
    assert_eq!(state.engine.session("s1").turns().len(), 2);
    assert!(state.engine.session("other").turns().is_empty());
}

#[tokio::test]
async fn text_search_returns_previews() {
    let (_, app) = loaded().await;
    let (s, v) = post_json(&app, "/api/search/text", json!({"query": "ionic conductivity", "k": 3})).await;
    assert_eq!(s, StatusCode::OK);
    let hits = v.as_array().unwrap();
    assert_eq!(hits.len(), 3);
    for (i, h) in hits.iter().enumerate() {
        assert_eq!(h["rank"].as_u64(), Some(i as u64 + 1));
        assert!(h["preview"].as_str().unwrap().chars().count() <= 240);
    }
    let (s, _) = post_json(&app, "/api/search/text", json!({"query": "x", "measure": "manhattan"})).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn documents_and_unknown_chunks() {
    let (_, app) = loaded().await;
    let (s, v) = get_json(&app, "/api/documents").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 3);
    let (s, v) = get_json(&app, "/api/chunks/12345").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
    let (s, _) = get_json(&app, "/api/chunks/abc").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = get_json(&app, "/api/health").await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn malformed_ingest_is_a_client_error() {
    let (_, app) = fresh();
    let (s, v) = call(&app, Request::post("/api/ingest").body(Body::from("<TEI><oops")).unwrap()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&v).unwrap();
    assert!(v["detail"].is_string());
}

fn png(shade: u8) -> Vec<u8> {
    let img = image::RgbImage::from_fn(16, 16, |x, y| image::Rgb([shade, (x * 8) as u8, (y * 8) as u8]));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

fn multipart(fields: &[(&str, Option<&str>, Vec<u8>)]) -> (String, Vec<u8>) {
    let boundary = "xBOUNDARYx";
    let mut body = Vec::new();
    for (name, file, data) in fields {
        body.extend(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"").as_bytes());
        if let Some(f) = file {
            body.extend(format!("; filename=\"{f}\"\r\nContent-Type: image/png").as_bytes());
        }
        body.extend(b"\r\n\r\n");
        body.extend(data);
        body.extend(b"\r\n");
    }
    body.extend(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

#[tokio::test]
async fn image_search_by_id_and_upload() {
    let (state, app) = fresh();
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for (group, shades) in [("beamA", [10u8, 20]), ("beamB", [200, 210])] {
        std::fs::create_dir_all(dir.path().join(group)).unwrap();
        for s in shades {
            let p = dir.path().join(group).join(format!("{s}.png"));
            std::fs::write(&p, png(s)).unwrap();
            records.push(ImageRecord::new(p, ImageKind::Raw));
        }
    }
    let counts = ingest_images(&records, state.images.as_ref(), state.engine.store().as_ref(), &RetryPolicy::immediate(1));
    assert_eq!(counts.ok, 4);

    let query_id = records[0].image_id.to_string();
    let (ct, body) = multipart(&[("image_id", None, query_id.clone().into_bytes()), ("k", None, b"2".to_vec())]);
    let (s, b) = call(&app, Request::post("/api/search/image").header("content-type", ct).body(Body::from(body)).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    let hits: Value = serde_json::from_slice(&b).unwrap();
    let hits = hits.as_array().unwrap();
    assert_eq!(hits.len(), 2);
    assert_eq!(hits[0]["image"]["path"], json!(records[1].path));
    assert!(hits.iter().all(|h| h["image"]["image_id"].as_u64() != Some(records[0].image_id)));
    assert!(hits[0]["thumbnail_png_base64"].as_str().unwrap().len() > 20);

    let (ct, body) = multipart(&[
        ("image", Some("q.png"), png(10)),
        ("measure", None, b"cosine".to_vec()),
        ("exclude_same_group", None, b"true".to_vec()),
        ("k", None, b"5".to_vec()),
    ]);
    let (s, b) = call(&app, Request::post("/api/search/image").header("content-type", ct).body(Body::from(body)).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    let hits: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(hits.as_array().unwrap().len(), 4);

    let (ct, body) = multipart(&[("image_id", None, query_id.into_bytes()), ("k", None, b"0".to_vec())]);
    let (_, b) = call(&app, Request::post("/api/search/image").header("content-type", ct).body(Body::from(body)).unwrap()).await;
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap(), json!([]));

    let (ct, body) = multipart(&[("k", None, b"3".to_vec())]);
    let (s, _) = call(&app, Request::post("/api/search/image").header("content-type", ct).body(Body::from(body)).unwrap()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn restart_preserves_store_state() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("s.db");
    {
        let state = state_with(Arc::new(SqliteStore::open(&db).unwrap()));
        let app = router(state, None);
        let req = Request::post("/api/ingest").body(Body::from(common::fixture("colloids.xml"))).unwrap();
        assert_eq!(call(&app, req).await.0, StatusCode::OK);
    }
    let app = router(state_with(Arc::new(SqliteStore::open(&db).unwrap())), None);
    let (_, v) = get_json(&app, "/api/health").await;
    assert_eq!(v["documents"], 1);
    let (s, _) = post_json(&app, "/api/chat", json!({"query": "lattice"})).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn static_files_are_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>chat</h1>").unwrap();
    let state = state_with(Arc::new(SqliteStore::in_memory().unwrap()));
    let app = router(state, Some(dir.path().to_path_buf()));
    let (s, b) = call(&app, Request::get("/index.html").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, b"<h1>chat</h1>");
    let (s, _) = get_json(&app, "/api/health").await;
    assert_eq!(s, StatusCode::OK);
}
