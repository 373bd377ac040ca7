//! Start the HTTP API on an ephemeral port, ingest a document, ask a question.
//!
//! Pass `--keep` to leave the server running.

use std::sync::Arc;

use scirag::chat::{ChatEngine, EngineConfig};
use scirag::embed::{MockEmbedder, ThumbnailEmbedder};
use scirag::ingest::ChunkParams;
use scirag::llm::FnChatModel;
use scirag::pipeline::Pipeline;
use scirag::service::{router, AppState};
use scirag::store::{CorpusStore, SqliteStore};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let store: Arc<dyn CorpusStore> = Arc::new(SqliteStore::in_memory()?);
    let embedder = Arc::new(MockEmbedder::new(32));
    let engine = ChatEngine::new(store.clone(), embedder.clone(), Arc::new(FnChatModel::offline()), EngineConfig::default())?;
    let state = AppState {
        engine: Arc::new(engine),
        pipeline: Arc::new(Pipeline::new(store, embedder, ChunkParams::new(400, 80)?)),
        images: Arc::new(ThumbnailEmbedder::new()),
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    println!("listening on {base}");
    let server = tokio::spawn(async move { axum::serve(listener, router(state, None)).await });

    let client = tokio::task::spawn_blocking(move || -> anyhow::Result<()> {
        let tei = std::fs::read(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tei/azobenzene.xml"))?;
        let ingested: serde_json::Value = ureq::post(&format!("{base}/api/ingest")).send_bytes(&tei)?.into_json()?;
        println!("POST /api/ingest -> {ingested}");
        let reply: serde_json::Value = ureq::post(&format!("{base}/api/chat"))
            .send_json(serde_json::json!({ "query": "What is the actuation mechanism?", "k": 3 }))?
            .into_json()?;
        println!("POST /api/chat -> {}", reply["response_text"]);
        println!("provenance: {}", reply["provenance"]);
        Ok(())
    });
    client.await??;

    if std::env::args().any(|a| a == "--keep") {
        server.await??;
    }
    Ok(())
}
