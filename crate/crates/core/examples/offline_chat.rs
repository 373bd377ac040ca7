//! Ingest the bundled TEI fixtures and chat with a mock model, fully offline.

use std::sync::Arc;

use scirag::chat::{ChatEngine, EngineConfig, QueryOptions};
use scirag::embed::MockEmbedder;
use scirag::ingest::ChunkParams;
use scirag::llm::FnChatModel;
use scirag::pipeline::Pipeline;
use scirag::store::{CorpusStore, SqliteStore};

fn main() -> anyhow::Result<()> {
    let store: Arc<dyn CorpusStore> = Arc::new(SqliteStore::in_memory()?);
    let embedder = Arc::new(MockEmbedder::new(64));
    let pipeline = Pipeline::new(store.clone(), embedder.clone(), ChunkParams::new(500, 100)?);
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tei");
    let report = pipeline.ingest_tei_dir(&dir)?;
    println!("ingested {} documents", report.ingested.len());

    let engine = ChatEngine::new(store, embedder, Arc::new(FnChatModel::offline()), EngineConfig::default())?;
    let opts = QueryOptions { k_cap: Some(4), ..Default::default() };

    let answer = engine.answer("How do patchy colloids assemble?", &opts, &[])?;
    println!("{}", answer.response_text);
    for p in &answer.provenance {
        println!("  chunk {} ({}) score {:.3}", p.chunk_id, p.kind.as_str(), p.score);
    }
    println!("{} prompt chars, about {} tokens", answer.prompt_char_count, answer.est_tokens);

    print!("streamed: ");
    engine.answer_streaming("What drives the actuation?", &opts, &[], &mut |d| print!("{d}"))?;
    println!();
    Ok(())
}
