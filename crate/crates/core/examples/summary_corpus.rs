//! Build the compressed summary corpus for one document with a stub model.

use scirag::ingest::{build_chunks, parse_tei_file, ChunkKind, ChunkParams};
use scirag::llm::FnChatModel;
use scirag::summarize::{build_summary_corpus, compression_ratio, SummaryConfig};

fn main() -> anyhow::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tei/electrolytes.xml");
    let (doc, _) = parse_tei_file(&path)?;
    let params = ChunkParams::new(400, 80)?;
    let raw = build_chunks(&doc.doc_id, &doc.display_name, ChunkKind::Raw, &doc.body_text, &params)?;

    // Stands in for a real model: keeps the first sentence of each extract.
    let llm = FnChatModel::new("first-sentence", |req| {
        let text = req.last_user().rsplit("\n\n").next().unwrap_or_default();
        Ok(text.split_inclusive('.').next().unwrap_or(text).trim().to_string())
    });
    let corpus = build_summary_corpus(&doc, &raw, &llm, &params, &SummaryConfig::default())?;
    println!("{} raw chunks -> {} summary chunks", raw.len(), corpus.chunks.len());
    if let Some(r) = compression_ratio(corpus.chunks.len(), raw.len()) {
        println!("compression {:.0}%", 100.0 * r);
    }
    println!("{}", corpus.summary_text.chars().take(300).collect::<String>());
    Ok(())
}
