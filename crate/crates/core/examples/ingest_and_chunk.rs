//! Parse a TEI file and split its body into overlapping windows.
//!
//! `cargo run --example ingest_and_chunk [file.xml]`

use std::path::PathBuf;

use scirag::ingest::{build_chunks, chunk_count, parse_tei_file, ChunkKind, ChunkParams};

fn main() -> anyhow::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tei/colloids.xml")
    });
    let (doc, figures) = parse_tei_file(&path)?;
    println!("{} ({})", doc.title, doc.display_name);
    println!("body: {} chars, {} figures", doc.body_text.chars().count(), figures.len());

    let params = ChunkParams::new(600, 120)?;
    let chunks = build_chunks(&doc.doc_id, &doc.display_name, ChunkKind::Raw, &doc.body_text, &params)?;
    assert_eq!(chunks.len(), chunk_count(doc.body_text.chars().count(), &params));
    for c in chunks.iter().take(3) {
        let head: String = c.augmented_text.chars().take(80).collect();
        println!("#{:<3} [{}..{}) {head}...", c.ordinal, c.char_start, c.char_end);
    }
    println!("{} chunks", chunks.len());
    Ok(())
}
