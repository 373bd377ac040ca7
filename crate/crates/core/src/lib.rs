//! Retrieval-augmented chat over scientific publication corpora.
//!
//! Documents arrive as TEI XML, are cut into overlapping windows, embedded
//! and stored in SQLite. Queries are embedded the same way, matched by exact
//! top-k search and packed into a character-budgeted prompt for a chat model.
//! Around that core sit LLM-written summary corpora, pairwise impact ranking,
//! topic classification metrics, image similarity search, t-SNE projection
//! and an HTTP service.

pub mod chat;
pub mod cli;
pub mod config;
pub mod embed;
pub mod eval;
pub mod images;
pub mod ingest;
pub mod llm;
pub mod pipeline;
pub mod projection;
pub mod prompt;
pub mod provider;
pub mod retrieval;
pub mod service;
pub mod store;
pub mod summarize;
