//! Relational persistence for documents, chunks, images and their vectors,
//! plus the dense matrix view used for similarity scans.

mod matrix;
mod sqlite;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingVector;
use crate::eval::ComparisonRecord;
use crate::images::ImageRecord;
use crate::ingest::{ChunkId, ChunkKind, DocId, DocumentRecord, FigureRecord, TextChunk};
use crate::summarize::SummaryRecord;

pub use matrix::{file_stem, EmbeddingMatrix, MatrixError};
pub use sqlite::SqliteStore;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("model {model_id} has dim {expected}, got {got}")]
    Schema {
        model_id: String,
        expected: usize,
        got: usize,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Sql(#[from] rusqlite::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsertCounts {
    pub chunks: usize,
    pub vectors: usize,
}

/// A chunk together with the metadata of the document it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkWithSource {
    #[serde(flatten)]
    pub chunk: TextChunk,
    pub display_name: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: DocId,
    pub title: String,
    pub display_name: String,
    pub word_count: usize,
    pub raw_chunks: usize,
    pub summary_chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub doc_id: DocId,
    pub predicted: Option<String>,
    pub reply: String,
}

/// Storage interface. Implementations must make every write atomic: a
/// failed call leaves previously stored rows untouched.
pub trait CorpusStore: Send + Sync {
    /// Insert or replace a document and its raw chunks. Chunks and vectors
    /// are aligned 1:1. Existing raw chunks of this document are dropped
    /// first, together with its summary chunks and records.
    fn upsert_document(
        &self,
        doc: &DocumentRecord,
        chunks: &[TextChunk],
        vectors: &[EmbeddingVector],
    ) -> Result<UpsertCounts, StoreError>;

    /// Replace the chunks of `kind` for an existing document.
    fn replace_chunks(
        &self,
        doc_id: &DocId,
        kind: ChunkKind,
        chunks: &[TextChunk],
        vectors: &[EmbeddingVector],
    ) -> Result<UpsertCounts, StoreError>;

    fn replace_figures(&self, doc_id: &DocId, figures: &[FigureRecord]) -> Result<(), StoreError>;

    fn figures(&self, doc_id: &DocId) -> Result<Vec<FigureRecord>, StoreError>;

    fn document(&self, doc_id: &DocId) -> Result<DocumentRecord, StoreError>;

    fn documents(&self) -> Result<Vec<DocumentSummary>, StoreError>;

    fn document_count(&self) -> Result<usize, StoreError>;

    fn delete_document(&self, doc_id: &DocId) -> Result<bool, StoreError>;

    /// Chunks in the requested order; duplicates are returned as duplicates.
    fn fetch_chunks(&self, ids: &[ChunkId]) -> Result<Vec<ChunkWithSource>, StoreError>;

    fn chunks_of(&self, doc_id: &DocId, kind: ChunkKind) -> Result<Vec<TextChunk>, StoreError>;

    /// All vectors of `model_id` attached to chunks of `kind`, rows ordered
    /// by ascending chunk id.
    fn embedding_matrix(&self, kind: ChunkKind, model_id: &str)
        -> Result<EmbeddingMatrix, StoreError>;

    fn record_summaries(&self, records: &[SummaryRecord]) -> Result<(), StoreError>;

    fn summaries_of(&self, doc_id: &DocId) -> Result<Vec<SummaryRecord>, StoreError>;

    fn upsert_image(&self, image: &ImageRecord, vector: &EmbeddingVector) -> Result<(), StoreError>;

    fn image(&self, image_id: u64) -> Result<ImageRecord, StoreError>;

    fn images(&self) -> Result<Vec<ImageRecord>, StoreError>;

    fn image_matrix(&self, model_id: &str) -> Result<EmbeddingMatrix, StoreError>;

    fn image_vector(&self, image_id: u64, model_id: &str) -> Result<Vec<f32>, StoreError>;

    fn insert_comparisons(&self, records: &[ComparisonRecord]) -> Result<usize, StoreError>;

    fn comparisons(&self) -> Result<Vec<ComparisonRecord>, StoreError>;

    fn record_classifications(&self, rows: &[ClassificationRow]) -> Result<(), StoreError>;

    fn classifications(&self) -> Result<Vec<ClassificationRow>, StoreError>;
}
