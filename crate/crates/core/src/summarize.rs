//! Compress raw chunks through an LLM and re-chunk the concatenated
//! summaries into a second, smaller corpus.

use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{build_chunks, ChunkId, ChunkKind, ChunkParams, DocId, DocumentRecord, IngestError, TextChunk};
use crate::llm::{complete_with_retry, ChatModel, CompletionRequest, LlmError, DEFAULT_TEMPERATURE};
use crate::provider::RetryPolicy;

/// Placeholder replaced by the chunk text in the instruction template.
pub const TEXT_PLACEHOLDER: &str = "{text}";

pub const DEFAULT_SUMMARY_TEMPLATE: &str =
    "Please summarize in a concise way the following extract from a scientific publication.\n\n{text}";

/// Separator between consecutive summaries in the summary document.
pub const SUMMARY_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    pub template: String,
    pub temperature: f64,
    /// Chunks summarized concurrently.
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// A document fails when more than this fraction of its summaries fail.
    pub max_failure_fraction: f64,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            template: DEFAULT_SUMMARY_TEMPLATE.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            concurrency: 4,
            retry: RetryPolicy::default(),
            max_failure_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub source_chunk_id: ChunkId,
    pub doc_id: DocId,
    pub model_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SummarizeError {
    #[error("chunk {0} is not a raw chunk")]
    NotRaw(ChunkId),
    #[error("document {doc_id} has no raw chunks")]
    NoRawChunks { doc_id: DocId },
    #[error("summarizing chunk {chunk_id} failed: {source}")]
    Llm {
        chunk_id: ChunkId,
        #[source]
        source: LlmError,
    },
    #[error("{failed} of {attempted} summaries failed for {doc_id}")]
    TooManyFailures {
        doc_id: DocId,
        failed: usize,
        attempted: usize,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub fn render_summary_prompt(template: &str, text: &str) -> String {
    if template.contains(TEXT_PLACEHOLDER) {
        template.replace(TEXT_PLACEHOLDER, text)
    } else {
        format!("{template}\n\n{text}")
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Summarize one raw chunk. Whitespace-only chunks are skipped without an
/// LLM call and yield `None`.
pub fn summarize_chunk(
    chunk: &TextChunk,
    llm: &dyn ChatModel,
    cfg: &SummaryConfig,
) -> Result<Option<SummaryRecord>, SummarizeError> {
    if chunk.kind != ChunkKind::Raw {
        return Err(SummarizeError::NotRaw(chunk.chunk_id));
    }
    if chunk.raw_text.trim().is_empty() {
        return Ok(None);
    }
    let req = CompletionRequest::single(
        render_summary_prompt(&cfg.template, &chunk.raw_text),
        cfg.temperature,
    );
    let text = complete_with_retry(llm, &req, &cfg.retry).map_err(|source| SummarizeError::Llm {
        chunk_id: chunk.chunk_id,
        source,
    })?;
    Ok(Some(SummaryRecord {
        source_chunk_id: chunk.chunk_id,
        doc_id: chunk.doc_id.clone(),
        model_id: llm.model_id().to_string(),
        created_at: now_secs(),
        text: text.trim().to_string(),
    }))
}

#[derive(Debug, Clone)]
pub struct SummaryCorpus {
    pub doc_id: DocId,
    /// Successful summaries in ordinal order.
    pub records: Vec<SummaryRecord>,
    /// Chunks whose summary failed, with the error text. They leave gaps.
    pub failures: Vec<(ChunkId, String)>,
    pub skipped: usize,
    pub summary_text: String,
    pub chunks: Vec<TextChunk>,
}

/// Summarize every raw chunk of `doc`, join the summaries in ordinal order
/// and chunk the result with `params`. Chunks carry the document's display
/// name just like raw chunks.
pub fn build_summary_corpus(
    doc: &DocumentRecord,
    raw_chunks: &[TextChunk],
    llm: &dyn ChatModel,
    params: &ChunkParams,
    cfg: &SummaryConfig,
) -> Result<SummaryCorpus, SummarizeError> {
    params.validate()?;
    if raw_chunks.is_empty() {
        return Err(SummarizeError::NoRawChunks {
            doc_id: doc.doc_id.clone(),
        });
    }
    let mut ordered: Vec<&TextChunk> = raw_chunks.iter().collect();
    ordered.sort_by_key(|c| c.ordinal);

    let run = || {
        ordered
            .par_iter()
            .map(|c| (c.chunk_id, summarize_chunk(c, llm, cfg)))
            .collect::<Vec<_>>()
    };
    let outcomes = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut skipped = 0;
    for (id, outcome) in outcomes {
        match outcome {
            Ok(Some(r)) => records.push(r),
            Ok(None) => skipped += 1,
            Err(e @ SummarizeError::NotRaw(_)) => return Err(e),
            Err(e) => {
                tracing::warn!(chunk = %id, error = %e, "summary failed");
                failures.push((id, e.to_string()));
            }
        }
    }
    let attempted = records.len() + failures.len();
    if attempted > 0 && failures.len() as f64 > cfg.max_failure_fraction * attempted as f64 {
        return Err(SummarizeError::TooManyFailures {
            doc_id: doc.doc_id.clone(),
            failed: failures.len(),
            attempted,
        });
    }

    let summary_text = records
        .iter()
        .map(|r| r.text.as_str())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(SUMMARY_SEPARATOR);
    let chunks = build_chunks(
        &doc.doc_id,
        &doc.display_name,
        ChunkKind::Summary,
        &summary_text,
        params,
    )?;
    Ok(SummaryCorpus {
        doc_id: doc.doc_id.clone(),
        records,
        failures,
        skipped,
        summary_text,
        chunks,
    })
}

/// Summary chunks per raw chunk; `None` when there are no raw chunks.
pub fn compression_ratio(summary_chunks: usize, raw_chunks: usize) -> Option<f64> {
    (raw_chunks > 0).then(|| summary_chunks as f64 / raw_chunks as f64)
}
