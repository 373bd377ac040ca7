//! Glue between parsing, chunking, embedding and storage.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{embed_texts, BatchConfig, EmbedError, TextEmbedder};
use crate::ingest::{build_chunks, parse_tei, ChunkKind, ChunkParams, DocId, IngestError, PdfConverter};
use crate::llm::ChatModel;
use crate::store::{file_stem, CorpusStore, MatrixError, StoreError};
use crate::summarize::{build_summary_corpus, compression_ratio, SummarizeError, SummaryConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub doc_id: DocId,
    pub title: String,
    pub raw_chunks: usize,
    pub figures: usize,
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub ingested: Vec<IngestOutcome>,
    pub failed: Vec<(PathBuf, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryOutcome {
    pub doc_id: DocId,
    pub raw_chunks: usize,
    pub summary_chunks: usize,
    pub failed_summaries: usize,
    pub compression_ratio: Option<f64>,
}

pub struct Pipeline {
    pub store: Arc<dyn CorpusStore>,
    pub embedder: Arc<dyn TextEmbedder>,
    pub params: ChunkParams,
    pub batch: BatchConfig,
}

impl Pipeline {
    pub fn new(store: Arc<dyn CorpusStore>, embedder: Arc<dyn TextEmbedder>, params: ChunkParams) -> Self {
        Pipeline {
            store,
            embedder,
            params,
            batch: BatchConfig::default(),
        }
    }

    /// Parse, chunk, embed and store one TEI document, replacing any earlier
    /// version. A document with an empty body is stored without chunks.
    pub fn ingest_tei(&self, xml: &[u8], source: Option<&Path>) -> Result<IngestOutcome, PipelineError> {
        let (mut doc, figures) = parse_tei(xml)?;
        doc.source_path = source.map(Path::to_path_buf);
        let chunks = build_chunks(&doc.doc_id, &doc.display_name, ChunkKind::Raw, &doc.body_text, &self.params)?;
        let texts: Vec<&str> = chunks.iter().map(|c| c.augmented_text.as_str()).collect();
        let vectors = embed_texts(&texts, self.embedder.as_ref(), &self.batch)?;
        self.store.upsert_document(&doc, &chunks, &vectors)?;
        self.store.replace_figures(&doc.doc_id, &figures)?;
        Ok(IngestOutcome {
            doc_id: doc.doc_id,
            title: doc.title,
            raw_chunks: chunks.len(),
            figures: figures.len(),
            source: doc.source_path,
        })
    }

    /// Ingest every `.xml` file under `dir` (not recursive), in name order.
    pub fn ingest_tei_dir(&self, dir: &Path) -> Result<IngestReport, PipelineError> {
        let files = list_files(dir, "xml")?;
        Ok(self.collect(files.par_iter().map(|p| {
            let out = std::fs::read(p)
                .map_err(PipelineError::from)
                .and_then(|xml| self.ingest_tei(&xml, Some(p)));
            (p.clone(), out)
        })))
    }

    /// Convert every `.pdf` under `dir` to TEI and ingest it.
    pub fn ingest_pdf_dir(&self, dir: &Path, converter: &dyn PdfConverter) -> Result<IngestReport, PipelineError> {
        let files = list_files(dir, "pdf")?;
        Ok(self.collect(files.par_iter().map(|p| {
            let out = std::fs::read(p)
                .map_err(PipelineError::from)
                .and_then(|pdf| Ok(converter.convert(&pdf)?))
                .and_then(|xml| self.ingest_tei(&xml, Some(p)));
            (p.clone(), out)
        })))
    }

    fn collect(
        &self,
        results: impl ParallelIterator<Item = (PathBuf, Result<IngestOutcome, PipelineError>)>,
    ) -> IngestReport {
        let mut results: Vec<_> = results.collect();
        results.sort_by(|a, b| a.0.cmp(&b.0));
        let mut report = IngestReport::default();
        for (path, r) in results {
            match r {
                Ok(o) => report.ingested.push(o),
                Err(e) => {
                    tracing::warn!(path = %path.display(), error = %e, "document skipped");
                    report.failed.push((path, e.to_string()));
                }
            }
        }
        report
    }

    /// Build, embed and store the summary corpus of one document.
    pub fn summarize(
        &self,
        doc_id: &DocId,
        llm: &dyn ChatModel,
        cfg: &SummaryConfig,
    ) -> Result<SummaryOutcome, PipelineError> {
        let doc = self.store.document(doc_id)?;
        let raw = self.store.chunks_of(doc_id, ChunkKind::Raw)?;
        let corpus = build_summary_corpus(&doc, &raw, llm, &self.params, cfg)?;
        let texts: Vec<&str> = corpus.chunks.iter().map(|c| c.augmented_text.as_str()).collect();
        let vectors = embed_texts(&texts, self.embedder.as_ref(), &self.batch)?;
        self.store.record_summaries(&corpus.records)?;
        self.store
            .replace_chunks(doc_id, ChunkKind::Summary, &corpus.chunks, &vectors)?;
        Ok(SummaryOutcome {
            doc_id: doc_id.clone(),
            raw_chunks: raw.len(),
            summary_chunks: corpus.chunks.len(),
            failed_summaries: corpus.failures.len(),
            compression_ratio: compression_ratio(corpus.chunks.len(), raw.len()),
        })
    }

    /// Write the stored vectors of `kind` as a `.vecs` file plus row ids.
    pub fn export_cache(&self, kind: ChunkKind, dir: &Path) -> Result<(PathBuf, PathBuf), PipelineError> {
        std::fs::create_dir_all(dir)?;
        let m = self.store.embedding_matrix(kind, self.embedder.model_id())?;
        let stem = format!("{}-{}", file_stem(self.embedder.model_id()), kind.as_str());
        Ok(m.save_sidecar(dir, &stem)?)
    }
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)))
        .collect();
    out.sort();
    Ok(out)
}
