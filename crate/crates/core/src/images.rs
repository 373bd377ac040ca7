//! Figure and raw-image ingestion and image-to-image similarity search.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{EmbedError, EmbeddingVector, ImageEmbedder};
use crate::ingest::{hash_to_row_id, DocId};
use crate::provider::{with_retry, RetryPolicy};
use crate::retrieval::{top_k, RetrievalError, RetrievalHit, SimilarityMeasure};
use crate::store::{CorpusStore, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("figure image {0} has no doc_id")]
    FigureWithoutDoc(PathBuf),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Figure,
    Raw,
}

impl ImageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageKind::Figure => "figure",
            ImageKind::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "figure" => Some(ImageKind::Figure),
            "raw" => Some(ImageKind::Raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: u64,
    pub kind: ImageKind,
    pub doc_id: Option<DocId>,
    pub figure_label: Option<String>,
    /// Grouping used by the same-group exclusion filter, e.g. one experiment.
    pub group_key: Option<String>,
    pub caption: Option<String>,
    pub path: PathBuf,
}

impl ImageRecord {
    /// Build a record with a path-derived id. Raw images without an explicit
    /// group fall back to their parent directory name.
    pub fn new(path: impl Into<PathBuf>, kind: ImageKind) -> Self {
        let path = path.into();
        let group_key = match kind {
            ImageKind::Raw => default_group_key(&path),
            ImageKind::Figure => None,
        };
        ImageRecord {
            image_id: image_id_for(&path),
            kind,
            doc_id: None,
            figure_label: None,
            group_key,
            caption: None,
            path,
        }
    }

    fn validate(&self) -> Result<(), ImageError> {
        if self.kind == ImageKind::Figure && self.doc_id.is_none() {
            return Err(ImageError::FigureWithoutDoc(self.path.clone()));
        }
        Ok(())
    }
}

pub fn image_id_for(path: &Path) -> u64 {
    hash_to_row_id(&Sha256::digest(path.to_string_lossy().as_bytes()))
}

pub fn default_group_key(path: &Path) -> Option<String> {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
}

/// Read a manifest CSV with header `path,kind,doc_id,figure_label,group_key,caption`.
/// Relative paths resolve against the manifest's directory and are made
/// absolute, so image ids do not depend on the working directory. Empty
/// cells mean "absent".
pub fn read_manifest(path: &Path) -> Result<Vec<ImageRecord>, ImageError> {
    #[derive(Deserialize)]
    struct Row {
        path: String,
        kind: String,
        #[serde(default)]
        doc_id: Option<String>,
        #[serde(default)]
        figure_label: Option<String>,
        #[serde(default)]
        group_key: Option<String>,
        #[serde(default)]
        caption: Option<String>,
    }
    fn cell(s: Option<String>) -> Option<String> {
        s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
    }

    let base = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let base = std::fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_path(path)?.deserialize().enumerate() {
        let line = i + 2;
        let row: Row = row?;
        let kind = ImageKind::parse(&row.kind).ok_or_else(|| ImageError::Manifest {
            line,
            message: format!("unknown kind {:?}", row.kind),
        })?;
        let p = PathBuf::from(row.path.trim());
        let p = if p.is_relative() { base.join(p) } else { p };
        let mut rec = ImageRecord::new(p, kind);
        rec.doc_id = cell(row.doc_id).map(DocId);
        rec.figure_label = cell(row.figure_label);
        rec.caption = cell(row.caption);
        if let Some(g) = cell(row.group_key) {
            rec.group_key = Some(g);
        }
        rec.validate().map_err(|e| ImageError::Manifest {
            line,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub ok: usize,
    pub failed: usize,
}

/// Embed and store each image. Unreadable or undecodable images are
/// logged and counted as failures; the rest still go in.
pub fn ingest_images(
    records: &[ImageRecord],
    provider: &dyn ImageEmbedder,
    store: &dyn CorpusStore,
    retry: &RetryPolicy,
) -> IngestCounts {
    let outcomes: Vec<Result<(), String>> = records
        .par_iter()
        .map(|rec| {
            rec.validate().map_err(|e| e.to_string())?;
            let bytes = std::fs::read(&rec.path).map_err(|e| e.to_string())?;
            let name = rec.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let values = match with_retry(retry, || provider.embed_image(&name, &bytes)) {
                Ok(Ok(v)) => v,
                Ok(Err(e)) => return Err(e.to_string()),
                Err(e) => return Err(e.to_string()),
            };
            let vector = EmbeddingVector::new(provider.model_id(), values).map_err(|e| e.to_string())?;
            store.upsert_image(rec, &vector).map_err(|e| e.to_string())
        })
        .collect();
    let mut counts = IngestCounts::default();
    for (rec, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok(()) => counts.ok += 1,
            Err(e) => {
                tracing::warn!(path = %rec.path.display(), error = %e, "image skipped");
                counts.failed += 1;
            }
        }
    }
    counts
}

pub enum ImageQuery<'a> {
    Stored(u64),
    Bytes { name: &'a str, bytes: &'a [u8] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSearchParams {
    pub measure: SimilarityMeasure,
    pub k: usize,
    /// Drop every hit sharing the query's group key. Only meaningful for
    /// stored queries, whose group is known.
    pub exclude_same_group: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageHit {
    #[serde(flatten)]
    pub hit: RetrievalHit,
    pub image: ImageRecord,
}

/// Nearest stored images. A stored query never returns itself. For byte
/// queries `exclude_group` names the group to drop, if any.
pub fn search_images(
    query: ImageQuery<'_>,
    params: &ImageSearchParams,
    exclude_group: Option<&str>,
    provider: &dyn ImageEmbedder,
    store: &dyn CorpusStore,
) -> Result<Vec<ImageHit>, ImageError> {
    let model_id = provider.model_id();
    let (vector, self_id, mut group) = match query {
        ImageQuery::Stored(id) => {
            let rec = store.image(id)?;
            let v = store.image_vector(id, model_id)?;
            (v, Some(id), if params.exclude_same_group { rec.group_key } else { None })
        }
        ImageQuery::Bytes { name, bytes } => {
            let v = provider
                .embed_image(name, bytes)
                .map_err(|source| EmbedError::Permanent { index: 0, source })?;
            (v, None, None)
        }
    };
    if let Some(g) = exclude_group {
        group = Some(g.to_string());
    }

    let records = store.images()?;
    let excluded: std::collections::HashSet<u64> = records
        .iter()
        .filter(|r| Some(r.image_id) == self_id || (group.is_some() && r.group_key == group))
        .map(|r| r.image_id)
        .collect();
    let matrix = store.image_matrix(model_id)?;
    let exclude = |id: u64| excluded.contains(&id);
    let hits = top_k(&vector, &matrix, params.k, params.measure, Some(&exclude))?;

    let by_id: std::collections::HashMap<u64, ImageRecord> =
        records.into_iter().map(|r| (r.image_id, r)).collect();
    Ok(hits
        .into_iter()
        .filter_map(|hit| by_id.get(&hit.row_id).map(|image| ImageHit { hit, image: image.clone() }))
        .collect())
}
