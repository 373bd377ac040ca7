//! Document ingestion: TEI parsing, display names and fixed-window chunking.

mod chunk;
mod grobid;
mod tei;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use chunk::{build_chunks, chunk_count, chunk_text, ChunkParams, ChunkSpan};
pub use grobid::{CannedConverter, GrobidClient, PdfConverter};
pub use tei::{parse_tei, parse_tei_file};

/// Separator placed between the display name and the chunk text.
pub const AUGMENT_SEPARATOR: &str = "\n";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed XML at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("document has no <body> element")]
    MissingBody,
    #[error("invalid chunk parameters: chunk_size={chunk_size}, overlap={overlap}")]
    ChunkParams { chunk_size: usize, overlap: usize },
    #[error("title must not be empty")]
    EmptyTitle,
    #[error("conversion failed: {0}")]
    Conversion(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub String);

impl DocId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DocId {
    fn from(s: &str) -> Self {
        DocId(s.to_string())
    }
}

/// Row identifier for chunks. Always fits in 63 bits so it maps onto a
/// signed SQL integer without changing order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ChunkId(pub u64);

impl ChunkId {
    pub fn derive(doc_id: &DocId, kind: ChunkKind, ordinal: usize) -> Self {
        let mut h = Sha256::new();
        h.update(doc_id.as_str().as_bytes());
        h.update([0u8]);
        h.update(kind.as_str().as_bytes());
        h.update([0u8]);
        h.update((ordinal as u64).to_le_bytes());
        ChunkId(hash_to_row_id(&h.finalize()))
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// First eight digest bytes, cut to 53 bits so ids survive a round trip
/// through JSON numbers in a browser.
pub(crate) fn hash_to_row_id(digest: &[u8]) -> u64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(b) & ((1 << 53) - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkKind {
    Raw,
    Summary,
}

impl ChunkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChunkKind::Raw => "raw",
            ChunkKind::Summary => "summary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raw" => Some(ChunkKind::Raw),
            "summary" => Some(ChunkKind::Summary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Author {
    pub given: Option<String>,
    pub surname: String,
}

impl Author {
    pub fn new(surname: &str, given: Option<&str>) -> Self {
        Author {
            given: given.map(str::to_string),
            surname: surname.to_string(),
        }
    }
}

/// One ingested publication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: DocId,
    pub title: String,
    pub authors: Vec<Author>,
    pub display_name: String,
    /// Abstract from the header. Kept apart from `body_text`; only the
    /// pairwise judge reads it.
    pub abstract_text: String,
    /// Main text only. References and header material are excluded.
    pub body_text: String,
    pub word_count: usize,
    pub source_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRecord {
    pub doc_id: DocId,
    pub figure_label: String,
    pub caption: String,
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextChunk {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    pub ordinal: usize,
    /// Offsets in Unicode scalar values into the source text.
    pub char_start: usize,
    pub char_end: usize,
    pub raw_text: String,
    pub augmented_text: String,
    pub kind: ChunkKind,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Short citation-style name used to anchor chunks to their source.
///
/// Two or more authors give `Surname1, SurnameN, et al. "Title"`, a single
/// author gives `Surname "Title"` and no authors give `"Title"`.
pub fn make_display_name(authors: &[Author], title: &str) -> Result<String, IngestError> {
    let title = title.trim();
    if title.is_empty() {
        return Err(IngestError::EmptyTitle);
    }
    Ok(match authors {
        [] => format!("\"{title}\""),
        [only] => format!("{} \"{title}\"", only.surname),
        [first, .., last] => format!("{}, {}, et al. \"{title}\"", first.surname, last.surname),
    })
}

pub(crate) fn derive_doc_id(title: &str, authors: &[Author], fallback: &[u8]) -> DocId {
    let mut h = Sha256::new();
    if title.trim().is_empty() {
        h.update(fallback);
    } else {
        h.update(title.trim().as_bytes());
        for a in authors {
            h.update([0u8]);
            h.update(a.surname.as_bytes());
            if let Some(g) = &a.given {
                h.update([1u8]);
                h.update(g.as_bytes());
            }
        }
    }
    let digest = h.finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    DocId(hex)
}
