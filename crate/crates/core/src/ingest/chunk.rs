use serde::{Deserialize, Serialize};

use super::{ChunkId, ChunkKind, DocId, IngestError, TextChunk, AUGMENT_SEPARATOR};

/// Window parameters, measured in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            chunk_size: 1400,
            overlap: 280,
        }
    }
}

impl ChunkParams {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, IngestError> {
        let p = ChunkParams { chunk_size, overlap };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(IngestError::ChunkParams {
                chunk_size: self.chunk_size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// A window over the source text. Offsets are scalar-value indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkSpan {
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

/// Number of windows for a text of `len` scalars.
pub fn chunk_count(len: usize, params: &ChunkParams) -> usize {
    if len == 0 {
        0
    } else if len <= params.chunk_size {
        1
    } else {
        (len - params.chunk_size).div_ceil(params.stride()) + 1
    }
}

/// Split `text` into fixed-size windows that overlap by `params.overlap`.
///
/// Window `i` covers `[i * stride, min(i * stride + chunk_size, len))`. The
/// last window may be short; it is kept as is.
pub fn chunk_text(text: &str, params: &ChunkParams) -> Result<Vec<ChunkSpan>, IngestError> {
    params.validate()?;
    // byte offset of every scalar, plus the end of the string
    let mut bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
    let len = bounds.len();
    bounds.push(text.len());

    let n = chunk_count(len, params);
    let stride = params.stride();
    let spans = (0..n)
        .map(|i| {
            let start = i * stride;
            let end = (start + params.chunk_size).min(len);
            ChunkSpan {
                char_start: start,
                char_end: end,
                text: text[bounds[start]..bounds[end]].to_string(),
            }
        })
        .collect();
    Ok(spans)
}

/// Chunk `text` and attach identities plus the name-prepended text.
pub fn build_chunks(
    doc_id: &DocId,
    display_name: &str,
    kind: ChunkKind,
    text: &str,
    params: &ChunkParams,
) -> Result<Vec<TextChunk>, IngestError> {
    Ok(chunk_text(text, params)?
        .into_iter()
        .enumerate()
        .map(|(ordinal, span)| TextChunk {
            chunk_id: ChunkId::derive(doc_id, kind, ordinal),
            doc_id: doc_id.clone(),
            ordinal,
            char_start: span.char_start,
            char_end: span.char_end,
            augmented_text: format!("{display_name}{AUGMENT_SEPARATOR}{}", span.text),
            raw_text: span.text,
            kind,
        })
        .collect())
}
