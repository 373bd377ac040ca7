use std::io::Write;
use std::path::{Path, PathBuf};

use crate::embed::{decode_cache, encode_cache, CacheError, CACHE_EXTENSION};

/// Dense row-major view of one model's vectors, ordered by row id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    model_id: String,
    dim: usize,
    row_ids: Vec<u64>,
    data: Vec<f32>,
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("{rows} row ids for {values} values at dim {dim}")]
    Shape { rows: usize, values: usize, dim: usize },
    #[error("row {row_id} has dim {got}, matrix dim is {expected}")]
    MixedDims { row_id: u64, expected: usize, got: usize },
    #[error("bad row id sidecar line {line}: {text:?}")]
    Sidecar { line: usize, text: String },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EmbeddingMatrix {
    pub fn new(
        model_id: impl Into<String>,
        dim: usize,
        row_ids: Vec<u64>,
        data: Vec<f32>,
    ) -> Result<Self, MatrixError> {
        if row_ids.len() * dim != data.len() {
            return Err(MatrixError::Shape {
                rows: row_ids.len(),
                values: data.len(),
                dim,
            });
        }
        Ok(EmbeddingMatrix {
            model_id: model_id.into(),
            dim,
            row_ids,
            data,
        })
    }

    pub fn empty(model_id: impl Into<String>, dim: usize) -> Self {
        EmbeddingMatrix {
            model_id: model_id.into(),
            dim,
            row_ids: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Build from `(row_id, vector)` pairs in any order; rows are sorted by id.
    pub fn from_rows(
        model_id: impl Into<String>,
        mut rows: Vec<(u64, Vec<f32>)>,
    ) -> Result<Self, MatrixError> {
        rows.sort_by_key(|(id, _)| *id);
        let dim = rows.first().map_or(0, |(_, v)| v.len());
        let mut row_ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(MatrixError::MixedDims {
                    row_id: id,
                    expected: dim,
                    got: v.len(),
                });
            }
            row_ids.push(id);
            data.extend_from_slice(&v);
        }
        Ok(EmbeddingMatrix {
            model_id: model_id.into(),
            dim,
            row_ids,
            data,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (u64, &[f32])> + '_ {
        self.row_ids.iter().copied().zip(self.data.chunks_exact(self.dim.max(1)))
    }

    pub fn position(&self, row_id: u64) -> Option<usize> {
        self.row_ids.binary_search(&row_id).ok()
    }

    /// Write `<stem>.vecs` and `<stem>.ids` into `dir`.
    pub fn save_sidecar(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), MatrixError> {
        std::fs::create_dir_all(dir)?;
        let stem = file_stem(stem);
        let vecs = dir.join(format!("{stem}.{CACHE_EXTENSION}"));
        let ids = dir.join(format!("{stem}.ids"));
        let mut buf = Vec::new();
        encode_cache(&mut buf, &self.model_id, self.dim, &self.data)?;
        crate::embed::write_atomically(&vecs, &buf)?;
        let mut id_text = Vec::new();
        for id in &self.row_ids {
            writeln!(id_text, "{id}")?;
        }
        crate::embed::write_atomically(&ids, &id_text)?;
        Ok((vecs, ids))
    }

    pub fn load_sidecar(dir: &Path, stem: &str) -> Result<Self, MatrixError> {
        let stem = file_stem(stem);
        let bytes = std::fs::read(dir.join(format!("{stem}.{CACHE_EXTENSION}")))?;
        let (header, data) = decode_cache(&bytes)?;
        let id_text = std::fs::read_to_string(dir.join(format!("{stem}.ids")))?;
        let row_ids = id_text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<u64>().map_err(|_| MatrixError::Sidecar {
                    line: i + 1,
                    text: l.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        EmbeddingMatrix::new(header.model_id, header.dim as usize, row_ids, data)
    }
}

/// Model ids may contain `/` or `:`; keep sidecar names flat.
pub fn file_stem(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}
