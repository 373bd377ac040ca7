//! Similarity measures and exact top-k search over an [`EmbeddingMatrix`].

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingVector;
use crate::store::EmbeddingMatrix;

/// Rows times dims above which scoring runs on the rayon pool.
const PARALLEL_THRESHOLD: usize = 1 << 18;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RetrievalError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("unknown similarity measure {0:?}")]
    UnknownMeasure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMeasure {
    #[default]
    Cosine,
    Euclidean,
    Dot,
}

impl SimilarityMeasure {
    pub const ALL: [SimilarityMeasure; 3] = [
        SimilarityMeasure::Cosine,
        SimilarityMeasure::Euclidean,
        SimilarityMeasure::Dot,
    ];

    /// Euclidean is a distance; the other two are similarities.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, SimilarityMeasure::Euclidean)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityMeasure::Cosine => "cosine",
            SimilarityMeasure::Euclidean => "euclidean",
            SimilarityMeasure::Dot => "dot",
        }
    }

    /// Order two scores so that the better one comes first.
    pub fn compare(self, a: f64, b: f64) -> Ordering {
        if self.higher_is_better() {
            b.total_cmp(&a)
        } else {
            a.total_cmp(&b)
        }
    }
}

impl fmt::Display for SimilarityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityMeasure {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(SimilarityMeasure::Cosine),
            "euclidean" | "euclid" | "l2" => Ok(SimilarityMeasure::Euclidean),
            "dot" | "inner" => Ok(SimilarityMeasure::Dot),
            _ => Err(RetrievalError::UnknownMeasure(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub row_id: u64,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn sq_norm(a: &[f32]) -> f64 {
    a.iter().map(|&x| f64::from(x) * f64::from(x)).sum()
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Score two raw vectors. Accumulates in f64.
pub fn similarity_slices(
    a: &[f32],
    b: &[f32],
    measure: SimilarityMeasure,
) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    match measure {
        SimilarityMeasure::Dot => Ok(dot(a, b)),
        SimilarityMeasure::Euclidean => Ok(sq_dist(a, b).sqrt()),
        SimilarityMeasure::Cosine => {
            let (na, nb) = (sq_norm(a), sq_norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(RetrievalError::ZeroVector);
            }
            Ok(dot(a, b) / (na.sqrt() * nb.sqrt()))
        }
    }
}

pub fn similarity(
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    measure: SimilarityMeasure,
) -> Result<f64, RetrievalError> {
    similarity_slices(a.values(), b.values(), measure)
}

/// Predicate over row ids; `true` removes the row from the results.
pub type Exclude<'a> = &'a (dyn Fn(u64) -> bool + Sync);

/// Exact top-k by full scan.
///
/// Ties are broken by ascending row id. Rows rejected by `exclude` never
/// appear. Under cosine, rows with zero norm are not eligible.
pub fn top_k(
    query: &[f32],
    matrix: &EmbeddingMatrix,
    k: usize,
    measure: SimilarityMeasure,
    exclude: Option<Exclude<'_>>,
) -> Result<Vec<RetrievalHit>, RetrievalError> {
    if !matrix.is_empty() && query.len() != matrix.dim() {
        return Err(RetrievalError::DimMismatch {
            left: query.len(),
            right: matrix.dim(),
        });
    }
    let q_norm = sq_norm(query).sqrt();
    if measure == SimilarityMeasure::Cosine && q_norm == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    if k == 0 || matrix.is_empty() {
        return Ok(Vec::new());
    }

    let score_row = |(id, row): (u64, &[f32])| -> Option<(u64, f64)> {
        if exclude.is_some_and(|f| f(id)) {
            return None;
        }
        let s = match measure {
            SimilarityMeasure::Dot => dot(query, row),
            SimilarityMeasure::Euclidean => sq_dist(query, row).sqrt(),
            SimilarityMeasure::Cosine => {
                let n = sq_norm(row);
                if n == 0.0 {
                    return None;
                }
                dot(query, row) / (q_norm * n.sqrt())
            }
        };
        Some((id, s))
    };

    let mut scored: Vec<(u64, f64)> = if matrix.len() * matrix.dim() >= PARALLEL_THRESHOLD {
        let ids = matrix.row_ids();
        matrix
            .data()
            .par_chunks_exact(matrix.dim())
            .zip(ids.par_iter())
            .filter_map(|(row, &id)| score_row((id, row)))
            .collect()
    } else {
        matrix.rows().filter_map(score_row).collect()
    };

    let cmp = |a: &(u64, f64), b: &(u64, f64)| measure.compare(a.1, b.1).then(a.0.cmp(&b.0));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (row_id, score))| RetrievalHit {
            row_id,
            score,
            rank: i + 1,
        })
        .collect())
}
