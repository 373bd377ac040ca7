//! Text and image embedding providers, batching and the binary vector cache.

mod cache;
mod http;
mod image_provider;
mod mock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::provider::{with_retry, ProviderError, RetryPolicy};

pub use self::cache::{
    decode_cache, encode_cache, read_vector_cache, write_vector_cache, CacheError, CacheHeader,
    CACHE_EXTENSION, CACHE_MAGIC, CACHE_VERSION,
};
pub(crate) use self::cache::write_atomically;
pub use self::http::HttpTextEmbedder;
pub use self::image_provider::{
    embed_images, HttpImageEmbedder, ImageEmbedder, PrecomputedImageEmbedder, ThumbnailEmbedder,
    THUMBNAIL_DIM,
};
pub use self::mock::{mock_embed, MockEmbedder};

/// Output width of the reference text embedding model.
pub const TEXT_EMBEDDING_DIM: usize = 1536;
/// Output width of the reference image embedding model.
pub const IMAGE_EMBEDDING_DIM: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("input {index} rejected: {reason}")]
    InvalidInput { index: usize, reason: String },
    #[error("provider rejected input {index}: {source}")]
    Permanent {
        index: usize,
        #[source]
        source: ProviderError,
    },
    #[error("transient provider failure after {attempts} attempts: {last}")]
    Transient { attempts: u32, last: ProviderError },
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("dimension mismatch at input {index}: expected {expected}, got {got}")]
    DimMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("vector has no components")]
    Empty,
    #[error("vector component {0} is not finite")]
    NonFinite(usize),
}

/// A fixed-width embedding with the id of the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    model_id: String,
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(model_id: impl Into<String>, values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(i));
        }
        Ok(EmbeddingVector {
            model_id: model_id.into(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Something that turns a batch of texts into vectors.
pub trait TextEmbedder: Send + Sync {
    fn model_id(&self) -> &str;

    /// Longest accepted input, in Unicode scalar values.
    fn max_input_chars(&self) -> usize {
        usize::MAX
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub batch_size: usize,
    /// Batches issued concurrently by one `embed_texts` call.
    pub parallel_batches: usize,
    pub retry: RetryPolicy,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            batch_size: 64,
            parallel_batches: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Embed `texts`, one vector per input in input order.
///
/// Inputs are sent in batches of `cfg.batch_size`. Transient failures are
/// retried per batch. When a batch is rejected outright it is replayed one
/// item at a time so the error names the offending input.
pub fn embed_texts<S: AsRef<str> + Sync>(
    texts: &[S],
    provider: &dyn TextEmbedder,
    cfg: &BatchConfig,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let limit = provider.max_input_chars();
    for (index, t) in texts.iter().enumerate() {
        let t = t.as_ref();
        if t.trim().is_empty() {
            return Err(EmbedError::InvalidInput {
                index,
                reason: "empty text".into(),
            });
        }
        let n = t.chars().count();
        if n > limit {
            return Err(EmbedError::InvalidInput {
                index,
                reason: format!("{n} characters exceeds provider limit of {limit}"),
            });
        }
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }

    let batch_size = cfg.batch_size.max(1);
    let batches: Vec<(usize, Vec<&str>)> = texts
        .chunks(batch_size)
        .enumerate()
        .map(|(b, chunk)| (b * batch_size, chunk.iter().map(AsRef::as_ref).collect()))
        .collect();

    let run = || {
        batches
            .par_iter()
            .map(|(offset, batch)| embed_one_batch(*offset, batch, provider, &cfg.retry))
            .collect::<Result<Vec<_>, _>>()
    };
    let results = if cfg.parallel_batches > 1 && batches.len() > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel_batches)
            .build()
            .map(|pool| pool.install(run))
            .unwrap_or_else(|_| run())?
    } else {
        batches
            .iter()
            .map(|(offset, batch)| embed_one_batch(*offset, batch, provider, &cfg.retry))
            .collect::<Result<Vec<_>, _>>()?
    };

    let out: Vec<EmbeddingVector> = results.into_iter().flatten().collect();
    let dim = out[0].dim();
    if let Some((index, v)) = out.iter().enumerate().find(|(_, v)| v.dim() != dim) {
        return Err(EmbedError::DimMismatch {
            index,
            expected: dim,
            got: v.dim(),
        });
    }
    Ok(out)
}

fn embed_one_batch(
    offset: usize,
    batch: &[&str],
    provider: &dyn TextEmbedder,
    retry: &RetryPolicy,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    match with_retry(retry, || provider.embed_batch(batch)) {
        Err(exhausted) => Err(EmbedError::Transient {
            attempts: exhausted.attempts,
            last: exhausted.last,
        }),
        Ok(Err(source)) if batch.len() == 1 => Err(EmbedError::Permanent {
            index: offset,
            source,
        }),
        Ok(Err(source)) => {
            // locate the offending input
            for (i, text) in batch.iter().enumerate() {
                embed_one_batch(offset + i, std::slice::from_ref(text), provider, retry)?;
            }
            Err(EmbedError::Permanent {
                index: offset,
                source,
            })
        }
        Ok(Ok(vectors)) => {
            if vectors.len() != batch.len() {
                return Err(EmbedError::CountMismatch {
                    expected: batch.len(),
                    got: vectors.len(),
                });
            }
            vectors
                .into_iter()
                .map(|v| EmbeddingVector::new(provider.model_id(), v))
                .collect()
        }
    }
}
