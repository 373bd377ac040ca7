use std::path::{Path, PathBuf};
use std::time::Duration;

use ::image::imageops::FilterType;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use super::{EmbedError, EmbeddingVector};
use crate::provider::{with_retry, ConcurrencyLimit, ProviderError, RetryPolicy};

/// Turns one encoded image into a vector. Outputs are not normalized.
pub trait ImageEmbedder: Send + Sync {
    fn model_id(&self) -> &str;

    /// `name` is the image's file name; providers backed by precomputed
    /// vectors key on it, others ignore it.
    fn embed_image(&self, name: &str, bytes: &[u8]) -> Result<Vec<f32>, ProviderError>;
}

/// Embed each image independently. A failure affects only its own slot.
pub fn embed_images(
    images: &[(String, Vec<u8>)],
    provider: &dyn ImageEmbedder,
    retry: &RetryPolicy,
) -> Vec<Result<EmbeddingVector, EmbedError>> {
    images
        .iter()
        .enumerate()
        .map(|(index, (name, bytes))| {
            match with_retry(retry, || provider.embed_image(name, bytes)) {
                Err(e) => Err(EmbedError::Transient {
                    attempts: e.attempts,
                    last: e.last,
                }),
                Ok(Err(source)) => Err(EmbedError::Permanent { index, source }),
                Ok(Ok(v)) => EmbeddingVector::new(provider.model_id(), v),
            }
        })
        .collect()
}

pub const THUMBNAIL_DIM: usize = 512;
const THUMB_SIDE: u32 = 16;

/// Offline image embedder: a 16x16 luminance thumbnail followed by a fixed
/// random projection of it, 512 values in total.
///
/// Visually similar images land close together and identical bytes give
/// identical vectors, which is all the search path needs from a model.
pub struct ThumbnailEmbedder {
    projection: Vec<f32>,
}

impl Default for ThumbnailEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl ThumbnailEmbedder {
    pub fn new() -> Self {
        let n = (THUMB_SIDE * THUMB_SIDE) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0x1A6E_5EED);
        let scale = 1.0 / (n as f64).sqrt();
        let projection = (0..n * n)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (g * scale) as f32
            })
            .collect();
        ThumbnailEmbedder { projection }
    }
}

impl ImageEmbedder for ThumbnailEmbedder {
    fn model_id(&self) -> &str {
        "thumbnail-512"
    }

    fn embed_image(&self, _name: &str, bytes: &[u8]) -> Result<Vec<f32>, ProviderError> {
        let img = ::image::load_from_memory(bytes)
            .map_err(|e| ProviderError::InvalidInput(format!("undecodable image: {e}")))?;
        let thumb = img
            .resize_exact(THUMB_SIDE, THUMB_SIDE, FilterType::Triangle)
            .to_luma8();
        let luma: Vec<f32> = thumb.pixels().map(|p| f32::from(p.0[0]) / 255.0).collect();
        let n = luma.len();
        let mut out = Vec::with_capacity(THUMBNAIL_DIM);
        out.extend_from_slice(&luma);
        for row in self.projection.chunks(n) {
            let s: f64 = row
                .iter()
                .zip(&luma)
                .map(|(&w, &x)| f64::from(w) * f64::from(x))
                .sum();
            out.push(s as f32);
        }
        Ok(out)
    }
}

/// Reads `<dir>/<image file name>.f32`, raw little-endian float32 values
/// produced offline by a real image model.
pub struct PrecomputedImageEmbedder {
    dir: PathBuf,
    model_id: String,
}

impl PrecomputedImageEmbedder {
    pub fn new(dir: impl Into<PathBuf>, model_id: &str) -> Self {
        PrecomputedImageEmbedder {
            dir: dir.into(),
            model_id: model_id.to_string(),
        }
    }

    pub fn vector_path(&self, name: &str) -> PathBuf {
        let file = Path::new(name)
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| name.to_string());
        self.dir.join(format!("{file}.f32"))
    }
}

impl ImageEmbedder for PrecomputedImageEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_image(&self, name: &str, _bytes: &[u8]) -> Result<Vec<f32>, ProviderError> {
        let path = self.vector_path(name);
        let raw = std::fs::read(&path).map_err(|e| {
            ProviderError::InvalidInput(format!("no precomputed vector {}: {e}", path.display()))
        })?;
        if raw.is_empty() || raw.len() % 4 != 0 {
            return Err(ProviderError::Decode(format!(
                "{} has {} bytes, not a float32 array",
                path.display(),
                raw.len()
            )));
        }
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

/// Posts raw image bytes and expects either `{"embedding": [...]}` or a bare
/// JSON array back.
pub struct HttpImageEmbedder {
    url: String,
    model_id: String,
    agent: ureq::Agent,
    limit: ConcurrencyLimit,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ImageResponse {
    Wrapped { embedding: Vec<f32> },
    Bare(Vec<f32>),
}

impl HttpImageEmbedder {
    pub fn new(url: &str, model_id: &str) -> Self {
        HttpImageEmbedder {
            url: url.to_string(),
            model_id: model_id.to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(60))
                .build(),
            limit: ConcurrencyLimit::new(4),
        }
    }
}

impl ImageEmbedder for HttpImageEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_image(&self, _name: &str, bytes: &[u8]) -> Result<Vec<f32>, ProviderError> {
        let _permit = self.limit.acquire();
        let resp = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/octet-stream")
            .send_bytes(bytes)
            .map_err(ProviderError::from_ureq)?;
        match resp
            .into_json::<ImageResponse>()
            .map_err(|e| ProviderError::Decode(e.to_string()))?
        {
            ImageResponse::Wrapped { embedding } | ImageResponse::Bare(embedding) => Ok(embedding),
        }
    }
}
