use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{EmbeddingVector, TextEmbedder};
use crate::provider::ProviderError;

/// Deterministic stand-in for a text embedding model.
///
/// Each text maps to a unit vector drawn from a generator seeded by a hash
/// of `(seed, text)`, so unrelated texts are nearly orthogonal. Specific
/// texts can be pinned to chosen vectors with [`MockEmbedder::plant`].
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
    model_id: String,
    planted: HashMap<String, Vec<f32>>,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        Self::with_seed(dim, 0)
    }

    pub fn with_seed(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "mock embedding dimension must be positive");
        MockEmbedder {
            dim,
            seed,
            model_id: format!("mock-{dim}"),
            planted: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Always return `values` (normalized) for exactly this text.
    pub fn plant(&mut self, text: &str, values: &[f32]) {
        assert_eq!(values.len(), self.dim);
        self.planted.insert(text.to_string(), normalize(values.iter().map(|&v| f64::from(v))));
    }

    /// Pin `text` to `anchor` plus `noise` times its own hashed direction.
    pub fn plant_near(&mut self, text: &str, anchor: &[f32], noise: f64) {
        let own = self.hashed(text);
        let mixed: Vec<f32> = anchor
            .iter()
            .zip(&own)
            .map(|(&a, &o)| (f64::from(a) + noise * f64::from(o)) as f32)
            .collect();
        self.plant(text, &mixed);
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        match self.planted.get(text) {
            Some(v) => v.clone(),
            None => self.hashed(text),
        }
    }

    fn hashed(&self, text: &str) -> Vec<f32> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        h.update(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        normalize((0..self.dim).map(|_| StandardNormal.sample(&mut rng)))
    }
}

fn normalize(values: impl Iterator<Item = f64>) -> Vec<f32> {
    let v: Vec<f64> = values.collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.iter().map(|&x| x as f32).collect();
    }
    v.iter().map(|x| (x / norm) as f32).collect()
}

impl TextEmbedder for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Hash-seeded unit vector for `text`; see [`MockEmbedder`].
pub fn mock_embed(text: &str, dim: usize) -> EmbeddingVector {
    let m = MockEmbedder::new(dim);
    EmbeddingVector::new(m.model_id.clone(), m.vector(text))
        .expect("mock vectors are finite and non-empty")
}
