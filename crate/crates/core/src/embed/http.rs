use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::TextEmbedder;
use crate::provider::{ConcurrencyLimit, ProviderError};

/// Client for an embeddings endpoint speaking the common
/// `{model, input: [..]} -> {data: [{index, embedding}]}` JSON shape.
pub struct HttpTextEmbedder {
    url: String,
    model: String,
    api_key: Option<String>,
    max_input_chars: usize,
    agent: ureq::Agent,
    limit: ConcurrencyLimit,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl HttpTextEmbedder {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`.
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Self {
        HttpTextEmbedder {
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            // 8191 tokens at roughly four characters each
            max_input_chars: 32_000,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(60))
                .build(),
            limit: ConcurrencyLimit::new(4),
        }
    }

    pub fn with_max_input_chars(mut self, n: usize) -> Self {
        self.max_input_chars = n;
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.limit = ConcurrencyLimit::new(n);
        self
    }
}

impl TextEmbedder for HttpTextEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn max_input_chars(&self) -> usize {
        self.max_input_chars
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let _permit = self.limit.acquire();
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(json!({ "model": self.model, "input": texts }))
            .map_err(ProviderError::from_ureq)?;
        let mut parsed: EmbeddingsResponse = resp
            .into_json()
            .map_err(|e| ProviderError::Decode(e.to_string()))?;
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}
