//! TOML configuration with environment overrides, and construction of the
//! providers and engine it describes.
//!
//! ```toml
//! [store]
//! path = "scirag.db"
//!
//! [budget]
//! total_chars = 16384
//! response_reserve_chars = 3564
//!
//! [prompt]
//! instruction_template = "..."
//! mode = "raw"            # raw | summary | both
//!
//! [text_provider]
//! kind = "http"           # http | mock
//! base_url = "https://api.openai.com/v1"
//! model = "text-embedding-ada-002"
//! ```
//!
//! Environment variables win over the file: `SCIRAG_DB`, `SCIRAG_PROVIDER`
//! (sets both text and chat kinds), `SCIRAG_EMBED_URL`, `SCIRAG_EMBED_MODEL`,
//! `SCIRAG_CHAT_URL`, `SCIRAG_CHAT_MODEL`, `SCIRAG_IMAGE_URL`,
//! `SCIRAG_GROBID_URL`, `SCIRAG_ADDR`, `SCIRAG_STATIC_DIR`. API keys are
//! read from the variable named by `api_key_env` (default `OPENAI_API_KEY`).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chat::EngineConfig;
use crate::embed::{
    HttpImageEmbedder, HttpTextEmbedder, ImageEmbedder, MockEmbedder, PrecomputedImageEmbedder, TextEmbedder,
    ThumbnailEmbedder, TEXT_EMBEDDING_DIM,
};
use crate::eval::{ClassifyConfig, JudgeConfig};
use crate::ingest::{ChunkParams, GrobidClient};
use crate::llm::{ChatModel, FnChatModel, HttpChatModel, DEFAULT_TEMPERATURE};
use crate::prompt::{ContextMode, PromptBudget, DEFAULT_INSTRUCTION};
use crate::projection::TsneConfig;
use crate::store::{SqliteStore, StoreError};
use crate::summarize::{SummaryConfig, DEFAULT_SUMMARY_TEMPLATE};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Mock,
}

impl std::str::FromStr for ProviderKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "http" => Ok(ProviderKind::Http),
            "mock" => Ok(ProviderKind::Mock),
            other => Err(ConfigError::Invalid(format!("unknown provider kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageProviderKind {
    Http,
    Precomputed,
    Thumbnail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreSection {
    pub path: PathBuf,
}

impl Default for StoreSection {
    fn default() -> Self {
        StoreSection {
            path: PathBuf::from("scirag.db"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSection {
    pub instruction_template: String,
    pub mode: ContextMode,
    pub temperature: f64,
    pub history_turns: usize,
    pub k_cap: usize,
}

impl Default for PromptSection {
    fn default() -> Self {
        PromptSection {
            instruction_template: DEFAULT_INSTRUCTION.to_string(),
            mode: ContextMode::Raw,
            temperature: DEFAULT_TEMPERATURE,
            history_turns: 0,
            k_cap: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SummarySection {
    pub template: String,
    pub concurrency: usize,
}

impl Default for SummarySection {
    fn default() -> Self {
        SummarySection {
            template: DEFAULT_SUMMARY_TEMPLATE.to_string(),
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TextProviderSection {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub batch_size: usize,
    pub concurrency: usize,
    /// Vector width of the mock provider.
    pub mock_dim: usize,
}

impl Default for TextProviderSection {
    fn default() -> Self {
        TextProviderSection {
            kind: ProviderKind::Http,
            base_url: "https://api.openai.com/v1".into(),
            model: "text-embedding-ada-002".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            batch_size: 64,
            concurrency: 4,
            mock_dim: TEXT_EMBEDDING_DIM,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatProviderSection {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub concurrency: usize,
}

impl Default for ChatProviderSection {
    fn default() -> Self {
        ChatProviderSection {
            kind: ProviderKind::Http,
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageProviderSection {
    pub kind: ImageProviderKind,
    pub url: String,
    pub model: String,
    /// Directory of `<image file name>.f32` vectors for the precomputed kind.
    pub vector_dir: PathBuf,
}

impl Default for ImageProviderSection {
    fn default() -> Self {
        ImageProviderSection {
            kind: ImageProviderKind::Thumbnail,
            url: "http://localhost:8090/embed".into(),
            model: "clip-vit-b-32".into(),
            vector_dir: PathBuf::from("image_vectors"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSection {
    pub addr: String,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            addr: "127.0.0.1:8080".into(),
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub store: StoreSection,
    pub budget: PromptBudget,
    pub prompt: PromptSection,
    pub chunking: ChunkParams,
    pub summary: SummarySection,
    pub text_provider: TextProviderSection,
    pub chat_provider: ChatProviderSection,
    pub image_provider: ImageProviderSection,
    pub grobid_url: Option<String>,
    pub projection: TsneConfig,
    pub server: ServerSection,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: AppConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path` if given (defaults otherwise), then apply process
    /// environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => AppConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("SCIRAG_DB") {
            self.store.path = v.into();
        }
        if let Some(v) = get("SCIRAG_PROVIDER") {
            let kind: ProviderKind = v.parse()?;
            self.text_provider.kind = kind;
            self.chat_provider.kind = kind;
        }
        if let Some(v) = get("SCIRAG_EMBED_URL") {
            self.text_provider.base_url = v;
        }
        if let Some(v) = get("SCIRAG_EMBED_MODEL") {
            self.text_provider.model = v;
        }
        if let Some(v) = get("SCIRAG_CHAT_URL") {
            self.chat_provider.base_url = v;
        }
        if let Some(v) = get("SCIRAG_CHAT_MODEL") {
            self.chat_provider.model = v;
        }
        if let Some(v) = get("SCIRAG_IMAGE_URL") {
            self.image_provider.url = v;
            self.image_provider.kind = ImageProviderKind::Http;
        }
        if let Some(v) = get("SCIRAG_GROBID_URL") {
            self.grobid_url = Some(v);
        }
        if let Some(v) = get("SCIRAG_ADDR") {
            self.server.addr = v;
        }
        if let Some(v) = get("SCIRAG_STATIC_DIR") {
            self.server.static_dir = Some(v.into());
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.budget
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.chunking
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        crate::llm::check_temperature(self.prompt.temperature).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.summary.template.contains(crate::summarize::TEXT_PLACEHOLDER) {
            return Err(ConfigError::Invalid("summary template lacks {text}".into()));
        }
        if self.text_provider.mock_dim == 0 || self.text_provider.batch_size == 0 {
            return Err(ConfigError::Invalid("text provider sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        let mut e = EngineConfig {
            budget: self.budget,
            instruction: self.prompt.instruction_template.clone(),
            mode: self.prompt.mode,
            k_cap: self.prompt.k_cap,
            history_turns: self.prompt.history_turns,
            temperature: self.prompt.temperature,
            ..EngineConfig::default()
        };
        e.embed.batch_size = self.text_provider.batch_size;
        e
    }

    pub fn summary_config(&self) -> SummaryConfig {
        SummaryConfig {
            template: self.summary.template.clone(),
            temperature: self.prompt.temperature,
            concurrency: self.summary.concurrency,
            ..SummaryConfig::default()
        }
    }

    pub fn judge_config(&self) -> JudgeConfig {
        JudgeConfig {
            budget: self.budget,
            ..JudgeConfig::default()
        }
    }

    pub fn classify_config(&self) -> ClassifyConfig {
        ClassifyConfig::default()
    }

    pub fn open_store(&self) -> Result<Arc<SqliteStore>, ConfigError> {
        Ok(Arc::new(SqliteStore::open(&self.store.path)?))
    }

    pub fn text_embedder(&self) -> Arc<dyn TextEmbedder> {
        let t = &self.text_provider;
        match t.kind {
            ProviderKind::Mock => Arc::new(MockEmbedder::new(t.mock_dim)),
            ProviderKind::Http => Arc::new(
                HttpTextEmbedder::new(&t.base_url, &t.model, std::env::var(&t.api_key_env).ok())
                    .with_concurrency(t.concurrency),
            ),
        }
    }

    pub fn chat_model(&self) -> Arc<dyn ChatModel> {
        let c = &self.chat_provider;
        match c.kind {
            ProviderKind::Mock => Arc::new(FnChatModel::offline()),
            ProviderKind::Http => Arc::new(
                HttpChatModel::new(&c.base_url, &c.model, std::env::var(&c.api_key_env).ok())
                    .with_concurrency(c.concurrency),
            ),
        }
    }

    pub fn image_embedder(&self) -> Arc<dyn ImageEmbedder> {
        let i = &self.image_provider;
        match i.kind {
            ImageProviderKind::Thumbnail => Arc::new(ThumbnailEmbedder::new()),
            ImageProviderKind::Precomputed => Arc::new(PrecomputedImageEmbedder::new(&i.vector_dir, &i.model)),
            ImageProviderKind::Http => Arc::new(HttpImageEmbedder::new(&i.url, &i.model)),
        }
    }

    pub fn grobid(&self) -> Option<GrobidClient> {
        self.grobid_url.as_deref().map(GrobidClient::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn defaults_match_reference_budget() {
        let cfg = AppConfig::default();
        assert_eq!(cfg.budget.total_chars, 16_384);
        assert_eq!(cfg.budget.response_reserve_chars, 3_564);
        assert_eq!(cfg.chunking, ChunkParams::default());
        assert_eq!(cfg.projection.perplexity, 40.0);
        assert_eq!(cfg.projection.iterations, 10_000);
        assert_eq!(cfg.prompt.history_turns, 0);
        cfg.validate().unwrap();
    }

    #[test]
    fn toml_keys_are_read() {
        let cfg = AppConfig::from_toml(
            r#"
            [budget]
            total_chars = 8000
            response_reserve_chars = 2000

            [prompt]
            instruction_template = "Answer briefly."
            mode = "both"

            [text_provider]
            kind = "mock"
            mock_dim = 32
            "#,
        )
        .unwrap();
        assert_eq!(cfg.budget.available(), 6000);
        assert_eq!(cfg.prompt.mode, ContextMode::Both);
        assert_eq!(cfg.engine_config().instruction, "Answer briefly.");
        assert_eq!(cfg.text_embedder().model_id(), "mock-32");
        assert_eq!(cfg.budget.chars_per_token, 4);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(AppConfig::from_toml("[budget]\ntotal_chars = 100\nresponse_reserve_chars = 200\n").is_err());
        assert!(AppConfig::from_toml("[chunking]\nchunk_size = 10\noverlap = 10\n").is_err());
        assert!(AppConfig::from_toml("[prompt]\ntemperature = 5.0\n").is_err());
        assert!(AppConfig::from_toml("[summary]\ntemplate = \"no slot\"\n").is_err());
        assert!(AppConfig::from_toml("[prompt]\nmode = \"other\"\n").is_err());
    }

    #[test]
    fn environment_overrides_file() {
        let env: HashMap<&str, &str> = [
            ("SCIRAG_PROVIDER", "mock"),
            ("SCIRAG_DB", "/tmp/x.db"),
            ("SCIRAG_CHAT_MODEL", "m2"),
        ]
        .into_iter()
        .collect();
        let mut cfg = AppConfig::from_toml("[chat_provider]\nmodel = \"m1\"\n").unwrap();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.chat_provider.model, "m2");
        assert_eq!(cfg.text_provider.kind, ProviderKind::Mock);
        assert_eq!(cfg.store.path, PathBuf::from("/tmp/x.db"));
        assert_eq!(cfg.chat_model().model_id(), "offline");
        let mut bad = AppConfig::default();
        assert!(bad.apply_env(|k| (k == "SCIRAG_PROVIDER").then(|| "carrier pigeon".into())).is_err());
    }
}
