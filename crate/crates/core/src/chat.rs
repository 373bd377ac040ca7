//! Query answering: embed, retrieve, assemble, complete.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embed::{embed_texts, BatchConfig, EmbedError, TextEmbedder};
use crate::ingest::{ChunkId, ChunkKind};
use crate::llm::{
    check_temperature, complete_with_retry, stream_with_retry, ChatModel, CompletionRequest, LlmError,
    DEFAULT_TEMPERATURE,
};
use crate::prompt::{
    assemble_prompt, merge_by_score, AssembledPrompt, ContextMode, PromptBudget, PromptCandidate, PromptError,
    DEFAULT_INSTRUCTION,
};
use crate::provider::RetryPolicy;
use crate::retrieval::{top_k, RetrievalError, RetrievalHit, SimilarityMeasure};
use crate::store::{ChunkWithSource, CorpusStore, EmbeddingMatrix, StoreError};

pub const EMPTY_CORPUS_WARNING: &str = "corpus is empty; answered without context";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub budget: PromptBudget,
    pub instruction: String,
    pub mode: ContextMode,
    /// Upper bound on retrieved chunks per corpus before prompt filling.
    pub k_cap: usize,
    /// Prior turns replayed into the instruction region.
    pub history_turns: usize,
    pub temperature: f64,
    pub retry: RetryPolicy,
    pub embed: BatchConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            budget: PromptBudget::default(),
            instruction: DEFAULT_INSTRUCTION.to_string(),
            mode: ContextMode::Raw,
            k_cap: 100,
            history_turns: 0,
            temperature: DEFAULT_TEMPERATURE,
            retry: RetryPolicy::default(),
            embed: BatchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryOptions {
    pub k_cap: Option<usize>,
    pub mode: Option<ContextMode>,
    pub temperature: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub chunk_id: ChunkId,
    pub kind: ChunkKind,
    pub score: f64,
}

/// Wall time per stage, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub embedding_ms: f64,
    pub retrieval_ms: f64,
    pub assembly_ms: f64,
    pub completion_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatAnswer {
    pub response_text: String,
    /// Chunks placed in the prompt, in prompt order.
    pub provenance: Vec<ProvenanceEntry>,
    pub prompt_char_count: usize,
    pub est_tokens: usize,
    pub latency: LatencyBreakdown,
    pub model_id: String,
    pub temperature: f64,
    pub mode: ContextMode,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub response_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    turns: Vec<Turn>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            turns: Vec::new(),
        }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn push(&mut self, query: &str, response_text: &str) {
        self.turns.push(Turn {
            query: query.to_string(),
            response_text: response_text.to_string(),
        });
    }
}

/// Instruction with the most recent `max_turns` turns appended. Older turns
/// are dropped first when the result would not leave room for the query.
fn instruction_with_history(
    instruction: &str,
    turns: &[Turn],
    max_turns: usize,
    room: usize,
) -> String {
    let recent = &turns[turns.len().saturating_sub(max_turns)..];
    for start in 0..=recent.len() {
        let kept = &recent[start..];
        if kept.is_empty() {
            break;
        }
        let mut s = format!("{instruction}\n\nConversation so far:");
        for t in kept {
            s.push_str(&format!("\nUser: {}\nAssistant: {}", t.query, t.response_text));
        }
        if s.chars().count() <= room {
            return s;
        }
    }
    instruction.to_string()
}

/// A retrieved chunk with its text, for search endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSearchHit {
    #[serde(flatten)]
    pub hit: RetrievalHit,
    pub chunk: ChunkWithSource,
}

/// The answering engine. Matrices are published as immutable snapshots so
/// concurrent queries never block on ingestion.
pub struct ChatEngine {
    store: Arc<dyn CorpusStore>,
    embedder: Arc<dyn TextEmbedder>,
    llm: Arc<dyn ChatModel>,
    config: EngineConfig,
    matrices: RwLock<HashMap<ChunkKind, Arc<EmbeddingMatrix>>>,
    sessions: Mutex<HashMap<String, SessionState>>,
}

impl ChatEngine {
    pub fn new(
        store: Arc<dyn CorpusStore>,
        embedder: Arc<dyn TextEmbedder>,
        llm: Arc<dyn ChatModel>,
        config: EngineConfig,
    ) -> Result<Self, ChatError> {
        check_temperature(config.temperature)?;
        config.budget.validate()?;
        let engine = ChatEngine {
            store,
            embedder,
            llm,
            config,
            matrices: RwLock::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        };
        engine.refresh()?;
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<dyn CorpusStore> {
        &self.store
    }

    pub fn embedder(&self) -> &Arc<dyn TextEmbedder> {
        &self.embedder
    }

    pub fn llm(&self) -> &Arc<dyn ChatModel> {
        &self.llm
    }

    /// Reload matrices from the store and publish them atomically.
    pub fn refresh(&self) -> Result<(), ChatError> {
        let model = self.embedder.model_id();
        let mut fresh = HashMap::new();
        for kind in [ChunkKind::Raw, ChunkKind::Summary] {
            fresh.insert(kind, Arc::new(self.store.embedding_matrix(kind, model)?));
        }
        *self.matrices.write().unwrap() = fresh;
        Ok(())
    }

    pub fn matrix(&self, kind: ChunkKind) -> Arc<EmbeddingMatrix> {
        self.matrices
            .read()
            .unwrap()
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| Arc::new(EmbeddingMatrix::empty(self.embedder.model_id(), 0)))
    }

    pub fn embed_query(&self, query: &str) -> Result<Vec<f32>, ChatError> {
        let mut v = embed_texts(&[query], self.embedder.as_ref(), &self.config.embed)?;
        Ok(v.remove(0).into_values())
    }

    /// Plain similarity search over one corpus.
    pub fn search_text(
        &self,
        query: &str,
        k: usize,
        measure: SimilarityMeasure,
        kind: ChunkKind,
    ) -> Result<Vec<TextSearchHit>, ChatError> {
        if query.trim().is_empty() {
            return Err(ChatError::EmptyQuery);
        }
        let q = self.embed_query(query)?;
        let hits = top_k(&q, &self.matrix(kind), k, measure, None)?;
        let ids: Vec<ChunkId> = hits.iter().map(|h| ChunkId(h.row_id)).collect();
        let chunks = self.store.fetch_chunks(&ids)?;
        Ok(hits
            .into_iter()
            .zip(chunks)
            .map(|(hit, chunk)| TextSearchHit { hit, chunk })
            .collect())
    }

    fn prepare(
        &self,
        query: &str,
        opts: &QueryOptions,
        history: &[Turn],
    ) -> Result<(AssembledPrompt, Vec<ProvenanceEntry>, LatencyBreakdown, Vec<String>, f64, ContextMode), ChatError>
    {
        let query = query.trim();
        if query.is_empty() {
            return Err(ChatError::EmptyQuery);
        }
        let temperature = check_temperature(opts.temperature.unwrap_or(self.config.temperature))?;
        let mode = opts.mode.unwrap_or(self.config.mode);
        let k_cap = opts.k_cap.unwrap_or(self.config.k_cap);
        let mut latency = LatencyBreakdown::default();
        let mut warnings = Vec::new();

        let t = Instant::now();
        let matrices: Vec<(ChunkKind, Arc<EmbeddingMatrix>)> =
            mode.kinds().iter().map(|&k| (k, self.matrix(k))).collect();
        let empty = matrices.iter().all(|(_, m)| m.is_empty());
        let q = if empty { Vec::new() } else { self.embed_query(query)? };
        latency.embedding_ms = ms(t);

        let t = Instant::now();
        let mut lists: Vec<Vec<PromptCandidate>> = Vec::new();
        if empty {
            warnings.push(EMPTY_CORPUS_WARNING.to_string());
        } else {
            for (kind, m) in &matrices {
                let hits = top_k(&q, m, k_cap, SimilarityMeasure::Cosine, None)?;
                let ids: Vec<ChunkId> = hits.iter().map(|h| ChunkId(h.row_id)).collect();
                let chunks = self.store.fetch_chunks(&ids)?;
                lists.push(
                    hits.iter()
                        .zip(chunks)
                        .map(|(h, c)| PromptCandidate {
                            chunk_id: c.chunk.chunk_id,
                            kind: *kind,
                            score: h.score,
                            text: c.chunk.augmented_text,
                        })
                        .collect(),
                );
            }
        }
        let candidates = lists.into_iter().fold(Vec::new(), merge_by_score);
        latency.retrieval_ms = ms(t);

        let t = Instant::now();
        let room = self
            .config
            .budget
            .available()
            .saturating_sub(query.chars().count() + 12);
        let instruction = if self.config.history_turns > 0 {
            instruction_with_history(&self.config.instruction, history, self.config.history_turns, room)
        } else {
            self.config.instruction.clone()
        };
        let prompt = assemble_prompt(&instruction, query, &candidates, &self.config.budget)?;
        let kinds: HashMap<ChunkId, ChunkKind> = candidates.iter().map(|c| (c.chunk_id, c.kind)).collect();
        let provenance = prompt
            .included_chunks
            .iter()
            .zip(&prompt.included_scores)
            .map(|(id, &score)| ProvenanceEntry {
                chunk_id: *id,
                kind: kinds[id],
                score,
            })
            .collect();
        latency.assembly_ms = ms(t);
        Ok((prompt, provenance, latency, warnings, temperature, mode))
    }

    fn request(&self, prompt: &AssembledPrompt, temperature: f64) -> CompletionRequest {
        let mut req = CompletionRequest::single(prompt.rendered.clone(), temperature);
        req.max_tokens = Some(self.config.budget.max_response_tokens() as u32);
        req
    }

    /// Answer one query. `history` is only read when history is enabled.
    pub fn answer(
        &self,
        query: &str,
        opts: &QueryOptions,
        history: &[Turn],
    ) -> Result<ChatAnswer, ChatError> {
        let (prompt, provenance, mut latency, warnings, temperature, mode) =
            self.prepare(query, opts, history)?;
        let t = Instant::now();
        let response_text = complete_with_retry(
            self.llm.as_ref(),
            &self.request(&prompt, temperature),
            &self.config.retry,
        )?;
        latency.completion_ms = ms(t);
        Ok(ChatAnswer {
            response_text,
            provenance,
            prompt_char_count: prompt.char_count,
            est_tokens: prompt.est_tokens,
            latency,
            model_id: self.llm.model_id().to_string(),
            temperature,
            mode,
            warnings,
        })
    }

    /// Like [`ChatEngine::answer`] but reports response text as it arrives.
    pub fn answer_streaming(
        &self,
        query: &str,
        opts: &QueryOptions,
        history: &[Turn],
        on_delta: &mut dyn FnMut(&str),
    ) -> Result<ChatAnswer, ChatError> {
        let (prompt, provenance, mut latency, warnings, temperature, mode) =
            self.prepare(query, opts, history)?;
        let t = Instant::now();
        let response_text = stream_with_retry(
            self.llm.as_ref(),
            &self.request(&prompt, temperature),
            &self.config.retry,
            on_delta,
        )?;
        latency.completion_ms = ms(t);
        Ok(ChatAnswer {
            response_text,
            provenance,
            prompt_char_count: prompt.char_count,
            est_tokens: prompt.est_tokens,
            latency,
            model_id: self.llm.model_id().to_string(),
            temperature,
            mode,
            warnings,
        })
    }

    /// Answer within a server-held session, recording the turn on success.
    pub fn answer_in_session(
        &self,
        session_id: &str,
        query: &str,
        opts: &QueryOptions,
    ) -> Result<ChatAnswer, ChatError> {
        let history = self.session(session_id).turns;
        let answer = self.answer(query, opts, &history)?;
        self.record_turn(session_id, query, &answer.response_text);
        Ok(answer)
    }

    /// Append a completed turn to a session, creating it if needed.
    pub fn record_turn(&self, session_id: &str, query: &str, response_text: &str) {
        self.sessions
            .lock()
            .unwrap()
            .entry(session_id.to_string())
            .or_insert_with(|| SessionState::new(session_id))
            .push(query.trim(), response_text);
    }

    pub fn session(&self, session_id: &str) -> SessionState {
        self.sessions
            .lock()
            .unwrap()
            .get(session_id)
            .cloned()
            .unwrap_or_else(|| SessionState::new(session_id))
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
