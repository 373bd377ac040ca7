//! Prompt assembly under a character budget.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{ChunkId, ChunkKind};

/// Header placed before every extract in the rendered prompt.
pub const EXTRACT_HEADER: &str = "Text extract:\n";
pub const QUESTION_PREFIX: &str = "Question: ";
const SECTION_BREAK: &str = "\n\n";

pub const DEFAULT_INSTRUCTION: &str = "You are a research assistant. Answer the question using the text \
extracts below, which were taken from scientific publications. Each extract begins with the name of \
its source document; cite sources by that name. If the extracts do not contain the answer, say so.";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("instruction and query need {needed} characters but only {available} are available")]
    Budget { needed: usize, available: usize },
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptBudget {
    pub total_chars: usize,
    pub response_reserve_chars: usize,
    pub chars_per_token: usize,
}

impl Default for PromptBudget {
    fn default() -> Self {
        PromptBudget {
            total_chars: 16_384,
            response_reserve_chars: 3_564,
            chars_per_token: 4,
        }
    }
}

impl PromptBudget {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.chars_per_token == 0 {
            return Err(PromptError::InvalidBudget("chars_per_token must be at least 1".into()));
        }
        if self.response_reserve_chars >= self.total_chars {
            return Err(PromptError::InvalidBudget(format!(
                "reserve {} leaves nothing of {}",
                self.response_reserve_chars, self.total_chars
            )));
        }
        Ok(())
    }

    /// Characters left for the prompt itself.
    pub fn available(&self) -> usize {
        self.total_chars.saturating_sub(self.response_reserve_chars)
    }

    pub fn max_response_tokens(&self) -> usize {
        self.response_reserve_chars / self.chars_per_token.max(1)
    }
}

/// Which chunk corpus feeds the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    #[default]
    Raw,
    Summary,
    Both,
}

impl ContextMode {
    pub fn kinds(self) -> &'static [ChunkKind] {
        match self {
            ContextMode::Raw => &[ChunkKind::Raw],
            ContextMode::Summary => &[ChunkKind::Summary],
            ContextMode::Both => &[ChunkKind::Raw, ChunkKind::Summary],
        }
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextMode::Raw => "raw",
            ContextMode::Summary => "summary",
            ContextMode::Both => "both",
        })
    }
}

impl FromStr for ContextMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(ContextMode::Raw),
            "summary" => Ok(ContextMode::Summary),
            "both" => Ok(ContextMode::Both),
            other => Err(format!("unknown mode {other:?}; expected raw, summary or both")),
        }
    }
}

/// A retrieved chunk offered to the prompt. Higher scores are better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCandidate {
    pub chunk_id: ChunkId,
    pub kind: ChunkKind,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub instruction: String,
    pub included_chunks: Vec<ChunkId>,
    pub included_scores: Vec<f64>,
    pub query: String,
    pub rendered: String,
    pub char_count: usize,
    pub est_tokens: usize,
}

pub fn estimate_tokens(text: &str, chars_per_token: usize) -> usize {
    text.chars().count().div_ceil(chars_per_token.max(1))
}

/// Merge two score-ordered lists into one. Ties keep `first` ahead.
pub fn merge_by_score(first: Vec<PromptCandidate>, second: Vec<PromptCandidate>) -> Vec<PromptCandidate> {
    let mut out = Vec::with_capacity(first.len() + second.len());
    let mut a = first.into_iter().peekable();
    let mut b = second.into_iter().peekable();
    loop {
        let take_a = match (a.peek(), b.peek()) {
            (Some(x), Some(y)) => x.score >= y.score,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        out.extend(if take_a { a.next() } else { b.next() });
    }
    out
}

fn extract_cost(text: &str) -> usize {
    EXTRACT_HEADER.chars().count() + text.chars().count() + SECTION_BREAK.chars().count()
}

/// Fill the prompt greedily in descending score order. A candidate that
/// would overflow is skipped and later, smaller ones are still tried.
/// Byte-identical texts are included once.
pub fn assemble_prompt(
    instruction: &str,
    query: &str,
    candidates: &[PromptCandidate],
    budget: &PromptBudget,
) -> Result<AssembledPrompt, PromptError> {
    budget.validate()?;
    let query = query.trim();
    if query.is_empty() {
        return Err(PromptError::EmptyQuery);
    }
    let available = budget.available();
    let base = instruction.chars().count()
        + SECTION_BREAK.chars().count()
        + QUESTION_PREFIX.chars().count()
        + query.chars().count();
    if base > available {
        return Err(PromptError::Budget {
            needed: base,
            available,
        });
    }

    let mut order: Vec<&PromptCandidate> = candidates.iter().collect();
    order.sort_by(|x, y| y.score.total_cmp(&x.score));

    let mut used = base;
    let mut seen: HashSet<&str> = HashSet::new();
    let mut picked: Vec<&PromptCandidate> = Vec::new();
    for c in order {
        if seen.contains(c.text.as_str()) {
            continue;
        }
        let cost = extract_cost(&c.text);
        if used + cost <= available {
            used += cost;
            seen.insert(&c.text);
            picked.push(c);
        }
    }

    let mut rendered = String::with_capacity(used * 2);
    rendered.push_str(instruction);
    rendered.push_str(SECTION_BREAK);
    for c in &picked {
        rendered.push_str(EXTRACT_HEADER);
        rendered.push_str(&c.text);
        rendered.push_str(SECTION_BREAK);
    }
    rendered.push_str(QUESTION_PREFIX);
    rendered.push_str(query);
    let char_count = rendered.chars().count();
    debug_assert_eq!(char_count, used);

    Ok(AssembledPrompt {
        instruction: instruction.to_string(),
        included_chunks: picked.iter().map(|c| c.chunk_id).collect(),
        included_scores: picked.iter().map(|c| c.score).collect(),
        query: query.to_string(),
        est_tokens: estimate_tokens(&rendered, budget.chars_per_token),
        rendered,
        char_count,
    })
}
