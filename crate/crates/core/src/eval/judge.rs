use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ComparisonRecord, EvalError, JudgeKind};
use crate::ingest::{DocId, DocumentRecord};
use crate::llm::{complete_with_retry, ChatModel, CompletionRequest, FnChatModel};
use crate::prompt::PromptBudget;
use crate::provider::RetryPolicy;

pub const DEFAULT_JUDGE_TEMPLATE: &str = "Two scientific publications are given below. Which one has the \
greater potential for scientific impact? Reply with a single letter: A or B.\n\n\
Publication A:\n{a}\n\nPublication B:\n{b}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub template: String,
    pub budget: PromptBudget,
    pub temperature: f64,
    pub retry: RetryPolicy,
    pub concurrency: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            template: DEFAULT_JUDGE_TEMPLATE.to_string(),
            budget: PromptBudget::default(),
            temperature: 0.0,
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }
}

impl JudgeConfig {
    /// Characters available to each side once the template is in place.
    pub fn side_chars(&self) -> usize {
        let overhead = self.template.replace("{a}", "").replace("{b}", "").chars().count();
        self.budget.available().saturating_sub(overhead) / 2
    }
}

/// Title, abstract and the leading part of the main text, cut to
/// `max_chars` scalars.
pub fn judge_text(doc: &DocumentRecord, max_chars: usize) -> String {
    let mut s = doc.title.trim().to_string();
    if !doc.abstract_text.trim().is_empty() {
        s.push_str("\n\n");
        s.push_str(doc.abstract_text.trim());
    }
    if !doc.body_text.trim().is_empty() {
        s.push_str("\n\n");
        s.push_str(doc.body_text.trim());
    }
    s.chars().take(max_chars).collect()
}

/// Read a single-letter choice out of a reply. Replies naming both or
/// neither letter are rejected.
pub fn parse_choice(reply: &str) -> Option<Side> {
    let mut found = None;
    for token in reply.split(|c: char| !c.is_alphanumeric()) {
        let side = match token {
            "A" => Side::A,
            "B" => Side::B,
            _ => continue,
        };
        match found {
            None => found = Some(side),
            Some(prev) if prev == side => {}
            Some(_) => return None,
        }
    }
    found
}

fn render(template: &str, a: &str, b: &str) -> String {
    template.replace("{a}", a).replace("{b}", b)
}

/// Ask which text is stronger. An unparseable reply is retried once.
pub fn judge_texts(a: &str, b: &str, llm: &dyn ChatModel, cfg: &JudgeConfig) -> Result<Side, EvalError> {
    let req = CompletionRequest::single(render(&cfg.template, a, b), cfg.temperature);
    let mut last = String::new();
    for _ in 0..2 {
        last = complete_with_retry(llm, &req, &cfg.retry)?;
        if let Some(side) = parse_choice(&last) {
            return Ok(side);
        }
    }
    Err(EvalError::Unparseable { reply: last })
}

pub fn judge_pair(
    a: &DocumentRecord,
    b: &DocumentRecord,
    llm: &dyn ChatModel,
    kind: JudgeKind,
    cfg: &JudgeConfig,
) -> Result<ComparisonRecord, EvalError> {
    let n = cfg.side_chars();
    let side = judge_texts(&judge_text(a, n), &judge_text(b, n), llm, cfg)?;
    let winner = match side {
        Side::A => a.doc_id.clone(),
        Side::B => b.doc_id.clone(),
    };
    ComparisonRecord::new(a.doc_id.clone(), b.doc_id.clone(), winner, kind)
}

/// Judge every pair, in parallel up to `cfg.concurrency`. Failed pairs are
/// returned separately and left out of the records.
pub fn judge_all(
    pairs: &[(DocId, DocId)],
    docs: &HashMap<DocId, DocumentRecord>,
    llm: &dyn ChatModel,
    kind: JudgeKind,
    cfg: &JudgeConfig,
) -> Result<(Vec<ComparisonRecord>, Vec<((DocId, DocId), String)>), EvalError> {
    for (a, b) in pairs {
        for id in [a, b] {
            if !docs.contains_key(id) {
                return Err(EvalError::UnknownDocument(id.clone()));
            }
        }
    }
    let run = || {
        pairs
            .par_iter()
            .map(|(a, b)| judge_pair(&docs[a], &docs[b], llm, kind, cfg))
            .collect::<Vec<_>>()
    };
    let outcomes = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (pair, outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => {
                tracing::warn!(a = %pair.0, b = %pair.1, error = %e, "judgement skipped");
                failed.push((pair.clone(), e.to_string()));
            }
        }
    }
    Ok((records, failed))
}

/// Records decided by a known score, higher winning. Ties go to the
/// lexically larger id so the result stays deterministic.
pub fn oracle_records(pairs: &[(DocId, DocId)], score: &HashMap<DocId, f64>) -> Result<Vec<ComparisonRecord>, EvalError> {
    pairs
        .iter()
        .map(|(a, b)| {
            let sa = *score.get(a).ok_or_else(|| EvalError::UnknownDocument(a.clone()))?;
            let sb = *score.get(b).ok_or_else(|| EvalError::UnknownDocument(b.clone()))?;
            let winner = match sa.total_cmp(&sb) {
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Equal => a.max(b),
            };
            ComparisonRecord::new(a.clone(), b.clone(), winner.clone(), JudgeKind::Oracle)
        })
        .collect()
}

/// Offline judge preferring the longer publication text. Symmetric in
/// presentation order; exact ties go to A.
pub fn stub_longer_judge() -> FnChatModel {
    FnChatModel::new("stub-longer", |req| {
        let prompt = req.last_user();
        let a_start = prompt.find("Publication A:\n").map(|i| i + "Publication A:\n".len());
        let b_marker = prompt.rfind("\n\nPublication B:\n");
        match (a_start, b_marker) {
            (Some(a0), Some(b0)) if a0 <= b0 => {
                let a = prompt[a0..b0].chars().count();
                let b = prompt[b0 + "\n\nPublication B:\n".len()..].chars().count();
                Ok(if b > a { "B" } else { "A" }.to_string())
            }
            _ => Ok("unsure".to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Author;
    use crate::provider::ProviderError;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn doc(id: &str, body: &str) -> DocumentRecord {
        DocumentRecord {
            doc_id: DocId::from(id),
            title: format!("T{id}"),
            authors: vec![Author::new("X", None)],
            display_name: String::new(),
            abstract_text: "abstract".into(),
            body_text: body.into(),
            word_count: 0,
            source_path: None,
        }
    }

    fn cfg() -> JudgeConfig {
        JudgeConfig {
            retry: RetryPolicy::immediate(1),
            ..JudgeConfig::default()
        }
    }

    #[test]
    fn choice_parsing() {
        assert_eq!(parse_choice("A"), Some(Side::A));
        assert_eq!(parse_choice(" B."), Some(Side::B));
        assert_eq!(parse_choice("Publication B has more impact"), Some(Side::B));
        assert_eq!(parse_choice("A or B"), None);
        assert_eq!(parse_choice("neither"), None);
        assert_eq!(parse_choice("a"), None);
    }

    #[test]
    fn longer_text_wins_in_either_order() {
        let short = doc("s", "tiny");
        let long = doc("l", &"long body ".repeat(50));
        let llm = stub_longer_judge();
        let r1 = judge_pair(&short, &long, &llm, JudgeKind::Stub, &cfg()).unwrap();
        let r2 = judge_pair(&long, &short, &llm, JudgeKind::Stub, &cfg()).unwrap();
        assert_eq!(r1.winner, long.doc_id);
        assert_eq!(r2.winner, long.doc_id);
        assert_eq!(r1.loser(), &short.doc_id);
    }

    #[test]
    fn sides_are_trimmed_to_half_the_budget() {
        let cfg = cfg();
        let n = cfg.side_chars();
        let big = doc("b", &"x".repeat(50_000));
        assert_eq!(judge_text(&big, n).chars().count(), n);
        let prompt = render(&cfg.template, &judge_text(&big, n), &judge_text(&big, n));
        assert!(prompt.chars().count() <= cfg.budget.available());
    }

    #[test]
    fn unparseable_reply_is_retried_once() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let llm = FnChatModel::new("shy", move |_| {
            Ok(if c.fetch_add(1, Ordering::SeqCst) == 0 { "hmm" } else { "B" }.to_string())
        });
        assert_eq!(judge_texts("a", "b", &llm, &cfg()).unwrap(), Side::B);
        let never = FnChatModel::constant("no idea");
        assert!(matches!(judge_texts("a", "b", &never, &cfg()), Err(EvalError::Unparseable { .. })));
    }

    #[test]
    fn failed_pairs_are_skipped() {
        let docs: HashMap<DocId, DocumentRecord> =
            ["a", "b", "c"].iter().map(|i| (DocId::from(*i), doc(i, i))).collect();
        let llm = FnChatModel::new("picky", |req| {
            if req.last_user().contains("Tc") {
                Err(ProviderError::Status { status: 400, body: String::new() })
            } else {
                Ok("A".into())
            }
        });
        let pairs = vec![
            (DocId::from("a"), DocId::from("b")),
            (DocId::from("a"), DocId::from("c")),
        ];
        let (records, failed) = judge_all(&pairs, &docs, &llm, JudgeKind::Llm, &cfg()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(failed.len(), 1);
        assert!(judge_all(&[(DocId::from("a"), DocId::from("z"))], &docs, &llm, JudgeKind::Llm, &cfg()).is_err());
    }

    #[test]
    fn oracle_prefers_higher_score() {
        let score: HashMap<DocId, f64> = [("a", 1.0), ("b", 2.0)].iter().map(|(k, v)| (DocId::from(*k), *v)).collect();
        let r = oracle_records(&[(DocId::from("a"), DocId::from("b"))], &score).unwrap();
        assert_eq!(r[0].winner, DocId::from("b"));
        assert_eq!(r[0].judge, JudgeKind::Oracle);
    }
}
