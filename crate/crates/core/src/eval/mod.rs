//! Evaluation harnesses: pairwise impact ranking and topic classification.

mod classify;
mod cycles;
mod judge;
mod pairs;
mod sort;

use serde::{Deserialize, Serialize};

use crate::ingest::DocId;
use crate::llm::LlmError;

pub use classify::{
    classify_document, classify_documents, confusion_metrics, load_categories, load_truth, parse_category,
    pearson_r_squared, CategoryMetrics, ClassifyConfig, ConfusionMatrix, DEFAULT_CLASSIFY_TEMPLATE,
};
pub use cycles::find_cycles;
pub use judge::{
    judge_all, judge_pair, judge_text, judge_texts, oracle_records, parse_choice, stub_longer_judge, JudgeConfig,
    Side, DEFAULT_JUDGE_TEMPLATE,
};
pub use pairs::{max_pairs, min_pairs, sample_pairs};
pub use sort::{count_misordered, sort_by_comparisons, win_ratios, RankingState, SortConfig};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unknown document {0}")]
    UnknownDocument(DocId),
    #[error("could not parse a choice from reply {reply:?}")]
    Unparseable { reply: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Llm,
    Oracle,
    Stub,
}

impl JudgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JudgeKind::Llm => "llm",
            JudgeKind::Oracle => "oracle",
            JudgeKind::Stub => "stub",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "llm" => Some(JudgeKind::Llm),
            "oracle" => Some(JudgeKind::Oracle),
            "stub" => Some(JudgeKind::Stub),
            _ => None,
        }
    }
}

/// One pairwise judgement. `winner` is either `doc_a` or `doc_b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub doc_a: DocId,
    pub doc_b: DocId,
    pub winner: DocId,
    pub judge: JudgeKind,
}

impl ComparisonRecord {
    pub fn new(doc_a: DocId, doc_b: DocId, winner: DocId, judge: JudgeKind) -> Result<Self, EvalError> {
        if doc_a == doc_b {
            return Err(EvalError::Parameter(format!("self comparison of {doc_a}")));
        }
        if winner != doc_a && winner != doc_b {
            return Err(EvalError::Parameter(format!("winner {winner} is not in the pair")));
        }
        Ok(ComparisonRecord {
            doc_a,
            doc_b,
            winner,
            judge,
        })
    }

    pub fn loser(&self) -> &DocId {
        if self.winner == self.doc_a {
            &self.doc_b
        } else {
            &self.doc_a
        }
    }
}
