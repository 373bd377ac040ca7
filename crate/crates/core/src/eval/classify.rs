use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingest::{DocId, DocumentRecord};
use crate::llm::{complete_with_retry, ChatModel, CompletionRequest};
use crate::provider::RetryPolicy;
use crate::store::ClassificationRow;

pub const DEFAULT_CLASSIFY_TEMPLATE: &str = "Assign the scientific publication below to exactly one of \
these categories: {categories}. Reply with the category name only.\n\n{text}";

/// Fallback label for replies that name no known category.
const OTHER: &str = "Other";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub template: String,
    /// Leading characters of each document sent to the model.
    pub max_chars: usize,
    pub temperature: f64,
    pub retry: RetryPolicy,
    pub concurrency: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            template: DEFAULT_CLASSIFY_TEMPLATE.to_string(),
            max_chars: 12_000,
            temperature: 0.0,
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }
}

/// Map a reply onto a category. Exact (case-insensitive) names win, then
/// a reply mentioning exactly one category. Anything else becomes "Other"
/// when that is a category, else `None`.
pub fn parse_category(reply: &str, categories: &[String]) -> Option<String> {
    let cleaned = reply.trim().trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    if let Some(c) = categories.iter().find(|c| c.eq_ignore_ascii_case(cleaned)) {
        return Some(c.clone());
    }
    let lower = reply.to_lowercase();
    let mentioned: Vec<&String> = categories
        .iter()
        .filter(|c| lower.contains(&c.to_lowercase()))
        .collect();
    if let [only] = mentioned.as_slice() {
        return Some((*only).clone());
    }
    categories.iter().find(|c| c.eq_ignore_ascii_case(OTHER)).cloned()
}

pub fn classify_document(
    doc: &DocumentRecord,
    categories: &[String],
    llm: &dyn ChatModel,
    cfg: &ClassifyConfig,
) -> ClassificationRow {
    let text: String = format!("{}\n\n{}\n\n{}", doc.title, doc.abstract_text, doc.body_text)
        .chars()
        .take(cfg.max_chars)
        .collect();
    let prompt = cfg
        .template
        .replace("{categories}", &categories.join(", "))
        .replace("{text}", &text);
    let req = CompletionRequest::single(prompt, cfg.temperature);
    match complete_with_retry(llm, &req, &cfg.retry) {
        Ok(reply) => ClassificationRow {
            doc_id: doc.doc_id.clone(),
            predicted: parse_category(&reply, categories),
            reply,
        },
        Err(e) => ClassificationRow {
            doc_id: doc.doc_id.clone(),
            predicted: None,
            reply: format!("error: {e}"),
        },
    }
}

/// Classify every document. Failures and unparseable replies come back
/// with `predicted: None` and count as abstentions.
pub fn classify_documents(
    docs: &[DocumentRecord],
    categories: &[String],
    llm: &dyn ChatModel,
    cfg: &ClassifyConfig,
) -> Result<Vec<ClassificationRow>, EvalError> {
    if categories.is_empty() {
        return Err(EvalError::Parameter("no categories given".into()));
    }
    let run = || {
        docs.par_iter()
            .map(|d| classify_document(d, categories, llm, cfg))
            .collect::<Vec<_>>()
    };
    Ok(match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    })
}

/// Square count table. Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub categories: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(categories: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        if categories.is_empty() {
            return Err(EvalError::Parameter("no categories".into()));
        }
        if counts.len() != categories.len() || counts.iter().any(|r| r.len() != categories.len()) {
            return Err(EvalError::Parameter(format!(
                "count table must be {0}x{0}",
                categories.len()
            )));
        }
        Ok(ConfusionMatrix { categories, counts })
    }

    /// Tally predictions against ground truth. Documents without a
    /// prediction or without a known truth label are returned as
    /// abstentions and left out of the table.
    pub fn from_assignments(
        categories: &[String],
        truth: &HashMap<DocId, String>,
        predictions: &[ClassificationRow],
    ) -> Result<(Self, Vec<DocId>), EvalError> {
        let idx: HashMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut counts = vec![vec![0u64; categories.len()]; categories.len()];
        let mut abstained = Vec::new();
        for p in predictions {
            let t = truth.get(&p.doc_id).and_then(|t| idx.get(t.as_str()));
            let q = p.predicted.as_deref().and_then(|q| idx.get(q));
            match (t, q) {
                (Some(&t), Some(&q)) => counts[t][q] += 1,
                _ => abstained.push(p.doc_id.clone()),
            }
        }
        Ok((Self::new(categories.to_vec(), counts)?, abstained))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }
}

/// One-vs-rest counts and rates for a single category. Rates with a zero
/// denominator are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(m: &ConfusionMatrix, category: usize) -> CategoryMetrics {
    let k = category;
    let tp = m.counts[k][k];
    let fn_: u64 = m.counts[k].iter().sum::<u64>() - tp;
    let fp: u64 = m.counts.iter().map(|r| r[k]).sum::<u64>() - tp;
    let tn = m.total() - tp - fn_ - fp;
    CategoryMetrics {
        category: m.categories[k].clone(),
        tp,
        fp,
        fn_,
        tn,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
    }
}

/// One category per non-empty line; `#` starts a comment.
pub fn load_categories(path: &Path) -> Result<Vec<String>, EvalError> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Ground truth CSV with header `doc_id,category`.
pub fn load_truth(path: &Path) -> Result<HashMap<DocId, String>, EvalError> {
    #[derive(Deserialize)]
    struct Row {
        doc_id: String,
        category: String,
    }
    let mut out = HashMap::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let row: Row = row?;
        out.insert(DocId(row.doc_id), row.category.trim().to_string());
    }
    Ok(out)
}

/// Squared Pearson correlation; `None` for fewer than two points or zero
/// variance.
pub fn pearson_r_squared(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (xs[i] - mx, ys[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy * sxy / (sxx * syy))
}
