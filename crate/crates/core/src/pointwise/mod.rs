//! First-stage pointwise ranking.
//!
//! Each (question, document) pair is rendered as
//! `Question: {question} Document: {document} </s>`, where image documents
//! carry an `<image>` placeholder in front of their caption. A scorer maps the
//! prompt to a relevance probability (a sigmoid over a linear head on the
//! end-of-sequence hidden state, for neural backends). Training minimizes the
//! binary cross-entropy [`rank_loss`] summed over pairs.

mod lexical;
mod threshold;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{clamp_probability, BackendError, Scorer};
use crate::corpus::{Document, Modality, QuestionRecord};
use crate::text::collapse_whitespace;

pub use lexical::{EpochLoss, LexicalScorerModel, TrainConfig, TrainingPair};
pub use threshold::{select_above, tune_threshold, QuestionScores, ThresholdReport, ThresholdStep};

pub const EOS_MARKER: &str = "</s>";
pub const IMAGE_PLACEHOLDER: &str = "<image>";
/// Probabilities are clamped into [ε, 1 − ε] before taking logarithms.
pub const LOSS_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PointwiseError {
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(BackendError),
    #[error("{failed} of {total} documents could not be scored")]
    PartialBatch {
        failed: usize,
        total: usize,
        scored: Vec<ScoredDocument>,
        statuses: Vec<ItemStatus>,
    },
    #[error("document '{0}' is not in the question's candidate pool")]
    NotInPool(String),
    #[error("training data needs both positive and negative examples")]
    DegenerateData,
    #[error("invalid model file: {0}")]
    BadModel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemStatus {
    pub doc_key: String,
    pub error: Option<BackendError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPrompt {
    pub text: String,
    pub has_image_slot: bool,
    pub doc_key: String,
    pub q_key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub q_key: String,
    pub doc_key: String,
    pub score: f64,
    pub scorer_id: String,
}

fn join_nonempty<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// The document part of a rank prompt, with the image placeholder for images.
pub fn document_segment(doc: &Document) -> String {
    let text = collapse_whitespace(&join_nonempty([doc.title_or_caption.as_str(), doc.body_text.as_str()]));
    match doc.modality {
        Modality::Image => join_nonempty([IMAGE_PLACEHOLDER, text.as_str()]),
        Modality::Text => text,
    }
}

pub fn build_rank_prompt(q: &QuestionRecord, doc: &Document) -> RankPrompt {
    let question = collapse_whitespace(&q.question);
    let segment = document_segment(doc);
    RankPrompt {
        text: join_nonempty([
            "Question:",
            question.as_str(),
            "Document:",
            segment.as_str(),
            EOS_MARKER,
        ]),
        has_image_slot: doc.modality == Modality::Image,
        doc_key: doc.doc_key.clone(),
        q_key: q.q_key.clone(),
    }
}

/// Splits a rank prompt back into (question, document text); the image
/// placeholder and end marker are removed.
pub fn split_rank_prompt(text: &str) -> Option<(&str, &str)> {
    let rest = text.trim().strip_prefix("Question:")?;
    let at = rest.find("Document:")?;
    let question = rest[..at].trim();
    let mut doc = rest[at + "Document:".len()..].trim();
    doc = doc.strip_suffix(EOS_MARKER).unwrap_or(doc).trim_end();
    doc = doc.strip_prefix(IMAGE_PLACEHOLDER).unwrap_or(doc).trim_start();
    Some((question, doc))
}

/// Scores `docs` for `q` in batches of `batch_size`, preserving order.
pub fn score_documents(
    q: &QuestionRecord,
    docs: &[&Document],
    scorer: &dyn Scorer,
    batch_size: usize,
) -> Result<Vec<ScoredDocument>, PointwiseError> {
    let pool: HashSet<&str> = q.candidate_pool.iter().map(String::as_str).collect();
    if let Some(d) = docs.iter().find(|d| !pool.contains(d.doc_key.as_str())) {
        return Err(PointwiseError::NotInPool(d.doc_key.clone()));
    }
    if docs.is_empty() {
        return Ok(Vec::new());
    }
    let scorer_id = scorer.id();
    let prompts: Vec<String> = docs.iter().map(|d| build_rank_prompt(q, d).text).collect();
    let mut results = Vec::with_capacity(docs.len());
    for chunk in prompts.chunks(batch_size.max(1)) {
        results.extend(scorer.score_batch(chunk));
    }

    let mut scored = Vec::with_capacity(docs.len());
    let mut statuses = Vec::with_capacity(docs.len());
    let mut last_error = None;
    for (doc, result) in docs.iter().zip(results) {
        match result.and_then(|s| clamp_probability(s, &scorer_id)) {
            Ok(score) => {
                scored.push(ScoredDocument {
                    q_key: q.q_key.clone(),
                    doc_key: doc.doc_key.clone(),
                    score,
                    scorer_id: scorer_id.clone(),
                });
                statuses.push(ItemStatus {
                    doc_key: doc.doc_key.clone(),
                    error: None,
                });
            }
            Err(e) => {
                last_error = Some(e.clone());
                statuses.push(ItemStatus {
                    doc_key: doc.doc_key.clone(),
                    error: Some(e),
                });
            }
        }
    }
    match last_error {
        None => Ok(scored),
        Some(e) if scored.is_empty() => Err(PointwiseError::ScorerUnavailable(e)),
        Some(_) => Err(PointwiseError::PartialBatch {
            failed: docs.len() - scored.len(),
            total: docs.len(),
            scored,
            statuses,
        }),
    }
}

/// Binary cross-entropy `−y·ln s − (1−y)·ln(1−s)` with `s` clamped to [ε, 1−ε].
pub fn rank_loss(score: f64, label: u8) -> f64 {
    let s = score.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
    if label >= 1 {
        -s.ln()
    } else {
        -(1.0 - s).ln()
    }
}

/// The `k` best documents: descending score, ties by ascending doc key.
pub fn topk(scored: &[ScoredDocument], k: usize) -> Vec<String> {
    let mut order: Vec<&ScoredDocument> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_key.cmp(&b.doc_key)));
    order.into_iter().take(k.max(1)).map(|s| s.doc_key.clone()).collect()
}
