//! Retrieval and answer metrics.
//!
//! Answers are compared after the usual reading-comprehension normalization:
//! lowercase, drop ASCII punctuation, drop the articles `a`, `an`, `the`, and
//! collapse whitespace. Per-question values are averaged arithmetically; the
//! composed QA score is a per-question product averaged afterwards, which is
//! not the product of the averages.

mod report;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

pub use report::{
    evaluate_run, render_table, AnswerEval, AnswerRow, EvalOptions, EvalReport, KeywordSidecar, RetrievalEval,
    RetrievalRow,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("QA score needs a fluency value but no fluency backend is configured")]
    MissingFluency,
    #[error("metric input out of range: {0}")]
    OutOfRange(String),
}

/// Precision, recall and F1 of one predicted evidence set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set F1 between predicted and gold evidence.
///
/// Both empty counts as perfect (1, 1, 1). When exactly one side is empty all
/// three values are 0, which keeps the function symmetric under swapping.
pub fn retrieval_f1<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> Prf {
    if pred.is_empty() && gold.is_empty() {
        return Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let hit = pred.intersection(gold).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { hit / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { hit / gold.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn answer_tokens(s: &str) -> Vec<String> {
    normalize_answer(s)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

pub fn exact_match(pred: &str, golds: &[String]) -> u8 {
    let p = normalize_answer(pred);
    u8::from(golds.iter().any(|g| normalize_answer(g) == p))
}

fn bag_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Maximum bag-of-token F1 over the gold answers.
pub fn token_f1(pred: &str, golds: &[String]) -> f64 {
    let p = answer_tokens(pred);
    golds.iter().map(|g| bag_f1(&p, &answer_tokens(g))).fold(0.0, f64::max)
}

/// Fraction of keyword sets with at least one member present in the prediction.
///
/// A multi-word member matches when its normalized tokens occur contiguously.
/// This is an analogue of the official keyword accuracy, whose keyword
/// extraction procedure is not public.
pub fn keyword_accuracy(pred: &str, keywords: &[Vec<String>]) -> f64 {
    if keywords.is_empty() {
        return 0.0;
    }
    let tokens = answer_tokens(pred);
    let present = |member: &String| {
        let m = answer_tokens(member);
        !m.is_empty() && tokens.windows(m.len()).any(|w| w == m.as_slice())
    };
    let hit = keywords.iter().filter(|set| set.iter().any(present)).count();
    hit as f64 / keywords.len() as f64
}

pub fn qa_score(fluency: Option<f64>, accuracy: f64) -> Result<f64, EvalError> {
    let fl = fluency.ok_or(EvalError::MissingFluency)?;
    for (name, v) in [("fluency", fl), ("accuracy", accuracy)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(EvalError::OutOfRange(format!("{name} = {v}")));
        }
    }
    Ok(fl * accuracy)
}

/// Fluency of an answer against its references, in [0, 1].
///
/// Learned fluency metrics are not computed in-process; implementations wrap
/// an external scoring service.
pub trait FluencyScorer: Send + Sync {
    fn fluency(&self, pred: &str, golds: &[String]) -> Option<f64>;
}

/// Adapts a [`crate::backends::Scorer`] service into a fluency scorer by posting
/// `Candidate: <pred> Reference: <gold>` and keeping the best reference.
pub struct ScorerFluency<S>(pub S);

impl<S: crate::backends::Scorer> FluencyScorer for ScorerFluency<S> {
    fn fluency(&self, pred: &str, golds: &[String]) -> Option<f64> {
        golds
            .iter()
            .filter_map(|g| self.0.score(&format!("Candidate: {pred} Reference: {g}")).ok())
            .reduce(f64::max)
    }
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values {
        n += 1;
        sum += v;
    }
    (n > 0).then(|| sum / n as f64)
}
