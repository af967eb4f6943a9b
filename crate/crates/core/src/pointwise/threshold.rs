use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::eval::{mean, retrieval_f1};

/// Scored candidates and gold evidence of one dev question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionScores {
    pub q_key: String,
    pub scored: Vec<(String, f64)>,
    pub gold: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStep {
    pub threshold: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub dev_f1: f64,
    pub sweep: Vec<ThresholdStep>,
}

/// Documents whose score strictly exceeds `threshold`.
pub fn select_above(scored: &[(String, f64)], threshold: f64) -> BTreeSet<String> {
    scored
        .iter()
        .filter(|(_, s)| *s > threshold)
        .map(|(k, _)| k.clone())
        .collect()
}

/// Sweeps every observed score plus 0 and 1 as a threshold and keeps the one
/// maximizing mean per-question retrieval F1, preferring the smallest on ties.
///
/// Selection sets only change at observed scores, so the finite sweep visits
/// every distinct selection.
pub fn tune_threshold(dev: &[QuestionScores]) -> ThresholdReport {
    let mut candidates: Vec<f64> = dev
        .iter()
        .flat_map(|q| q.scored.iter().map(|(_, s)| *s))
        .chain([0.0, 1.0])
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut sweep = Vec::with_capacity(candidates.len());
    let mut best: Option<ThresholdStep> = None;
    for t in candidates {
        let f1 = mean(
            dev.iter()
                .map(|q| retrieval_f1(&select_above(&q.scored, t), &q.gold).f1),
        )
        .unwrap_or(0.0);
        let step = ThresholdStep {
            threshold: t,
            mean_f1: f1,
        };
        if best.is_none_or(|b| f1 > b.mean_f1) {
            best = Some(step);
        }
        sweep.push(step);
    }
    let best = best.expect("candidate set always contains 0 and 1");
    ThresholdReport {
        threshold: best.threshold,
        dev_f1: best.mean_f1,
        sweep,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qs(scores: &[(&str, f64)], gold: &[&str]) -> QuestionScores {
        QuestionScores {
            q_key: "q".into(),
            scored: scores.iter().map(|(k, s)| (k.to_string(), *s)).collect(),
            gold: gold.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn single_question_strict_rule() {
        // A:0.9 B:0.4, gold {A}: any t in [0.4, 0.9) selects exactly {A}
        let r = tune_threshold(&[qs(&[("A", 0.9), ("B", 0.4)], &["A"])]);
        assert_eq!(r.dev_f1, 1.0);
        assert_eq!(r.threshold, 0.4);
        assert_eq!(
            select_above(&[("A".into(), 0.9), ("B".into(), 0.4)], r.threshold).len(),
            1
        );
        assert_eq!(r.dev_f1, r.sweep.iter().map(|s| s.mean_f1).fold(0.0, f64::max));
    }

    #[test]
    fn all_gold_prefers_zero() {
        let r = tune_threshold(&[qs(&[("A", 0.9), ("B", 0.4)], &["A", "B"])]);
        assert_eq!(r.threshold, 0.0);
        assert_eq!(r.dev_f1, 1.0);
    }

    #[test]
    fn empty_dev_set() {
        let r = tune_threshold(&[]);
        assert_eq!(r.sweep.len(), 2);
        assert_eq!(r.threshold, 0.0);
    }
}
