use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{exact_match, keyword_accuracy, mean, qa_score, retrieval_f1, token_f1, FluencyScorer};
use crate::corpus::Corpus;
use crate::genrank::RerankRecord;

/// Keyword sets per question: `{q_key: [[kw, kw], [kw]]}`.
pub type KeywordSidecar = BTreeMap<String, Vec<Vec<String>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRow {
    pub q_key: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEval {
    pub per_question: Vec<RetrievalRow>,
    pub mean_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub q_key: String,
    pub em: u8,
    pub token_f1: f64,
    pub keyword_acc: Option<f64>,
    pub fluency: Option<f64>,
    pub qa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerEval {
    pub per_question: Vec<AnswerRow>,
    pub mean_em: Option<f64>,
    pub mean_f1: Option<f64>,
    pub mean_keyword_acc: Option<f64>,
    pub mean_fluency: Option<f64>,
    pub mean_qa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub questions_evaluated: usize,
    pub unknown_questions: Vec<String>,
    pub retrieval: Option<RetrievalEval>,
    pub answers: Option<AnswerEval>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub retrieval: bool,
    pub answers: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            retrieval: true,
            answers: true,
        }
    }
}

/// Scores a run against the corpus gold labels.
///
/// Records naming unknown questions are counted and skipped. Questions without
/// gold evidence (or without gold answers) are left out of the retrieval (or
/// answer) aggregates.
pub fn evaluate_run(
    results: &[RerankRecord],
    corpus: &Corpus,
    keywords: Option<&KeywordSidecar>,
    fluency: Option<&dyn FluencyScorer>,
    options: EvalOptions,
) -> EvalReport {
    let mut unknown = Vec::new();
    let mut retrieval_rows = Vec::new();
    let mut answer_rows = Vec::new();
    let mut evaluated = 0;

    for r in results {
        let Some(q) = corpus.question(&r.q_key) else {
            unknown.push(r.q_key.clone());
            continue;
        };
        evaluated += 1;
        if options.retrieval && !q.gold_doc_keys.is_empty() {
            let pred: BTreeSet<String> = r.predicted_doc_keys.iter().cloned().collect();
            let prf = retrieval_f1(&pred, &q.gold_set());
            retrieval_rows.push(RetrievalRow {
                q_key: q.q_key.clone(),
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
            });
        }
        if options.answers && !q.gold_answers.is_empty() {
            let keyword_acc = keywords
                .and_then(|k| k.get(&q.q_key))
                .filter(|sets| !sets.is_empty())
                .map(|sets| keyword_accuracy(&r.answer, sets));
            let fl = fluency.and_then(|f| f.fluency(&r.answer, &q.gold_answers));
            let qa = keyword_acc.and_then(|acc| qa_score(fl, acc).ok());
            answer_rows.push(AnswerRow {
                q_key: q.q_key.clone(),
                em: exact_match(&r.answer, &q.gold_answers),
                token_f1: token_f1(&r.answer, &q.gold_answers),
                keyword_acc,
                fluency: fl,
                qa,
            });
        }
    }

    let retrieval = options.retrieval.then(|| RetrievalEval {
        mean_f1: mean(retrieval_rows.iter().map(|r| r.f1)),
        per_question: retrieval_rows,
    });
    let answers = options.answers.then(|| AnswerEval {
        mean_em: mean(answer_rows.iter().map(|r| f64::from(r.em))),
        mean_f1: mean(answer_rows.iter().map(|r| r.token_f1)),
        mean_keyword_acc: mean(answer_rows.iter().filter_map(|r| r.keyword_acc)),
        mean_fluency: mean(answer_rows.iter().filter_map(|r| r.fluency)),
        mean_qa: mean(answer_rows.iter().filter_map(|r| r.qa)),
        per_question: answer_rows,
    });
    let mut notes = vec!["qa_acc is a keyword-accuracy analogue of the official metric".to_string()];
    if fluency.is_none() {
        notes.push("no fluency backend configured: QA-FL and QA omitted".to_string());
    }
    if !unknown.is_empty() {
        log::warn!("{} result record(s) reference unknown questions", unknown.len());
    }
    EvalReport {
        records: results.len(),
        questions_evaluated: evaluated,
        unknown_questions: unknown,
        retrieval,
        answers,
        notes,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "-".into())
}

/// Fixed-width summary: `QA-FL  QA-Acc  QA  Retr-F1 | EM  F1`.
pub fn render_table(report: &EvalReport) -> String {
    let a = report.answers.as_ref();
    let cols = [
        pct(a.and_then(|a| a.mean_fluency)),
        pct(a.and_then(|a| a.mean_keyword_acc)),
        pct(a.and_then(|a| a.mean_qa)),
        pct(report.retrieval.as_ref().and_then(|r| r.mean_f1)),
        pct(a.and_then(|a| a.mean_em)),
        pct(a.and_then(|a| a.mean_f1)),
    ];
    let mut out = String::new();
    let _ = writeln!(
        out,
        "questions: {}  records: {}  unknown: {}",
        report.questions_evaluated,
        report.records,
        report.unknown_questions.len()
    );
    let _ = writeln!(
        out,
        "{:>8} {:>8} {:>8} {:>8} | {:>8} {:>8}",
        "QA-FL", "QA-Acc*", "QA", "Retr-F1", "EM", "F1"
    );
    let _ = writeln!(
        out,
        "{:>8} {:>8} {:>8} {:>8} | {:>8} {:>8}",
        cols[0], cols[1], cols[2], cols[3], cols[4], cols[5]
    );
    for n in &report.notes {
        let _ = writeln!(out, "* {n}");
    }
    out
}
