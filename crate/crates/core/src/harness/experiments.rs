//! Input-length sweep and target/permutation ablations.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::artifacts::*;
use super::{write_json, Harness, HarnessError, StageOutcome};
use crate::corpus::{self, Split};
use crate::eval::{self, EvalOptions, EvalReport};
use crate::genrank::{RerankRecord, SftOptions, TargetMode};

pub const SWEEP_CSV_HEADER: &str = "k,retr_f1,recall_at_k,em,token_f1";
const ABLATION_CSV_HEADER: &str = "variant,perms_train,target,sft_lines,retrieval_source,retr_f1,em,token_f1,qa_acc,qa";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub retr_f1: Option<f64>,
    /// Mean fraction of gold documents inside the stage-1 top k.
    pub recall_at_k: Option<f64>,
    pub em: Option<f64>,
    pub token_f1: Option<f64>,
    /// Questions whose pool is smaller than k; they use the whole pool.
    pub capped_questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub split: Split,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoPerm,
    RetrOnly,
    QaOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoPerm, Variant::RetrOnly, Variant::QaOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPerm => "no_perm",
            Variant::RetrOnly => "retr_only",
            Variant::QaOnly => "qa_only",
        }
    }

    pub fn mode(self) -> TargetMode {
        match self {
            Variant::Full | Variant::NoPerm => TargetMode::Full,
            Variant::RetrOnly => TargetMode::RetrievalOnly,
            Variant::QaOnly => TargetMode::AnswerOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub perms_train: usize,
    pub target: TargetMode,
    /// Instruction-tuning lines emitted for the first seed.
    pub sft_lines: usize,
    /// `generator`, or `stage1_threshold` when the target has no id section.
    pub retrieval_source: String,
    pub retr_f1: Option<f64>,
    pub em: Option<f64>,
    pub token_f1: Option<f64>,
    pub qa_acc: Option<f64>,
    pub qa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub split: Split,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub rows: Vec<AblationRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "-".into())
}

/// Mean over seeds; `None` if any seed lacks the value.
fn seed_mean(values: Vec<Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.into_iter().collect();
    v.and_then(eval::mean)
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.k,
                cell(r.retr_f1),
                cell(r.recall_at_k),
                cell(r.em),
                cell(r.token_f1)
            );
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:>4} {:>8} {:>9} {:>8} {:>8}  capped\n",
            "k", "Retr-F1", "Recall@k", "EM", "F1"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>4} {:>8} {:>9} {:>8} {:>8}  {}",
                r.k,
                pct(r.retr_f1),
                pct(r.recall_at_k),
                pct(r.em),
                pct(r.token_f1),
                r.capped_questions
            );
        }
        out
    }
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{ABLATION_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.variant.name(),
                r.perms_train,
                serde_json::to_value(r.target)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                r.sft_lines,
                r.retrieval_source,
                cell(r.retr_f1),
                cell(r.em),
                cell(r.token_f1),
                cell(r.qa_acc),
                cell(r.qa)
            );
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<10} {:>5} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "variant", "perms", "sft_lines", "Retr-F1", "EM", "F1", "QA-Acc*", "QA"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8}",
                r.variant.name(),
                r.perms_train,
                r.sft_lines,
                pct(r.retr_f1),
                pct(r.em),
                pct(r.token_f1),
                pct(r.qa_acc),
                pct(r.qa)
            );
        }
        out
    }
}

impl Harness {
    fn recall_at_k(&self, k: usize) -> Result<Option<f64>, HarnessError> {
        let corpus = self.load_corpus()?;
        let scored = self.load_scored()?;
        let split = self.cfg.stage2.eval_split;
        Ok(eval::mean(
            corpus::split_view(&corpus, split)
                .into_iter()
                .filter(|q| !q.gold_doc_keys.is_empty())
                .map(|q| {
                    let top: BTreeSet<String> = scored
                        .get(&q.q_key)
                        .map(|s| s.top_keys(k))
                        .unwrap_or_default()
                        .into_iter()
                        .collect();
                    let gold = q.gold_set();
                    gold.intersection(&top).count() as f64 / gold.len() as f64
                }),
        ))
    }

    /// Reranks and evaluates the split once per k; needs `scored.jsonl` and `unified.jsonl`.
    pub fn sweep_doccount(&mut self, ks: Option<Vec<usize>>) -> Result<StageOutcome, HarnessError> {
        let ks = ks.unwrap_or_else(|| self.cfg.experiments.sweep_k.clone());
        if ks.is_empty() || ks.contains(&0) {
            return Err(HarnessError::Config("sweep k values must be positive".into()));
        }
        let mut inputs = self.stage2_inputs()?;
        inputs.extend(self.backend_file(&self.cfg.backends.generator));
        inputs.extend(self.cfg.corpus.keywords.as_ref().map(|p| self.cfg.resolve(p)));
        let options = self.rerank_options(self.cfg.stage2.target, self.seed);
        let key = (
            ks.clone(),
            options,
            self.cfg.stage2.eval_split,
            self.cfg.backends.generator.clone(),
        );
        self.run_stage("sweep-doccount", inputs, &key, &[SWEEP_CSV, SWEEP_JSON], |h| {
            let generator = h.open_generator(&h.cfg.backends.generator)?;
            let mut rows = Vec::with_capacity(ks.len());
            let mut failures = 0;
            for &k in &ks {
                let run = h.rerank_split(generator.as_ref(), &options, k)?;
                failures += run.errors.len();
                let report = h.evaluate(&run.records, EvalOptions::default())?;
                let answers = report.answers.as_ref();
                rows.push(SweepRow {
                    k,
                    retr_f1: report.retrieval.as_ref().and_then(|r| r.mean_f1),
                    recall_at_k: h.recall_at_k(k)?,
                    em: answers.and_then(|a| a.mean_em),
                    token_f1: answers.and_then(|a| a.mean_f1),
                    capped_questions: run.capped,
                });
            }
            let report = SweepReport {
                split: h.cfg.stage2.eval_split,
                rows,
            };
            std::fs::write(h.path(SWEEP_CSV), report.to_csv()).map_err(|e| HarnessError::io(&h.path(SWEEP_CSV), e))?;
            write_json(&h.path(SWEEP_JSON), &report)?;
            if failures > 0 {
                log::warn!("sweep-doccount: {failures} question run(s) produced no usable output");
            }
            Ok((0, format!("\n{}", report.render())))
        })
    }

    pub fn load_sweep(&self) -> Result<SweepReport, HarnessError> {
        super::read_json(&self.require(SWEEP_JSON, "sweep-doccount")?)
    }

    /// Stage-1 threshold selection as result records, keeping generated answers.
    fn with_stage1_selection(
        &self,
        records: &[RerankRecord],
        threshold: f64,
    ) -> Result<Vec<RerankRecord>, HarnessError> {
        let scored = self.load_scored()?;
        Ok(records
            .iter()
            .map(|r| {
                let selected = scored
                    .get(&r.q_key)
                    .map(|s| {
                        s.ranking
                            .iter()
                            .filter(|d| d.score > threshold)
                            .map(|d| d.doc_key.clone())
                            .collect()
                    })
                    .unwrap_or_default();
                RerankRecord {
                    predicted_doc_keys: selected,
                    ..r.clone()
                }
            })
            .collect())
    }

    fn variant_generator(&self, v: Variant) -> String {
        self.cfg
            .experiments
            .ablation_generators
            .get(v.name())
            .cloned()
            .unwrap_or_else(|| self.cfg.backends.generator.clone())
    }

    /// Runs the four ablation variants for every configured seed; needs
    /// `scored.jsonl`, `unified.jsonl` and `threshold.json`.
    pub fn ablate(&mut self) -> Result<StageOutcome, HarnessError> {
        let mut inputs = self.stage2_inputs()?;
        inputs.push(self.require(THRESHOLD, "tune-threshold")?);
        for v in Variant::ALL {
            inputs.extend(self.backend_file(&self.variant_generator(v)));
        }
        inputs.extend(self.cfg.corpus.keywords.as_ref().map(|p| self.cfg.resolve(p)));
        let generators: Vec<String> = Variant::ALL.iter().map(|v| self.variant_generator(*v)).collect();
        let key = (
            self.cfg.seeds.clone(),
            self.cfg.stage1.k,
            self.cfg.stage2.clone(),
            generators,
        );
        self.run_stage("ablate", inputs, &key, &[ABLATION_JSON, ABLATION_CSV], |h| {
            let threshold = h.load_threshold()?.threshold;
            let seeds = h.cfg.seeds.clone();
            let k = h.cfg.stage1.k;
            let mut rows = Vec::new();
            for v in Variant::ALL {
                let perms = if v == Variant::NoPerm {
                    1
                } else {
                    h.cfg.stage2.perms_train
                };
                let generator = h.open_generator(&h.variant_generator(v))?;
                let dir = format!("ablate/{}", v.name());
                let mut reports: Vec<EvalReport> = Vec::new();
                let mut sft_lines = None;
                for &seed in &seeds {
                    let sft = SftOptions {
                        perms_per_question: perms,
                        seed,
                        prompt: crate::genrank::PromptOptions {
                            mode: v.mode(),
                            ..h.prompt_options()
                        },
                    };
                    let sft_report = h.write_sft(&h.path(&format!("{dir}/sft_seed{seed}.jsonl")), &sft, k)?;
                    sft_lines.get_or_insert(sft_report.examples);
                    let run = h.rerank_split(generator.as_ref(), &h.rerank_options(v.mode(), seed), k)?;
                    super::write_jsonl(&h.path(&format!("{dir}/results_seed{seed}.jsonl")), &run.records)?;
                    let report = match v {
                        Variant::QaOnly => {
                            let answers = h.evaluate(
                                &run.records,
                                EvalOptions {
                                    retrieval: false,
                                    answers: true,
                                },
                            )?;
                            let selected = h.with_stage1_selection(&run.records, threshold)?;
                            let retrieval = h.evaluate(
                                &selected,
                                EvalOptions {
                                    retrieval: true,
                                    answers: false,
                                },
                            )?;
                            EvalReport {
                                retrieval: retrieval.retrieval,
                                ..answers
                            }
                        }
                        Variant::RetrOnly => h.evaluate(
                            &run.records,
                            EvalOptions {
                                retrieval: true,
                                answers: false,
                            },
                        )?,
                        _ => h.evaluate(&run.records, EvalOptions::default())?,
                    };
                    reports.push(report);
                }
                let pick = |f: &dyn Fn(&EvalReport) -> Option<f64>| seed_mean(reports.iter().map(f).collect());
                rows.push(AblationRow {
                    variant: v,
                    perms_train: perms,
                    target: v.mode(),
                    sft_lines: sft_lines.unwrap_or(0),
                    retrieval_source: if v == Variant::QaOnly {
                        "stage1_threshold"
                    } else {
                        "generator"
                    }
                    .into(),
                    retr_f1: pick(&|r| r.retrieval.as_ref().and_then(|x| x.mean_f1)),
                    em: pick(&|r| r.answers.as_ref().and_then(|a| a.mean_em)),
                    token_f1: pick(&|r| r.answers.as_ref().and_then(|a| a.mean_f1)),
                    qa_acc: pick(&|r| r.answers.as_ref().and_then(|a| a.mean_keyword_acc)),
                    qa: pick(&|r| r.answers.as_ref().and_then(|a| a.mean_qa)),
                });
            }
            let report = AblationReport {
                split: h.cfg.stage2.eval_split,
                seeds,
                threshold,
                rows,
            };
            write_json(&h.path(ABLATION_JSON), &report)?;
            std::fs::write(h.path(ABLATION_CSV), report.to_csv())
                .map_err(|e| HarnessError::io(&h.path(ABLATION_CSV), e))?;
            Ok((0, format!("\n{}", report.render())))
        })
    }

    pub fn load_ablation(&self) -> Result<AblationReport, HarnessError> {
        super::read_json(&self.require(ABLATION_JSON, "ablate")?)
    }
}
