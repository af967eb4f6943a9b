//! End-to-end pipeline over an output directory.
//!
//! Each stage reads the artifacts of earlier stages from the run directory,
//! writes its own, and records input/config content hashes so an unchanged
//! stage is skipped on rerun. Per-record failures go to `errors/<stage>.jsonl`
//! without failing the command.

pub mod config;
mod experiments;
mod store;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{self, BackendError, BackendSource, Captioner, Generator, Scorer};
use crate::corpus::{self, adapter, Corpus, QuestionRecord};
use crate::eval::{self, EvalOptions, EvalReport, FluencyScorer, KeywordSidecar, ScorerFluency};
use crate::genrank::{self, PromptOptions, RerankOptions, RerankRecord, SftOptions};
use crate::pointwise::{self, LexicalScorerModel, PointwiseError, QuestionScores, ThresholdReport, TrainingPair};
use crate::unify::{self, CaptionCache, UnifiedDocument, UnifiedMap, UnifyOptions, UnifyPrompt};

pub use config::{PipelineConfig, ThresholdSetting, LEXICAL_SCORER};
pub use experiments::{AblationReport, AblationRow, SweepReport, SweepRow, Variant, SWEEP_CSV_HEADER};
pub use store::{hash_files, hash_value, RunArtifact, RunStore, StageStatus, RUN_STORE_FILE};

pub mod artifacts {
    pub const CORPUS_DIR: &str = "corpus";
    pub const INGEST_REPORT: &str = "ingest_report.json";
    pub const UNIFIED: &str = "unified.jsonl";
    pub const CAPTION_CACHE: &str = "caption_cache.jsonl";
    pub const RANKER: &str = "ranker.json";
    pub const SCORED: &str = "scored.jsonl";
    pub const THRESHOLD: &str = "threshold.json";
    pub const SFT: &str = "sft.jsonl";
    pub const SFT_REPORT: &str = "sft_report.json";
    pub const RESULTS: &str = "results.jsonl";
    pub const EVAL_REPORT: &str = "eval_report.json";
    pub const EVAL_TABLE: &str = "eval_table.txt";
    pub const SWEEP_CSV: &str = "sweep_doccount.csv";
    pub const SWEEP_JSON: &str = "sweep_doccount.json";
    pub const ABLATION_JSON: &str = "ablation.json";
    pub const ABLATION_CSV: &str = "ablation.csv";
    pub const ERRORS_DIR: &str = "errors";
}

use artifacts::*;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing dependency {artifact}: run `{producer}` first")]
    MissingDependency { artifact: String, producer: String },
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

impl HarnessError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    /// 2 for configuration, data and I/O problems, 3 for missing artifacts,
    /// 4 for fatal backend failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Data(_) | HarnessError::Io { .. } => 2,
            HarnessError::MissingDependency { .. } => 3,
            HarnessError::Backend(_) => 4,
        }
    }
}

impl From<BackendError> for HarnessError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(m) => HarnessError::Config(m),
            other => HarnessError::Backend(other.to_string()),
        }
    }
}

impl From<corpus::CorpusError> for HarnessError {
    fn from(e: corpus::CorpusError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageOutcome {
    pub stage: String,
    pub skipped: bool,
    /// Records written to the stage's errors file.
    pub warnings: usize,
    pub message: String,
}

/// One document of a stage-1 ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_key: String,
    pub score: f64,
}

/// Stage-1 scores of one question's pool, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredQuestion {
    pub q_key: String,
    pub scorer_id: String,
    pub ranking: Vec<RankedDoc>,
}

impl ScoredQuestion {
    pub fn top_keys(&self, k: usize) -> Vec<String> {
        self.ranking.iter().take(k).map(|r| r.doc_key.clone()).collect()
    }

    pub fn pairs(&self) -> Vec<(String, f64)> {
        self.ranking.iter().map(|r| (r.doc_key.clone(), r.score)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ErrorLine {
    stage: String,
    key: String,
    error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IngestReport {
    source: String,
    meta: corpus::CorpusMeta,
    adapter: Option<adapter::AdaptReport>,
}

pub struct Harness {
    cfg: PipelineConfig,
    out: PathBuf,
    seed: u64,
    force: bool,
    store: RunStore,
}

impl Harness {
    /// `out` and `seed` override the config's output directory and first seed.
    pub fn new(cfg: PipelineConfig, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, HarnessError> {
        let out = out
            .or_else(|| cfg.out.as_ref().map(|o| cfg.resolve(o)))
            .unwrap_or_else(|| cfg.base_dir.join("run"));
        let mut cfg = cfg;
        if let Some(s) = seed {
            cfg.seeds = vec![s];
        }
        let seed = cfg.seed();
        let store = RunStore::open(&out)?;
        Ok(Harness {
            cfg,
            out,
            seed,
            force: false,
            store,
        })
    }

    pub fn from_config_file(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, HarnessError> {
        Harness::new(PipelineConfig::from_file(path)?, out, seed)
    }

    /// Reruns stages even when their inputs are unchanged.
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn require(&self, rel: &str, producer: &str) -> Result<PathBuf, HarnessError> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(HarnessError::MissingDependency {
                artifact: rel.to_string(),
                producer: producer.to_string(),
            })
        }
    }

    fn corpus_files(&self) -> Result<Vec<PathBuf>, HarnessError> {
        let dir = self.require(CORPUS_DIR, "ingest")?;
        Ok(vec![dir.join(corpus::DOCUMENTS_FILE), dir.join(corpus::QUESTIONS_FILE)])
    }

    pub fn load_corpus(&self) -> Result<Corpus, HarnessError> {
        Ok(corpus::load_canonical(&self.require(CORPUS_DIR, "ingest")?)?)
    }

    pub fn load_unified(&self) -> Result<UnifiedMap, HarnessError> {
        let p = self.require(UNIFIED, "unify")?;
        let docs: Vec<UnifiedDocument> = read_jsonl(&p)?;
        Ok(docs.into_iter().map(|d| (d.doc_key.clone(), d)).collect())
    }

    pub fn load_scored(&self) -> Result<BTreeMap<String, ScoredQuestion>, HarnessError> {
        let p = self.require(SCORED, "score")?;
        let rows: Vec<ScoredQuestion> = read_jsonl(&p)?;
        Ok(rows.into_iter().map(|r| (r.q_key.clone(), r)).collect())
    }

    pub fn load_threshold(&self) -> Result<ThresholdReport, HarnessError> {
        read_json(&self.require(THRESHOLD, "tune-threshold")?)
    }

    pub fn load_results(&self) -> Result<Vec<RerankRecord>, HarnessError> {
        read_jsonl(&self.require(RESULTS, "rerank")?)
    }

    fn backend_source(&self, spec: &str, what: &str) -> Result<BackendSource, HarnessError> {
        if spec.trim().is_empty() {
            return Err(HarnessError::Config(format!("backends.{what} is not set")));
        }
        Ok(BackendSource::parse(spec, &self.cfg.base_dir))
    }

    fn backend_file(&self, spec: &str) -> Vec<PathBuf> {
        if spec.trim().is_empty() || spec == LEXICAL_SCORER {
            return Vec::new();
        }
        match BackendSource::parse(spec, &self.cfg.base_dir) {
            BackendSource::Mock(p) | BackendSource::Http(p) => vec![p],
        }
    }

    pub fn open_generator(&self, spec: &str) -> Result<Arc<dyn Generator>, HarnessError> {
        Ok(backends::open_generator(&self.backend_source(spec, "generator")?)?)
    }

    fn open_scorer(&self) -> Result<Arc<dyn Scorer>, HarnessError> {
        if self.cfg.backends.scorer == LEXICAL_SCORER {
            let p = self.require(RANKER, "train-ranker")?;
            let model = LexicalScorerModel::load(&p).map_err(|e| HarnessError::Data(e.to_string()))?;
            return Ok(Arc::new(model));
        }
        Ok(backends::open_scorer(
            &self.backend_source(&self.cfg.backends.scorer, "scorer")?,
        )?)
    }

    fn scorer_inputs(&self) -> Vec<PathBuf> {
        if self.cfg.backends.scorer == LEXICAL_SCORER {
            vec![self.path(RANKER)]
        } else {
            self.backend_file(&self.cfg.backends.scorer)
        }
    }

    /// Writes the stage's errors file (or removes a stale one); returns the count.
    fn write_errors(&self, stage: &str, errors: &[(String, String)]) -> Result<usize, HarnessError> {
        let p = self.out.join(ERRORS_DIR).join(format!("{stage}.jsonl"));
        if errors.is_empty() {
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| HarnessError::io(&p, e))?;
            }
            return Ok(0);
        }
        let lines: Vec<ErrorLine> = errors
            .iter()
            .map(|(key, error)| ErrorLine {
                stage: stage.to_string(),
                key: key.clone(),
                error: error.clone(),
            })
            .collect();
        write_jsonl(&p, &lines)?;
        log::warn!("{stage}: {} record(s) failed; see {}", errors.len(), p.display());
        Ok(errors.len())
    }

    fn run_stage<C: Serialize>(
        &mut self,
        stage: &str,
        inputs: Vec<PathBuf>,
        config: &C,
        outputs: &[&str],
        body: impl FnOnce(&Harness) -> Result<(usize, String), HarnessError>,
    ) -> Result<StageOutcome, HarnessError> {
        let input_hash = hash_files(&inputs)?;
        let config_hash = hash_value(&(stage, config));
        if !self.force && self.store.is_current(stage, &input_hash, &config_hash) {
            log::info!("{stage}: inputs unchanged, skipping");
            return Ok(StageOutcome {
                stage: stage.to_string(),
                skipped: true,
                warnings: 0,
                message: "up to date".into(),
            });
        }
        let (warnings, message) = body(self)?;
        let status = if warnings == 0 {
            StageStatus::Complete
        } else {
            StageStatus::CompleteWithWarnings
        };
        self.store.record(stage, input_hash, config_hash, outputs, status)?;
        log::info!("{stage}: {message}");
        Ok(StageOutcome {
            stage: stage.to_string(),
            skipped: false,
            warnings,
            message,
        })
    }

    /// Validates the corpus (or converts the raw dataset) into `corpus/`.
    pub fn ingest(&mut self) -> Result<StageOutcome, HarnessError> {
        let c = self.cfg.corpus.clone();
        let inputs: Vec<PathBuf> = match (&c.dir, &c.raw, &c.adapter) {
            (Some(dir), _, _) => {
                let d = self.cfg.resolve(dir);
                vec![d.join(corpus::DOCUMENTS_FILE), d.join(corpus::QUESTIONS_FILE)]
            }
            (None, Some(raw), Some(adapter)) => vec![self.cfg.resolve(raw), self.cfg.resolve(adapter)],
            _ => {
                return Err(HarnessError::Config(
                    "set corpus.dir, or corpus.raw together with corpus.adapter".into(),
                ))
            }
        };
        self.run_stage(
            "ingest",
            inputs,
            &c,
            &["corpus/documents.jsonl", "corpus/questions.jsonl", INGEST_REPORT],
            |h| {
                let (corpus, report, source) = match (&c.dir, &c.raw, &c.adapter) {
                    (Some(dir), _, _) => {
                        let d = h.cfg.resolve(dir);
                        (corpus::load_canonical(&d)?, None, d.display().to_string())
                    }
                    (None, Some(raw), Some(ad)) => {
                        let cfg = adapter::AdapterConfig::from_file(&h.cfg.resolve(ad))?;
                        let raw = h.cfg.resolve(raw);
                        let a = adapter::adapt_dataset(&raw, &cfg)?;
                        (a.corpus, Some(a.report), raw.display().to_string())
                    }
                    _ => unreachable!("checked above"),
                };
                let dest = h.path(CORPUS_DIR);
                corpus::write_canonical(&corpus, &dest)?;
                let message = format!(
                    "{} documents, {} questions",
                    corpus.meta.documents, corpus.meta.questions
                );
                write_json(
                    &h.path(INGEST_REPORT),
                    &IngestReport {
                        source,
                        meta: corpus.meta.clone(),
                        adapter: report,
                    },
                )?;
                Ok((0, message))
            },
        )
    }

    fn unify_prompt(&self) -> Result<UnifyPrompt, HarnessError> {
        match &self.cfg.unify.prompt_template {
            Some(p) => UnifyPrompt::from_file(&self.cfg.resolve(p)).map_err(|e| HarnessError::Config(e.to_string())),
            None => Ok(UnifyPrompt::default()),
        }
    }

    /// Converts every document to text; needs `corpus/`.
    pub fn unify(&mut self) -> Result<StageOutcome, HarnessError> {
        let mut inputs = self.corpus_files()?;
        inputs.extend(self.backend_file(&self.cfg.backends.captioner));
        inputs.extend(self.cfg.unify.prompt_template.as_ref().map(|p| self.cfg.resolve(p)));
        let key = (self.cfg.unify.clone(), self.cfg.backends.captioner.clone());
        self.run_stage("unify", inputs, &key, &[UNIFIED], |h| {
            let corpus = h.load_corpus()?;
            let prompt = h.unify_prompt()?;
            let has_images = corpus.modality_counts().image > 0;
            let captioner: Arc<dyn Captioner> = if has_images {
                backends::open_captioner(&h.backend_source(&h.cfg.backends.captioner, "captioner")?)?
            } else {
                Arc::new(backends::mock::MockCaptioner::down())
            };
            let cache = CaptionCache::open(&h.path(CAPTION_CACHE)).map_err(|e| HarnessError::Data(e.to_string()))?;
            let options = UnifyOptions {
                description_budget: h.cfg.unify.description_budget,
            };
            let outcome = unify::unify_pool(&corpus, &prompt, captioner.as_ref(), &cache, options);
            write_jsonl(&h.path(UNIFIED), outcome.unified.values())?;
            let errors: Vec<(String, String)> =
                outcome.errors.iter().map(|(k, e)| (k.clone(), e.to_string())).collect();
            let warnings = h.write_errors("unify", &errors)?;
            let fallbacks = outcome
                .unified
                .values()
                .filter(|u| u.provenance == unify::Provenance::CaptionFallback)
                .count();
            Ok((
                warnings,
                format!(
                    "{} documents unified, {} captioner calls, {} caption fallbacks",
                    outcome.unified.len(),
                    outcome.backend_calls,
                    fallbacks
                ),
            ))
        })
    }

    /// Trains the lexical ranker on training-split pools; needs `corpus/`.
    pub fn train_ranker(&mut self) -> Result<StageOutcome, HarnessError> {
        if self.cfg.backends.scorer != LEXICAL_SCORER {
            return Ok(StageOutcome {
                stage: "train-ranker".into(),
                skipped: true,
                warnings: 0,
                message: format!("scorer '{}' is external; nothing to train", self.cfg.backends.scorer),
            });
        }
        let inputs = self.corpus_files()?;
        let tc = self.cfg.stage1.train_config();
        self.run_stage("train-ranker", inputs, &tc, &[RANKER], |h| {
            let corpus = h.load_corpus()?;
            let pairs = training_pairs(&corpus);
            let model = LexicalScorerModel::train(&pairs, &tc).map_err(|e| HarnessError::Data(e.to_string()))?;
            model
                .save(&h.path(RANKER))
                .map_err(|e| HarnessError::io(&h.path(RANKER), e))?;
            let last = model.training_log.last().map(|l| l.mean_loss).unwrap_or(f64::NAN);
            Ok((0, format!("{} pairs, final mean loss {last:.4}", pairs.len())))
        })
    }

    /// Scores every question's pool; needs `corpus/` and the ranker.
    pub fn score(&mut self) -> Result<StageOutcome, HarnessError> {
        let mut inputs = self.corpus_files()?;
        if self.cfg.backends.scorer == LEXICAL_SCORER {
            self.require(RANKER, "train-ranker")?;
        }
        inputs.extend(self.scorer_inputs());
        let key = (self.cfg.backends.scorer.clone(), self.cfg.stage1.batch_size);
        self.run_stage("score", inputs, &key, &[SCORED], |h| {
            let corpus = h.load_corpus()?;
            let scorer = h.open_scorer()?;
            let batch = h.cfg.stage1.batch_size;
            let results: Vec<_> = corpus
                .questions
                .par_iter()
                .map(|q| score_question(&corpus, q, scorer.as_ref(), batch))
                .collect();
            let total = results.len();
            let unavailable = results.iter().filter(|r| r.2).count();
            if total > 0 && unavailable == total {
                let first = results[0].1.first().map(|e| e.1.clone()).unwrap_or_default();
                return Err(HarnessError::Backend(format!(
                    "scorer failed on every question: {first}"
                )));
            }
            let errors: Vec<(String, String)> = results.iter().flat_map(|r| r.1.clone()).collect();
            let rows: Vec<&ScoredQuestion> = results.iter().map(|r| &r.0).collect();
            write_jsonl(&h.path(SCORED), rows)?;
            let warnings = h.write_errors("score", &errors)?;
            Ok((warnings, format!("{total} questions scored")))
        })
    }

    /// Picks the stage-1 selection threshold on the dev split; needs `scored.jsonl`.
    pub fn tune_threshold(&mut self) -> Result<StageOutcome, HarnessError> {
        let mut inputs = self.corpus_files()?;
        inputs.push(self.require(SCORED, "score")?);
        let setting = self.cfg.stage1.threshold;
        self.run_stage("tune-threshold", inputs, &setting, &[THRESHOLD], |h| {
            let corpus = h.load_corpus()?;
            let scored = h.load_scored()?;
            let dev: Vec<QuestionScores> = corpus::split_view(&corpus, corpus::Split::Dev)
                .into_iter()
                .filter(|q| !q.gold_doc_keys.is_empty())
                .filter_map(|q| {
                    scored.get(&q.q_key).map(|s| QuestionScores {
                        q_key: q.q_key.clone(),
                        scored: s.pairs(),
                        gold: q.gold_set(),
                    })
                })
                .collect();
            let report = match setting {
                ThresholdSetting::Fixed(t) => ThresholdReport {
                    threshold: t,
                    dev_f1: eval::mean(
                        dev.iter()
                            .map(|q| eval::retrieval_f1(&pointwise::select_above(&q.scored, t), &q.gold).f1),
                    )
                    .unwrap_or(0.0),
                    sweep: Vec::new(),
                },
                ThresholdSetting::Tune if dev.is_empty() => {
                    log::warn!("no scored dev questions with gold evidence; using threshold 0.5");
                    ThresholdReport {
                        threshold: 0.5,
                        dev_f1: 0.0,
                        sweep: Vec::new(),
                    }
                }
                ThresholdSetting::Tune => pointwise::tune_threshold(&dev),
            };
            write_json(&h.path(THRESHOLD), &report)?;
            Ok((
                0,
                format!(
                    "threshold {} (dev retrieval F1 {:.4} over {} questions)",
                    report.threshold,
                    report.dev_f1,
                    dev.len()
                ),
            ))
        })
    }

    fn prompt_options(&self) -> PromptOptions {
        PromptOptions {
            token_budget: self.cfg.stage2.token_budget,
            inflation: self.cfg.stage2.token_inflation,
            mode: self.cfg.stage2.target,
        }
    }

    fn stage2_inputs(&self) -> Result<Vec<PathBuf>, HarnessError> {
        let mut inputs = self.corpus_files()?;
        inputs.push(self.require(SCORED, "score")?);
        inputs.push(self.require(UNIFIED, "unify")?);
        Ok(inputs)
    }

    /// Writes the instruction-tuning file; needs `scored.jsonl` and `unified.jsonl`.
    pub fn build_sft(&mut self) -> Result<StageOutcome, HarnessError> {
        let inputs = self.stage2_inputs()?;
        let options = SftOptions {
            perms_per_question: self.cfg.stage2.perms_train,
            seed: self.seed,
            prompt: self.prompt_options(),
        };
        let k = self.cfg.stage1.k;
        self.run_stage("build-sft", inputs, &(options, k), &[SFT, SFT_REPORT], |h| {
            let report = h.write_sft(&h.path(SFT), &options, k)?;
            write_json(&h.path(SFT_REPORT), &report)?;
            let warnings = h.write_errors("build-sft", &report.failures)?;
            Ok((
                warnings,
                format!("{} examples from {} questions", report.examples, report.questions),
            ))
        })
    }

    fn write_sft(&self, path: &Path, options: &SftOptions, k: usize) -> Result<genrank::SftReport, HarnessError> {
        let corpus = self.load_corpus()?;
        let scored = self.load_scored()?;
        let unified = self.load_unified()?;
        let rankings: BTreeMap<String, Vec<String>> = scored.iter().map(|(q, s)| (q.clone(), s.top_keys(k))).collect();
        let ds = genrank::emit_sft_dataset(&corpus, &rankings, &unified, options);
        genrank::write_sft_dataset(path, &ds.examples).map_err(|e| HarnessError::io(path, e))?;
        Ok(ds.report)
    }

    fn rerank_options(&self, mode: genrank::TargetMode, seed: u64) -> RerankOptions {
        RerankOptions {
            inference_perms: self.cfg.stage2.inference_perms,
            seed,
            prompt: PromptOptions {
                mode,
                ..self.prompt_options()
            },
        }
    }

    /// Reranks the evaluation split; needs `scored.jsonl` and `unified.jsonl`.
    pub fn rerank(&mut self) -> Result<StageOutcome, HarnessError> {
        let mut inputs = self.stage2_inputs()?;
        inputs.extend(self.backend_file(&self.cfg.backends.generator));
        let options = self.rerank_options(self.cfg.stage2.target, self.seed);
        let key = (
            options,
            self.cfg.stage1.k,
            self.cfg.stage2.eval_split,
            self.cfg.backends.generator.clone(),
        );
        self.run_stage("rerank", inputs, &key, &[RESULTS], |h| {
            let generator = h.open_generator(&h.cfg.backends.generator)?;
            let run = h.rerank_split(generator.as_ref(), &options, h.cfg.stage1.k)?;
            write_jsonl(&h.path(RESULTS), &run.records)?;
            let warnings = h.write_errors("rerank", &run.errors)?;
            Ok((warnings, format!("{} questions reranked", run.records.len())))
        })
    }

    pub(crate) fn rerank_split(
        &self,
        generator: &dyn Generator,
        options: &RerankOptions,
        k: usize,
    ) -> Result<RerankRun, HarnessError> {
        let corpus = self.load_corpus()?;
        let scored = self.load_scored()?;
        let unified = self.load_unified()?;
        rerank_questions(
            &corpus,
            &scored,
            &unified,
            generator,
            options,
            k,
            self.cfg.stage2.eval_split,
        )
    }

    fn keywords(&self) -> Result<Option<KeywordSidecar>, HarnessError> {
        self.cfg
            .corpus
            .keywords
            .as_ref()
            .map(|p| read_json(&self.cfg.resolve(p)))
            .transpose()
    }

    fn fluency(&self) -> Result<Option<Box<dyn FluencyScorer>>, HarnessError> {
        match &self.cfg.backends.fluency {
            None => Ok(None),
            Some(spec) => {
                let s = backends::open_scorer(&self.backend_source(spec, "fluency")?)?;
                Ok(Some(Box::new(ScorerFluency(s))))
            }
        }
    }

    pub(crate) fn evaluate(&self, records: &[RerankRecord], options: EvalOptions) -> Result<EvalReport, HarnessError> {
        let corpus = self.load_corpus()?;
        let keywords = self.keywords()?;
        let fluency = self.fluency()?;
        Ok(eval::evaluate_run(
            records,
            &corpus,
            keywords.as_ref(),
            fluency.as_deref(),
            options,
        ))
    }

    /// Scores the results file; needs `results.jsonl`.
    pub fn eval(&mut self) -> Result<StageOutcome, HarnessError> {
        let mut inputs = self.corpus_files()?;
        inputs.push(self.require(RESULTS, "rerank")?);
        inputs.extend(self.cfg.corpus.keywords.as_ref().map(|p| self.cfg.resolve(p)));
        inputs.extend(
            self.cfg
                .backends
                .fluency
                .as_deref()
                .map(|s| self.backend_file(s))
                .unwrap_or_default(),
        );
        let key = self.cfg.backends.fluency.clone();
        self.run_stage("eval", inputs, &key, &[EVAL_REPORT, EVAL_TABLE], |h| {
            let records = h.load_results()?;
            let report = h.evaluate(&records, EvalOptions::default())?;
            write_json(&h.path(EVAL_REPORT), &report)?;
            let table = eval::render_table(&report);
            std::fs::write(h.path(EVAL_TABLE), &table).map_err(|e| HarnessError::io(&h.path(EVAL_TABLE), e))?;
            Ok((0, format!("\n{table}")))
        })
    }

    /// All stages from ingest to eval.
    pub fn run_all(&mut self) -> Result<Vec<StageOutcome>, HarnessError> {
        Ok(vec![
            self.ingest()?,
            self.unify()?,
            self.train_ranker()?,
            self.score()?,
            self.tune_threshold()?,
            self.build_sft()?,
            self.rerank()?,
            self.eval()?,
        ])
    }
}

/// Labelled (question, document) pairs from training-split pools.
pub fn training_pairs(corpus: &Corpus) -> Vec<TrainingPair> {
    corpus::split_view(corpus, corpus::Split::Train)
        .into_iter()
        .flat_map(|q| {
            corpus.pool(q).into_iter().map(move |d| TrainingPair {
                question: q.question.clone(),
                document: pointwise::document_segment(d),
                label: u8::from(q.is_gold(&d.doc_key)),
            })
        })
        .collect()
}

fn score_question(
    corpus: &Corpus,
    q: &QuestionRecord,
    scorer: &dyn Scorer,
    batch: usize,
) -> (ScoredQuestion, Vec<(String, String)>, bool) {
    let pool = corpus.pool(q);
    let (scored, errors, unavailable) = match pointwise::score_documents(q, &pool, scorer, batch) {
        Ok(s) => (s, Vec::new(), false),
        Err(PointwiseError::PartialBatch { scored, statuses, .. }) => {
            let errs = statuses
                .into_iter()
                .filter_map(|s| s.error.map(|e| (format!("{}/{}", q.q_key, s.doc_key), e.to_string())))
                .collect();
            (scored, errs, false)
        }
        Err(e) => (Vec::new(), vec![(q.q_key.clone(), e.to_string())], true),
    };
    let order = pointwise::topk(&scored, scored.len());
    let by_key: BTreeMap<&str, f64> = scored.iter().map(|s| (s.doc_key.as_str(), s.score)).collect();
    let ranking = order
        .iter()
        .map(|k| RankedDoc {
            doc_key: k.clone(),
            score: by_key[k.as_str()],
        })
        .collect();
    (
        ScoredQuestion {
            q_key: q.q_key.clone(),
            scorer_id: scorer.id(),
            ranking,
        },
        errors,
        unavailable,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RerankRun {
    pub records: Vec<RerankRecord>,
    pub errors: Vec<(String, String)>,
    /// Questions whose ranking was shorter than `k`.
    pub capped: usize,
}

pub(crate) fn rerank_questions(
    corpus: &Corpus,
    scored: &BTreeMap<String, ScoredQuestion>,
    unified: &UnifiedMap,
    generator: &dyn Generator,
    options: &RerankOptions,
    k: usize,
    split: corpus::Split,
) -> Result<RerankRun, HarnessError> {
    let questions = corpus::split_view(corpus, split);
    let outcomes: Vec<(RerankRecord, Option<String>, bool, bool)> = questions
        .par_iter()
        .map(|q| {
            let Some(s) = scored.get(&q.q_key) else {
                let rec = empty_record(&q.q_key);
                return (rec, Some("no stage-1 ranking".to_string()), false, false);
            };
            let selected = s.top_keys(k);
            let capped = selected.len() < k;
            match genrank::rerank_question(q, &selected, unified, generator, options) {
                Ok(r) => {
                    let backend_down =
                        !r.backend_errors.is_empty() && r.backend_errors.len() == r.per_permutation.len();
                    let err = r.all_failed.then(|| {
                        if backend_down {
                            format!("generator failed: {}", r.backend_errors[0])
                        } else {
                            let raw: Vec<&str> = r.per_permutation.iter().map(|o| o.raw_text.as_str()).collect();
                            format!("no parsable output: {raw:?}")
                        }
                    });
                    (RerankRecord::from(&r), err, backend_down, capped)
                }
                Err(e) => (empty_record(&q.q_key), Some(e.to_string()), false, capped),
            }
        })
        .collect();
    if !outcomes.is_empty() && outcomes.iter().all(|o| o.2) {
        let msg = outcomes[0].1.clone().unwrap_or_default();
        return Err(HarnessError::Backend(msg));
    }
    let capped = outcomes.iter().filter(|o| o.3).count();
    let errors = outcomes
        .iter()
        .filter_map(|o| o.1.as_ref().map(|e| (o.0.q_key.clone(), e.clone())))
        .collect();
    Ok(RerankRun {
        records: outcomes.into_iter().map(|o| o.0).collect(),
        errors,
        capped,
    })
}

fn empty_record(q_key: &str) -> RerankRecord {
    RerankRecord {
        q_key: q_key.to_string(),
        predicted_doc_keys: Vec::new(),
        answer: String::new(),
        parse_statuses: Vec::new(),
    }
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(p: &Path) -> Result<Vec<T>, HarnessError> {
    crate::jsonl::read(p)
        .map_err(|e| HarnessError::io(p, e))?
        .map_err(|e| HarnessError::Data(format!("{}:{}: {}", p.display(), e.line, e.reason)))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", p.display())))
}

pub(crate) fn write_jsonl<T: Serialize>(p: &Path, records: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let records: Vec<T> = records.into_iter().collect();
    crate::jsonl::write(p, &records).map_err(|e| HarnessError::io(p, e))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(p: &Path, value: &T) -> Result<(), HarnessError> {
    crate::jsonl::write_json(p, value).map_err(|e| HarnessError::io(p, e))
}
