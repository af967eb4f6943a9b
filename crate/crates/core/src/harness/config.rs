use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::Split;
use crate::genrank::{TargetMode, DEFAULT_PERMS_PER_QUESTION, DEFAULT_TOKEN_BUDGET, DEFAULT_TOKEN_INFLATION};
use crate::pointwise::TrainConfig;
use crate::unify::DEFAULT_DESCRIPTION_BUDGET;

pub const MIN_TOKEN_BUDGET: usize = 256;
/// Scorer spec selecting the in-process lexical ranker produced by `train-ranker`.
pub const LEXICAL_SCORER: &str = "lexical";

/// `"tune"` or a fixed probability.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThresholdSetting {
    #[default]
    Tune,
    Fixed(f64),
}

impl Serialize for ThresholdSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThresholdSetting::Tune => s.serialize_str("tune"),
            ThresholdSetting::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ThresholdSetting::Fixed(v)),
            Raw::Str(s) if s == "tune" => Ok(ThresholdSetting::Tune),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "threshold must be \"tune\" or a number, got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Directory holding `documents.jsonl` and `questions.jsonl`.
    pub dir: Option<PathBuf>,
    /// Raw benchmark file, converted with `adapter` when `dir` is not given.
    pub raw: Option<PathBuf>,
    pub adapter: Option<PathBuf>,
    /// Keyword sidecar `{q_key: [[kw, ...], ...]}` for keyword accuracy.
    pub keywords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsSection {
    pub captioner: String,
    /// `lexical`, `mock:<file>` or `http:<file>`.
    pub scorer: String,
    pub generator: String,
    pub fluency: Option<String>,
}

impl Default for BackendsSection {
    fn default() -> Self {
        BackendsSection {
            captioner: String::new(),
            scorer: LEXICAL_SCORER.into(),
            generator: String::new(),
            fluency: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnifySection {
    /// Plain-text template with `{image}` and `{caption}`; the built-in one otherwise.
    pub prompt_template: Option<PathBuf>,
    pub description_budget: usize,
}

impl Default for UnifySection {
    fn default() -> Self {
        UnifySection {
            prompt_template: None,
            description_budget: DEFAULT_DESCRIPTION_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Section {
    pub k: usize,
    pub threshold: ThresholdSetting,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub feature_dim: usize,
    pub hash_seed: u64,
}

impl Default for Stage1Section {
    fn default() -> Self {
        let t = TrainConfig::default();
        Stage1Section {
            k: 15,
            threshold: ThresholdSetting::Tune,
            batch_size: 16,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            feature_dim: t.feature_dim,
            hash_seed: t.hash_seed,
        }
    }
}

impl Stage1Section {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            hash_seed: self.hash_seed,
            feature_dim: self.feature_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Section {
    pub perms_train: usize,
    pub inference_perms: usize,
    pub token_budget: usize,
    pub token_inflation: f64,
    pub target: TargetMode,
    /// Split reranked and evaluated by `rerank`, `eval` and the experiments.
    pub eval_split: Split,
}

impl Default for Stage2Section {
    fn default() -> Self {
        Stage2Section {
            perms_train: DEFAULT_PERMS_PER_QUESTION,
            inference_perms: 1,
            token_budget: DEFAULT_TOKEN_BUDGET,
            token_inflation: DEFAULT_TOKEN_INFLATION,
            target: TargetMode::Full,
            eval_split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsSection {
    pub sweep_k: Vec<usize>,
    /// Generator per ablation variant (`full`, `no_perm`, `retr_only`, `qa_only`);
    /// variants not listed use `backends.generator`.
    pub ablation_generators: std::collections::BTreeMap<String, String>,
}

impl Default for ExperimentsSection {
    fn default() -> Self {
        ExperimentsSection {
            sweep_k: vec![1, 5, 10, 15, 20],
            ablation_generators: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusSection,
    pub backends: BackendsSection,
    pub unify: UnifySection,
    pub stage1: Stage1Section,
    pub stage2: Stage2Section,
    pub experiments: ExperimentsSection,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    /// Directory relative paths resolve against; the config file's directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: CorpusSection::default(),
            backends: BackendsSection::default(),
            unify: UnifySection::default(),
            stage1: Stage1Section::default(),
            stage2: Stage2Section::default(),
            experiments: ExperimentsSection::default(),
            seeds: vec![0],
            out: None,
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.stage1.k < 1 {
            return bad("stage1.k must be at least 1".into());
        }
        if self.stage2.token_budget < MIN_TOKEN_BUDGET {
            return bad(format!("stage2.token_budget must be at least {MIN_TOKEN_BUDGET}"));
        }
        if self.stage2.perms_train < 1 || self.stage2.inference_perms < 1 {
            return bad("permutation counts must be at least 1".into());
        }
        if !(self.stage2.token_inflation.is_finite() && self.stage2.token_inflation > 0.0) {
            return bad("stage2.token_inflation must be positive".into());
        }
        if let ThresholdSetting::Fixed(t) = self.stage1.threshold {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("stage1.threshold {t} is outside [0, 1]"));
            }
        }
        if self.seeds.is_empty() {
            return bad("seeds must list at least one seed".into());
        }
        if self.stage1.batch_size == 0 || self.stage1.feature_dim == 0 {
            return bad("stage1.batch_size and stage1.feature_dim must be positive".into());
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn seed(&self) -> u64 {
        self.seeds[0]
    }
}
