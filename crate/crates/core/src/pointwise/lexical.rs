//! Desk-scale pointwise scorer trained with the same cross-entropy objective a
//! neural ranker would use.
//!
//! Features are hashed query-token × document-token co-occurrences plus one
//! shared feature counting identical token pairs, L2-normalized per pair. The
//! model is logistic regression fit by full-batch gradient descent, so the
//! training loss is non-increasing for any learning rate up to 4 (the feature
//! vectors, bias included, have squared norm at most 2).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rank_loss, split_rank_prompt, PointwiseError};
use crate::backends::{BackendError, Scorer};
use crate::text::{fnv1a, word_tokens};

pub const DEFAULT_FEATURE_DIM: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub question: String,
    pub document: String,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hash_seed: u64,
    pub feature_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1.0,
            hash_seed: 17,
            feature_dim: DEFAULT_FEATURE_DIM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalScorerModel {
    pub feature_dim: usize,
    pub hash_seed: u64,
    pub bias: f64,
    pub weights: Vec<f64>,
    pub training_log: Vec<EpochLoss>,
}

/// On-disk form: weights stored sparsely as `[index, value]` pairs.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    feature_dim: usize,
    hash_seed: u64,
    bias: f64,
    weights: Vec<(usize, f64)>,
    training_log: Vec<EpochLoss>,
}

pub type SparseFeatures = Vec<(usize, f64)>;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LexicalScorerModel {
    pub fn zeros(feature_dim: usize, hash_seed: u64) -> Self {
        LexicalScorerModel {
            feature_dim,
            hash_seed,
            bias: 0.0,
            weights: vec![0.0; feature_dim],
            training_log: Vec::new(),
        }
    }

    pub fn features(&self, question: &str, document: &str) -> SparseFeatures {
        featurize(self.hash_seed, self.feature_dim, question, document)
    }

    pub fn logit(&self, features: &[(usize, f64)]) -> f64 {
        self.bias + features.iter().map(|(i, v)| self.weights[*i] * v).sum::<f64>()
    }

    pub fn probability(&self, question: &str, document: &str) -> f64 {
        sigmoid(self.logit(&self.features(question, document)))
    }

    /// Mean loss over `data` and its gradient: `(dL/dweights, dL/dbias)`.
    pub fn loss_and_gradient(&self, data: &[(SparseFeatures, u8)]) -> (f64, Vec<f64>, f64) {
        let mut grad = vec![0.0; self.feature_dim];
        let mut grad_bias = 0.0;
        let mut loss = 0.0;
        let n = data.len().max(1) as f64;
        for (x, y) in data {
            let p = sigmoid(self.logit(x));
            loss += rank_loss(p, *y);
            let r = (p - f64::from(*y)) / n;
            for (i, v) in x {
                grad[*i] += r * v;
            }
            grad_bias += r;
        }
        (loss / n, grad, grad_bias)
    }

    pub fn mean_loss(&self, data: &[(SparseFeatures, u8)]) -> f64 {
        let n = data.len().max(1) as f64;
        data.iter()
            .map(|(x, y)| rank_loss(sigmoid(self.logit(x)), *y))
            .sum::<f64>()
            / n
    }

    pub fn train(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<Self, PointwiseError> {
        let labels: BTreeSet<u8> = pairs.iter().map(|p| p.label.min(1)).collect();
        if labels.len() < 2 {
            return Err(PointwiseError::DegenerateData);
        }
        let mut model = LexicalScorerModel::zeros(cfg.feature_dim.max(1), cfg.hash_seed);
        let data: Vec<(SparseFeatures, u8)> = pairs
            .iter()
            .map(|p| (model.features(&p.question, &p.document), p.label.min(1)))
            .collect();
        for epoch in 1..=cfg.epochs {
            let (_, grad, grad_bias) = model.loss_and_gradient(&data);
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
            model.bias -= cfg.learning_rate * grad_bias;
            model.training_log.push(EpochLoss {
                epoch,
                mean_loss: model.mean_loss(&data),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let file = ModelFile {
            feature_dim: self.feature_dim,
            hash_seed: self.hash_seed,
            bias: self.bias,
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i, *w))
                .collect(),
            training_log: self.training_log.clone(),
        };
        crate::jsonl::write_json(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self, PointwiseError> {
        let text = std::fs::read_to_string(path).map_err(|e| PointwiseError::BadModel(e.to_string()))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| PointwiseError::BadModel(e.to_string()))?;
        let mut model = LexicalScorerModel::zeros(file.feature_dim, file.hash_seed);
        for (i, w) in file.weights {
            *model
                .weights
                .get_mut(i)
                .ok_or_else(|| PointwiseError::BadModel(format!("weight index {i} out of range")))? = w;
        }
        model.bias = file.bias;
        model.training_log = file.training_log;
        Ok(model)
    }
}

fn featurize(seed: u64, dim: usize, question: &str, document: &str) -> SparseFeatures {
    let q: BTreeSet<String> = word_tokens(question).into_iter().filter(|t| t != "image").collect();
    let d: BTreeSet<String> = word_tokens(document).into_iter().filter(|t| t != "image").collect();
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    let match_idx = (fnv1a(seed, b"\x01match") % dim as u64) as usize;
    let mut buf = Vec::new();
    for qt in &q {
        for dt in &d {
            buf.clear();
            buf.extend_from_slice(qt.as_bytes());
            buf.push(0);
            buf.extend_from_slice(dt.as_bytes());
            let idx = (fnv1a(seed, &buf) % dim as u64) as usize;
            *acc.entry(idx).or_default() += 1.0;
            if qt == dt {
                *acc.entry(match_idx).or_default() += 1.0;
            }
        }
    }
    let norm = acc.values().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Vec::new();
    }
    acc.into_iter().map(|(i, v)| (i, v / norm)).collect()
}

impl Scorer for LexicalScorerModel {
    fn id(&self) -> String {
        format!("lexical-{:x}", self.hash_seed)
    }

    fn score(&self, prompt: &str) -> Result<f64, BackendError> {
        let (q, d) = split_rank_prompt(prompt).ok_or_else(|| BackendError::Config("not a rank prompt".into()))?;
        Ok(self.probability(q, d))
    }
}
