//! Canonical data model for questions and multi-modal candidate documents.
//!
//! A corpus is stored as two JSONL files, `documents.jsonl` and
//! `questions.jsonl`. Benchmark-specific layouts are converted into this form
//! by [`adapter::adapt_dataset`], so everything downstream is dataset-agnostic.
//!
//! Candidate pools follow the distractor setting: each question carries its
//! gold evidence plus hard negatives, never a whole open corpus. Pools may share
//! documents across questions.

pub mod adapter;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl;

pub use adapter::{adapt_dataset, AdaptReport, AdapterConfig, FactSource};

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const QUESTIONS_FILE: &str = "questions.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "val" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

/// One retrievable unit: a titled text passage or a captioned image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_key: String,
    pub modality: Modality,
    pub title_or_caption: String,
    /// Empty for images until unification supplies a description.
    #[serde(default)]
    pub body_text: String,
    #[serde(default)]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub label: Option<u8>,
}

impl Document {
    pub fn text(key: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Document {
            doc_key: key.into(),
            modality: Modality::Text,
            title_or_caption: title.into(),
            body_text: body.into(),
            image_ref: None,
            label: None,
        }
    }

    pub fn image(key: impl Into<String>, caption: impl Into<String>, image_ref: impl Into<String>) -> Self {
        Document {
            doc_key: key.into(),
            modality: Modality::Image,
            title_or_caption: caption.into(),
            body_text: String::new(),
            image_ref: Some(image_ref.into()),
            label: None,
        }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    fn check(&self) -> Result<(), String> {
        if self.doc_key.is_empty() {
            return Err("empty doc_key".into());
        }
        match (self.modality, &self.image_ref) {
            (Modality::Image, None) => return Err("image document without image_ref".into()),
            (Modality::Text, Some(_)) => return Err("text document with image_ref".into()),
            _ => {}
        }
        if let Some(l) = self.label {
            if l > 1 {
                return Err(format!("label must be 0 or 1, got {l}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub q_key: String,
    pub question: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    pub candidate_pool: Vec<String>,
    #[serde(default)]
    pub gold_doc_keys: Vec<String>,
    pub split: Split,
}

impl QuestionRecord {
    pub fn is_gold(&self, doc_key: &str) -> bool {
        self.gold_doc_keys.iter().any(|g| g == doc_key)
    }

    pub fn gold_set(&self) -> std::collections::BTreeSet<String> {
        self.gold_doc_keys.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub name: String,
    pub documents: usize,
    pub text_documents: usize,
    pub image_documents: usize,
    pub questions: usize,
    pub questions_per_split: BTreeMap<Split, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Insertion order is file order, so writing back preserves it.
    pub documents: IndexMap<String, Document>,
    pub questions: Vec<QuestionRecord>,
    pub meta: CorpusMeta,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record in {file} at line {line}: {reason}")]
    MalformedRecord { file: String, line: usize, reason: String },
    #[error("question references unknown document '{0}'")]
    DanglingDocKey(String),
    #[error("duplicate key '{0}'")]
    DuplicateKey(String),
    #[error("raw field '{0}' named in the adapter mapping is absent")]
    MissingField(String),
    #[error("invalid adapter configuration: {0}")]
    BadMapping(String),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModalityCounts {
    pub text: usize,
    pub image: usize,
}

impl Corpus {
    /// Builds a corpus and checks every invariant. Documents keep the given order.
    pub fn new(
        name: impl Into<String>,
        documents: Vec<Document>,
        questions: Vec<QuestionRecord>,
    ) -> Result<Self, CorpusError> {
        let mut map = IndexMap::with_capacity(documents.len());
        for (idx, d) in documents.into_iter().enumerate() {
            d.check().map_err(|reason| CorpusError::MalformedRecord {
                file: DOCUMENTS_FILE.into(),
                line: idx + 1,
                reason,
            })?;
            if map.contains_key(&d.doc_key) {
                return Err(CorpusError::DuplicateKey(d.doc_key));
            }
            map.insert(d.doc_key.clone(), d);
        }
        let mut seen = HashSet::new();
        for (idx, q) in questions.iter().enumerate() {
            if !seen.insert(q.q_key.as_str()) {
                return Err(CorpusError::DuplicateKey(q.q_key.clone()));
            }
            check_question(q, &map).map_err(|e| match e {
                QuestionIssue::Dangling(k) => CorpusError::DanglingDocKey(k),
                QuestionIssue::Other(reason) => CorpusError::MalformedRecord {
                    file: QUESTIONS_FILE.into(),
                    line: idx + 1,
                    reason,
                },
            })?;
        }
        let mut corpus = Corpus {
            documents: map,
            questions,
            meta: CorpusMeta::default(),
        };
        corpus.meta = corpus.recompute_meta(name.into());
        Ok(corpus)
    }

    pub fn recompute_meta(&self, name: String) -> CorpusMeta {
        let counts = self.modality_counts();
        let mut per_split = BTreeMap::new();
        for q in &self.questions {
            *per_split.entry(q.split).or_insert(0) += 1;
        }
        CorpusMeta {
            name,
            documents: self.documents.len(),
            text_documents: counts.text,
            image_documents: counts.image,
            questions: self.questions.len(),
            questions_per_split: per_split,
        }
    }

    pub fn modality_counts(&self) -> ModalityCounts {
        let mut c = ModalityCounts::default();
        for d in self.documents.values() {
            match d.modality {
                Modality::Text => c.text += 1,
                Modality::Image => c.image += 1,
            }
        }
        c
    }

    pub fn document(&self, key: &str) -> Option<&Document> {
        self.documents.get(key)
    }

    pub fn question(&self, q_key: &str) -> Option<&QuestionRecord> {
        self.questions.iter().find(|q| q.q_key == q_key)
    }

    /// Candidate documents of a question, in pool order.
    pub fn pool(&self, q: &QuestionRecord) -> Vec<&Document> {
        q.candidate_pool.iter().filter_map(|k| self.documents.get(k)).collect()
    }
}

enum QuestionIssue {
    Dangling(String),
    Other(String),
}

fn check_question(q: &QuestionRecord, docs: &IndexMap<String, Document>) -> Result<(), QuestionIssue> {
    if q.q_key.is_empty() {
        return Err(QuestionIssue::Other("empty q_key".into()));
    }
    if q.candidate_pool.is_empty() {
        return Err(QuestionIssue::Other(format!(
            "question '{}' has an empty candidate pool",
            q.q_key
        )));
    }
    let mut pool = HashSet::new();
    for k in &q.candidate_pool {
        let Some(doc) = docs.get(k) else {
            return Err(QuestionIssue::Dangling(k.clone()));
        };
        if !pool.insert(k.as_str()) {
            return Err(QuestionIssue::Other(format!(
                "question '{}' lists '{}' twice in its pool",
                q.q_key, k
            )));
        }
        if q.split != Split::Test && doc.label.is_none() {
            return Err(QuestionIssue::Other(format!(
                "document '{}' in a {:?} pool has no label",
                k, q.split
            )));
        }
    }
    let mut gold = HashSet::new();
    for g in &q.gold_doc_keys {
        if !docs.contains_key(g) {
            return Err(QuestionIssue::Dangling(g.clone()));
        }
        if !pool.contains(g.as_str()) {
            return Err(QuestionIssue::Other(format!(
                "gold document '{}' of question '{}' is not in its pool",
                g, q.q_key
            )));
        }
        if !gold.insert(g.as_str()) {
            return Err(QuestionIssue::Other(format!("duplicate gold document '{g}'")));
        }
    }
    if q.split != Split::Test {
        if q.gold_doc_keys.is_empty() {
            return Err(QuestionIssue::Other(format!(
                "{:?} question '{}' has no gold documents",
                q.split, q.q_key
            )));
        }
        if q.gold_answers.is_empty() {
            return Err(QuestionIssue::Other(format!(
                "{:?} question '{}' has no gold answer",
                q.split, q.q_key
            )));
        }
    }
    Ok(())
}

/// Loads `documents.jsonl` and `questions.jsonl` from `dir`.
pub fn load_canonical(dir: &Path) -> Result<Corpus, CorpusError> {
    load_canonical_files(&dir.join(DOCUMENTS_FILE), &dir.join(QUESTIONS_FILE))
}

pub fn load_canonical_files(documents: &Path, questions: &Path) -> Result<Corpus, CorpusError> {
    let docs: Vec<Document> = read_records(documents)?;
    let qs: Vec<QuestionRecord> = read_records(questions)?;
    let name = documents
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::new(name, docs, qs)
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    jsonl::read(path)
        .map_err(|e| CorpusError::io(path, e))?
        .map_err(|e| CorpusError::MalformedRecord {
            file,
            line: e.line,
            reason: e.reason,
        })
}

pub fn write_canonical(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    let docs = dir.join(DOCUMENTS_FILE);
    jsonl::write(&docs, corpus.documents.values()).map_err(|e| CorpusError::io(&docs, e))?;
    let qs = dir.join(QUESTIONS_FILE);
    jsonl::write(&qs, &corpus.questions).map_err(|e| CorpusError::io(&qs, e))?;
    Ok(())
}

/// Questions of one split, in corpus order.
pub fn split_view(corpus: &Corpus, split: Split) -> Vec<&QuestionRecord> {
    corpus.questions.iter().filter(|q| q.split == split).collect()
}
