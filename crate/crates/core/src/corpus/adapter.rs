//! Benchmark JSON → canonical corpus conversion.
//!
//! The mapping from raw fields to canonical fields is data, not code: an
//! [`AdapterConfig`] names where the question, answers and each evidence list
//! live. Positive lists produce gold documents (label 1), negative lists produce
//! distractors (label 0). Modalities other than text and image are dropped and
//! counted.

use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, CorpusError, Document, Modality, QuestionRecord, Split};

/// Field mapping for one raw dataset layout.
///
/// Field names are either plain keys of the raw object or JSON pointers (a
/// leading `/`) for nested values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub dataset_name: String,
    /// Field holding the question id. When absent, the key of a top-level JSON
    /// object is used, or the zero-padded record index for arrays and JSONL.
    #[serde(default)]
    pub question_key_field: Option<String>,
    pub question_field: String,
    /// A string or an array of strings or objects.
    pub answers_field: String,
    /// Field inside answer objects, when answers are objects.
    #[serde(default)]
    pub answer_item_field: Option<String>,
    #[serde(default)]
    pub split_field: Option<String>,
    /// Raw split name → canonical split. Unmapped names are parsed directly.
    #[serde(default)]
    pub split_map: BTreeMap<String, Split>,
    #[serde(default = "default_split")]
    pub default_split: Split,
    #[serde(default)]
    pub question_type_field: Option<String>,
    /// When non-empty, only questions whose type is listed survive.
    #[serde(default)]
    pub keep_question_types: Vec<String>,
    pub fact_sources: Vec<FactSource>,
    #[serde(default = "default_text_prefix")]
    pub text_key_prefix: String,
    #[serde(default = "default_image_prefix")]
    pub image_key_prefix: String,
}

fn default_split() -> Split {
    Split::Train
}
fn default_text_prefix() -> String {
    "txt:".into()
}
fn default_image_prefix() -> String {
    "img:".into()
}

/// One evidence list in the raw record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSource {
    pub field: String,
    /// "text", "image", or anything else (e.g. "table"), which is skipped.
    pub modality: String,
    pub positive: bool,
    pub id_field: String,
    /// Title for text facts, caption for images.
    pub title_field: String,
    /// Body text; ignored for images.
    #[serde(default)]
    pub body_field: Option<String>,
    /// Image location; required for image sources.
    #[serde(default)]
    pub image_ref_field: Option<String>,
    /// Per-fact modality override, for mixed lists.
    #[serde(default)]
    pub modality_field: Option<String>,
    /// A missing list is treated as empty instead of an error.
    #[serde(default)]
    pub optional: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub raw_records: usize,
    pub skipped_unsupported_facts: usize,
    pub filtered_by_type: usize,
    /// Questions dropped because no text or image candidate survived.
    pub dropped_empty_pool: usize,
}

#[derive(Debug)]
pub struct Adapted {
    pub corpus: Corpus,
    pub report: AdaptReport,
}

impl AdapterConfig {
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CorpusError::BadMapping(e.to_string()))
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.fact_sources.is_empty() {
            return Err(CorpusError::BadMapping("no fact sources configured".into()));
        }
        for s in &self.fact_sources {
            if s.modality.eq_ignore_ascii_case("image") && s.image_ref_field.is_none() && s.modality_field.is_none() {
                return Err(CorpusError::BadMapping(format!(
                    "image source '{}' needs image_ref_field",
                    s.field
                )));
            }
        }
        if self.text_key_prefix == self.image_key_prefix {
            return Err(CorpusError::BadMapping(
                "text and image key prefixes must differ".into(),
            ));
        }
        Ok(())
    }
}

fn lookup<'a>(record: &'a Value, field: &str) -> Option<&'a Value> {
    if field.starts_with('/') {
        record.pointer(field)
    } else {
        record.get(field)
    }
}

fn require<'a>(record: &'a Value, field: &str) -> Result<&'a Value, CorpusError> {
    lookup(record, field).ok_or_else(|| CorpusError::MissingField(field.to_string()))
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn require_string(record: &Value, field: &str) -> Result<String, CorpusError> {
    let v = require(record, field)?;
    scalar_string(v).ok_or_else(|| CorpusError::BadMapping(format!("field '{field}' is not a scalar")))
}

/// Parses the raw file into (key, record) pairs, preserving file order.
fn raw_records(raw: &str) -> Result<Vec<(String, Value)>, CorpusError> {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return match v {
            Value::Object(map) => Ok(map.into_iter().collect()),
            Value::Array(items) => Ok(items
                .into_iter()
                .enumerate()
                .map(|(i, v)| (format!("{i:06}"), v))
                .collect()),
            _ => Err(CorpusError::MalformedRecord {
                file: "raw".into(),
                line: 1,
                reason: "top-level JSON must be an object, array, or JSONL".into(),
            }),
        };
    }
    let mut out = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
            file: "raw".into(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push((format!("{:06}", out.len()), v));
    }
    Ok(out)
}

fn answers(record: &Value, cfg: &AdapterConfig) -> Result<Vec<String>, CorpusError> {
    let v = require(record, &cfg.answers_field)?;
    let one = |item: &Value| -> Result<Option<String>, CorpusError> {
        match (&cfg.answer_item_field, item) {
            (Some(f), Value::Object(_)) => Ok(Some(require_string(item, f)?)),
            (_, other) => Ok(scalar_string(other)),
        }
    };
    let mut out = Vec::new();
    match v {
        Value::Array(items) => {
            for item in items {
                if let Some(s) = one(item)? {
                    out.push(s);
                }
            }
        }
        other => {
            if let Some(s) = one(other)? {
                out.push(s);
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

fn parse_modality(name: &str) -> Option<Modality> {
    match name.to_ascii_lowercase().as_str() {
        "text" | "txt" | "passage" => Some(Modality::Text),
        "image" | "img" => Some(Modality::Image),
        _ => None,
    }
}

/// Converts a raw benchmark file into a canonical corpus.
///
/// Deterministic in (raw bytes, mapping): records are visited in file order and
/// shared documents keep their first occurrence.
pub fn adapt_dataset(raw_path: &Path, cfg: &AdapterConfig) -> Result<Adapted, CorpusError> {
    let raw = std::fs::read_to_string(raw_path).map_err(|e| CorpusError::io(raw_path, e))?;
    adapt_str(&raw, cfg)
}

pub fn adapt_str(raw: &str, cfg: &AdapterConfig) -> Result<Adapted, CorpusError> {
    cfg.validate()?;
    let records = raw_records(raw)?;
    let mut report = AdaptReport {
        raw_records: records.len(),
        ..Default::default()
    };
    let mut documents: IndexMap<String, Document> = IndexMap::new();
    let mut questions = Vec::new();

    for (object_key, record) in &records {
        if let Some(type_field) = &cfg.question_type_field {
            if !cfg.keep_question_types.is_empty() {
                let qtype = require_string(record, type_field)?;
                if !cfg.keep_question_types.iter().any(|t| t == &qtype) {
                    report.filtered_by_type += 1;
                    continue;
                }
            }
        }
        let q_key = match &cfg.question_key_field {
            Some(f) => require_string(record, f)?,
            None => object_key.clone(),
        };
        let question = require_string(record, &cfg.question_field)?;
        let split = match &cfg.split_field {
            Some(f) => {
                let raw_split = require_string(record, f)?;
                match cfg.split_map.get(&raw_split) {
                    Some(s) => *s,
                    None => raw_split.parse().map_err(CorpusError::BadMapping)?,
                }
            }
            None => cfg.default_split,
        };
        let gold_answers = answers(record, cfg)?;

        let mut pool = Vec::new();
        let mut gold = Vec::new();
        for source in &cfg.fact_sources {
            let facts = match lookup(record, &source.field) {
                Some(Value::Array(items)) => items.as_slice(),
                Some(Value::Null) | None if source.optional => &[],
                Some(_) => {
                    return Err(CorpusError::BadMapping(format!(
                        "fact field '{}' is not an array",
                        source.field
                    )))
                }
                None => return Err(CorpusError::MissingField(source.field.clone())),
            };
            for fact in facts {
                let modality_name = match &source.modality_field {
                    Some(f) => lookup(fact, f)
                        .and_then(scalar_string)
                        .unwrap_or_else(|| source.modality.clone()),
                    None => source.modality.clone(),
                };
                let Some(modality) = parse_modality(&modality_name) else {
                    log::warn!("skipping unsupported '{modality_name}' fact in question {q_key}");
                    report.skipped_unsupported_facts += 1;
                    continue;
                };
                let id = require_string(fact, &source.id_field)?;
                let prefix = match modality {
                    Modality::Text => &cfg.text_key_prefix,
                    Modality::Image => &cfg.image_key_prefix,
                };
                let doc_key = format!("{prefix}{id}");
                if !documents.contains_key(&doc_key) {
                    let title = require_string(fact, &source.title_field)?;
                    let doc = match modality {
                        Modality::Text => {
                            let body = match &source.body_field {
                                Some(f) => require_string(fact, f)?,
                                None => String::new(),
                            };
                            Document::text(doc_key.clone(), title, body)
                        }
                        Modality::Image => {
                            let f = source
                                .image_ref_field
                                .as_deref()
                                .ok_or_else(|| CorpusError::MissingField("image_ref_field".into()))?;
                            Document::image(doc_key.clone(), title, require_string(fact, f)?)
                        }
                    };
                    documents.insert(doc_key.clone(), doc.with_label(u8::from(source.positive)));
                }
                if pool.contains(&doc_key) {
                    continue;
                }
                pool.push(doc_key.clone());
                if source.positive {
                    gold.push(doc_key);
                }
            }
        }
        if pool.is_empty() {
            report.dropped_empty_pool += 1;
            continue;
        }
        questions.push(QuestionRecord {
            q_key,
            question,
            gold_answers,
            candidate_pool: pool,
            gold_doc_keys: gold,
            split,
        });
    }

    let corpus = Corpus::new(cfg.dataset_name.clone(), documents.into_values().collect(), questions)?;
    Ok(Adapted { corpus, report })
}
