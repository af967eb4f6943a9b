//! Deterministic in-process backends.
//!
//! Each mock is a pure function of its prompt and its configured tables, so
//! repeated calls return identical results. Mocks are described by small JSON
//! files (see [`MockCaptioner`], [`MockScorer`], [`MockGenerator`]) which the
//! pipeline config references as `mock:<file>`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::http::{Transport, TransportError, WireResponse};
use super::{clamp_probability, BackendError, Captioner, Generator, Scorer};
use crate::genrank::prompt::read_gen_prompt;
use crate::pointwise::split_rank_prompt;
use crate::text::word_tokens;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BackendError> {
    let text = std::fs::read_to_string(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
}

/// Table-lookup captioner keyed by image reference.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockCaptioner {
    #[serde(default)]
    pub table: BTreeMap<String, String>,
    /// Simulates an unavailable service: every call times out.
    #[serde(default)]
    pub down: bool,
}

impl MockCaptioner {
    pub fn new(table: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>) -> Self {
        MockCaptioner {
            table: table.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            down: false,
        }
    }

    pub fn down() -> Self {
        MockCaptioner {
            table: BTreeMap::new(),
            down: true,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        read_json(path)
    }
}

impl Captioner for MockCaptioner {
    fn caption(&self, image_ref: &str, _prompt: &str) -> Result<String, BackendError> {
        if self.down {
            return Err(BackendError::Timeout("mock captioner is down".into()));
        }
        match self.table.get(image_ref) {
            Some(s) if s.trim().is_empty() => Err(BackendError::EmptyResponse),
            Some(s) => Ok(s.clone()),
            None => Err(BackendError::UnreadableImage(image_ref.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockScorer {
    /// Fraction of distinct document tokens that also occur in the question.
    Overlap,
    /// Fixed scores keyed by the document part of the prompt.
    Table {
        table: BTreeMap<String, f64>,
        #[serde(default)]
        default: f64,
    },
}

impl MockScorer {
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        read_json(path)
    }

    /// The raw (unclamped) mock value.
    pub fn raw_score(&self, prompt: &str) -> Result<f64, BackendError> {
        let (question, document) = split_rank_prompt(prompt)
            .or_else(|| split_fluency_prompt(prompt))
            .ok_or_else(|| BackendError::Config(format!("not a rank prompt: {prompt}")))?;
        match self {
            MockScorer::Overlap => Ok(overlap_ratio(question, document)),
            MockScorer::Table { table, default } => Ok(table.get(document).copied().unwrap_or(*default)),
        }
    }
}

/// Splits `Candidate: {pred} Reference: {gold}` into (reference, candidate),
/// so overlap measures how much of the candidate the reference supports.
fn split_fluency_prompt(prompt: &str) -> Option<(&str, &str)> {
    let rest = prompt.strip_prefix("Candidate: ")?;
    let (cand, reference) = rest.rsplit_once(" Reference: ")?;
    Some((reference, cand))
}

/// |Q ∩ D| / |D| over distinct lowercased word tokens; 0 for an empty document.
pub fn overlap_ratio(question: &str, document: &str) -> f64 {
    let q: BTreeSet<String> = word_tokens(question).into_iter().collect();
    let d: BTreeSet<String> = word_tokens(document).into_iter().collect();
    if d.is_empty() {
        return 0.0;
    }
    d.intersection(&q).count() as f64 / d.len() as f64
}

impl Scorer for MockScorer {
    fn id(&self) -> String {
        match self {
            MockScorer::Overlap => "mock-overlap".into(),
            MockScorer::Table { .. } => "mock-table".into(),
        }
    }

    fn score(&self, prompt: &str) -> Result<f64, BackendError> {
        clamp_probability(self.raw_score(prompt)?, &self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockGenerator {
    /// Canned completions keyed by question text.
    Scripted {
        #[serde(default)]
        completions: BTreeMap<String, String>,
        #[serde(default)]
        default: Option<String>,
    },
    /// Always names DocID 1, whatever the documents say.
    PositionBiased {
        #[serde(default)]
        answers: BTreeMap<String, String>,
        #[serde(default)]
        default_answer: String,
    },
    /// Chooses documents by their content only: a document is relevant when it
    /// contains one of the configured snippets, ranked by the snippet weight and
    /// then by text, so the output never depends on prompt position.
    /// Snippets in `per_question` (keyed by question text) replace `relevant`.
    ContentKeyed {
        #[serde(default)]
        relevant: BTreeMap<String, f64>,
        #[serde(default)]
        per_question: BTreeMap<String, BTreeMap<String, f64>>,
        #[serde(default)]
        answers: BTreeMap<String, String>,
        #[serde(default)]
        default_answer: String,
        #[serde(default)]
        max_ids: Option<usize>,
    },
}

impl MockGenerator {
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        read_json(path)
    }

    fn answer_for<'a>(answers: &'a BTreeMap<String, String>, default: &'a str, question: &str) -> &'a str {
        answers.get(question).map(String::as_str).unwrap_or(default)
    }
}

fn format_completion(ids: &[usize], answer: &str) -> String {
    let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
    format!("Relevant Document IDs: [{}] \\\\ Answer: {}", ids.join(", "), answer)
}

impl Generator for MockGenerator {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let parsed = read_gen_prompt(prompt);
        let question = parsed.as_ref().map(|p| p.question.as_str()).unwrap_or("");
        let out = match self {
            MockGenerator::Scripted { completions, default } => completions
                .get(question)
                .or(default.as_ref())
                .cloned()
                .unwrap_or_default(),
            MockGenerator::PositionBiased {
                answers,
                default_answer,
            } => format_completion(&[1], Self::answer_for(answers, default_answer, question)),
            MockGenerator::ContentKeyed {
                relevant,
                per_question,
                answers,
                default_answer,
                max_ids,
            } => {
                let docs = parsed.as_ref().map(|p| p.documents.as_slice()).unwrap_or(&[]);
                let relevant = per_question.get(question).unwrap_or(relevant);
                let mut hits: Vec<(f64, &str, usize)> = docs
                    .iter()
                    .filter_map(|(id, text)| {
                        let w: f64 = relevant
                            .iter()
                            .filter(|(snippet, _)| text.contains(snippet.as_str()))
                            .map(|(_, w)| *w)
                            .sum();
                        (w > 0.0).then_some((w, text.as_str(), *id))
                    })
                    .collect();
                hits.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
                let mut ids: Vec<usize> = hits.into_iter().map(|(_, _, id)| id).collect();
                if let Some(m) = max_ids {
                    ids.truncate(*m);
                }
                format_completion(&ids, Self::answer_for(answers, default_answer, question))
            }
        };
        if out.trim().is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        Ok(out)
    }
}

/// Instrumented transport for exercising the HTTP client without a network.
///
/// Replays scripted `(status, body)` responses (the last one repeats), records
/// every request body, and tracks the peak number of concurrent requests.
pub struct ScriptedTransport {
    responses: Vec<(u16, String)>,
    next: AtomicUsize,
    delay: Duration,
    requests: Mutex<Vec<Value>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl ScriptedTransport {
    pub fn always(status: u16, body: &str) -> Self {
        Self::sequence(vec![(status, body.to_string())])
    }

    pub fn sequence(responses: Vec<(u16, String)>) -> Self {
        assert!(!responses.is_empty(), "at least one scripted response");
        ScriptedTransport {
            responses,
            next: AtomicUsize::new(0),
            delay: Duration::ZERO,
            requests: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn post_json(
        &self,
        _url: &str,
        _headers: &[(String, String)],
        body: &Value,
    ) -> Result<WireResponse, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.requests
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(body.clone());
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let idx = self.next.fetch_add(1, Ordering::SeqCst).min(self.responses.len() - 1);
        let (status, body) = self.responses[idx].clone();
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        Ok(WireResponse { status, body })
    }

    fn get_bytes(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        Err(TransportError::Unreachable(format!(
            "scripted transport cannot fetch {url}"
        )))
    }
}
