//! Text-only view of a mixed candidate pool.
//!
//! Text documents pass through as title and body joined by [`LAYOUT_SEPARATOR`].
//! Image documents are sent to a captioning backend with a fixed prompt and
//! become caption plus description in the same layout; when the backend fails
//! the caption alone is used.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::Captioner;
use crate::corpus::{Corpus, Document, Modality};
use crate::text::{collapse_whitespace, truncate_words};

pub const IMAGE_SLOT: &str = "{image}";
pub const CAPTION_SLOT: &str = "{caption}";
pub const LAYOUT_SEPARATOR: &str = " — ";
pub const DEFAULT_DESCRIPTION_BUDGET: usize = 96;

const DEFAULT_TEMPLATE: &str = "USER: {image}\nThe title of this image is \"{caption}\". Describe what the image shows in one or two sentences, including any visible colors, shapes, materials and text.\nASSISTANT:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    OriginalText,
    GeneratedDescription,
    CaptionFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedDocument {
    pub doc_key: String,
    pub unified_text: String,
    pub source_modality: Modality,
    pub provenance: Provenance,
    pub cache_key: Option<String>,
}

pub type UnifiedMap = BTreeMap<String, UnifiedDocument>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum UnifyError {
    #[error("document '{0}' produced no text")]
    EmptyUnification(String),
    #[error("bad prompt template: {0}")]
    BadTemplate(String),
    #[error("cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifyPrompt {
    pub template: String,
    pub version: String,
}

impl Default for UnifyPrompt {
    fn default() -> Self {
        UnifyPrompt {
            template: DEFAULT_TEMPLATE.to_string(),
            version: "describe-v1".to_string(),
        }
    }
}

impl UnifyPrompt {
    pub fn new(template: impl Into<String>, version: impl Into<String>) -> Result<Self, UnifyError> {
        let p = UnifyPrompt {
            template: template.into(),
            version: version.into(),
        };
        for slot in [IMAGE_SLOT, CAPTION_SLOT] {
            let n = p.template.matches(slot).count();
            if n != 1 {
                return Err(UnifyError::BadTemplate(format!("expected one {slot}, found {n}")));
            }
        }
        Ok(p)
    }

    /// Loads a plain-text template; the version is derived from its content.
    pub fn from_file(path: &Path) -> Result<Self, UnifyError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| UnifyError::BadTemplate(format!("{}: {e}", path.display())))?;
        let version = format!("file-{}", &hex::encode(Sha256::digest(text.as_bytes()))[..12]);
        UnifyPrompt::new(text, version)
    }

    pub fn render(&self, caption: &str) -> String {
        self.template
            .replace(IMAGE_SLOT, "<image>")
            .replace(CAPTION_SLOT, caption)
    }

    pub fn cache_key(&self, doc: &Document, description_budget: usize) -> String {
        let mut h = Sha256::new();
        for part in [
            self.version.as_str(),
            self.template.as_str(),
            doc.image_ref.as_deref().unwrap_or(""),
            doc.title_or_caption.as_str(),
            &description_budget.to_string(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn layout(head: &str, tail: &str) -> String {
    let head = collapse_whitespace(head);
    let tail = collapse_whitespace(tail);
    match (head.is_empty(), tail.is_empty()) {
        (false, false) => format!("{head}{LAYOUT_SEPARATOR}{tail}"),
        (false, true) => head,
        (true, _) => tail,
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    cache_key: String,
    unified_text: String,
}

/// Append-only JSONL cache of generated unified texts.
///
/// Readers share a lock; inserts append one line and flush before returning.
#[derive(Debug)]
pub struct CaptionCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, String>>,
    file: Mutex<Option<File>>,
}

impl CaptionCache {
    pub fn in_memory() -> Self {
        CaptionCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            file: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) the cache file. Malformed lines are skipped.
    pub fn open(path: &Path) -> Result<Self, UnifyError> {
        let err = |e: std::io::Error| UnifyError::Cache(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(err)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(c) => {
                        entries.insert(c.cache_key, c.unified_text);
                    }
                    Err(e) => log::warn!("{}:{}: skipping cache line: {e}", path.display(), i + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        Ok(CaptionCache {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, unified_text: &str) -> Result<(), UnifyError> {
        let mut file = self.file.lock().expect("cache file lock");
        if let Some(f) = file.as_mut() {
            let line = serde_json::to_string(&CacheLine {
                cache_key: key.to_string(),
                unified_text: unified_text.to_string(),
            })
            .map_err(|e| UnifyError::Cache(e.to_string()))?;
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|e| UnifyError::Cache(e.to_string()))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(key.to_string(), unified_text.to_string());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnifyOptions {
    pub description_budget: usize,
}

impl Default for UnifyOptions {
    fn default() -> Self {
        UnifyOptions {
            description_budget: DEFAULT_DESCRIPTION_BUDGET,
        }
    }
}

/// Unifies one document without consulting a cache.
pub fn unify_document(
    doc: &Document,
    prompt: &UnifyPrompt,
    captioner: &dyn Captioner,
    options: UnifyOptions,
) -> Result<UnifiedDocument, UnifyError> {
    unify_with(doc, prompt, captioner, options, None, &AtomicUsize::new(0))
}

fn unify_with(
    doc: &Document,
    prompt: &UnifyPrompt,
    captioner: &dyn Captioner,
    options: UnifyOptions,
    cache: Option<&CaptionCache>,
    calls: &AtomicUsize,
) -> Result<UnifiedDocument, UnifyError> {
    let empty = || UnifyError::EmptyUnification(doc.doc_key.clone());
    if doc.modality == Modality::Text {
        let unified_text = layout(&doc.title_or_caption, &doc.body_text);
        if unified_text.is_empty() {
            return Err(empty());
        }
        return Ok(UnifiedDocument {
            doc_key: doc.doc_key.clone(),
            unified_text,
            source_modality: Modality::Text,
            provenance: Provenance::OriginalText,
            cache_key: None,
        });
    }

    let key = prompt.cache_key(doc, options.description_budget);
    let generated = |text: String| UnifiedDocument {
        doc_key: doc.doc_key.clone(),
        unified_text: text,
        source_modality: Modality::Image,
        provenance: Provenance::GeneratedDescription,
        cache_key: Some(key.clone()),
    };
    if let Some(text) = cache.and_then(|c| c.get(&key)) {
        return Ok(generated(text));
    }

    let caption = collapse_whitespace(&doc.title_or_caption);
    let image_ref = doc.image_ref.as_deref().unwrap_or("");
    calls.fetch_add(1, Ordering::Relaxed);
    let description = match captioner.caption(image_ref, &prompt.render(&caption)) {
        Ok(raw) => {
            let d = collapse_whitespace(&raw);
            let d = truncate_words(&d, options.description_budget).to_string();
            (!d.is_empty()).then_some(d)
        }
        Err(e) => {
            log::warn!("captioning failed for {}: {e}; using caption only", doc.doc_key);
            None
        }
    };
    match description {
        Some(d) => {
            let text = layout(&caption, &d);
            if let Some(c) = cache {
                c.insert(&key, &text)?;
            }
            Ok(generated(text))
        }
        None if caption.is_empty() => Err(empty()),
        None => Ok(UnifiedDocument {
            doc_key: doc.doc_key.clone(),
            unified_text: caption,
            source_modality: Modality::Image,
            provenance: Provenance::CaptionFallback,
            cache_key: Some(key),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnifyOutcome {
    pub unified: UnifiedMap,
    pub errors: Vec<(String, UnifyError)>,
    pub backend_calls: usize,
}

/// Unifies every corpus document, fanning out captioner calls in parallel.
///
/// The map is keyed by doc key, so completion order never affects the result.
/// Per-document failures are collected and the batch continues.
pub fn unify_pool(
    corpus: &Corpus,
    prompt: &UnifyPrompt,
    captioner: &dyn Captioner,
    cache: &CaptionCache,
    options: UnifyOptions,
) -> UnifyOutcome {
    let calls = AtomicUsize::new(0);
    let docs: Vec<&Document> = corpus.documents.values().collect();
    let results: Vec<(String, Result<UnifiedDocument, UnifyError>)> = docs
        .par_iter()
        .map(|d| {
            (
                d.doc_key.clone(),
                unify_with(d, prompt, captioner, options, Some(cache), &calls),
            )
        })
        .collect();
    let mut unified = BTreeMap::new();
    let mut errors = Vec::new();
    for (key, r) in results {
        match r {
            Ok(u) => {
                unified.insert(key, u);
            }
            Err(e) => errors.push((key, e)),
        }
    }
    errors.sort_by(|a, b| a.0.cmp(&b.0));
    UnifyOutcome {
        unified,
        errors,
        backend_calls: calls.into_inner(),
    }
}
