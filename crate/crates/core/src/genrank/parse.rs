//! Reading generator output back into DocIDs and an answer.
//!
//! The exact grammar is `Relevant Document IDs: [i, j] \\ Answer: text`, where
//! the separator may also be a single newline. Anything else that still has
//! recognizable section headers is repaired; the rest fails.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::prompt::SECTION_SEP;
use super::TargetMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseStatus {
    Clean,
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenOutput {
    pub relevant_ids: Vec<usize>,
    pub answer: String,
    pub raw_text: String,
    pub parse_status: ParseStatus,
}

static CLEAN_FULL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)^Relevant Document IDs: \[(\d+(?:, \d+)*)?\](?: \\\\ |\n)Answer: (.*)$").unwrap()
});
static CLEAN_IDS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^Relevant Document IDs: \[(\d+(?:, \d+)*)?\]$").unwrap());
static CLEAN_ANSWER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)^Answer: (.*)$").unwrap());

static IDS_HEADER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)relevant\s+document\s+ids?\s*:?").unwrap());
static ANSWER_HEADER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\banswer\s*:").unwrap());
static ID_SECTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[\d\s,;\[\]\\]*$").unwrap());
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());

fn failed(raw: &str) -> GenOutput {
    GenOutput {
        relevant_ids: Vec::new(),
        answer: String::new(),
        raw_text: raw.to_string(),
        parse_status: ParseStatus::Failed,
    }
}

/// Integers in order; `None` if one does not fit in `usize`.
fn integers(section: &str) -> Option<Vec<usize>> {
    INTEGER.find_iter(section).map(|m| m.as_str().parse().ok()).collect()
}

/// Keeps the first occurrence of each id in `1..=k`; reports whether any were dropped.
fn sanitize(ids: Vec<usize>, k: usize) -> (Vec<usize>, bool) {
    let mut seen = HashSet::new();
    let n = ids.len();
    let kept: Vec<usize> = ids
        .into_iter()
        .filter(|&i| (1..=k).contains(&i) && seen.insert(i))
        .collect();
    let dropped = kept.len() != n;
    (kept, dropped)
}

fn finish(raw: &str, ids: Vec<usize>, answer: &str, clean: bool, k: usize) -> GenOutput {
    let (relevant_ids, dropped) = sanitize(ids, k);
    GenOutput {
        relevant_ids,
        answer: answer.trim().to_string(),
        raw_text: raw.to_string(),
        parse_status: if clean && !dropped {
            ParseStatus::Clean
        } else {
            ParseStatus::Repaired
        },
    }
}

fn clean(raw: &str, k: usize, mode: TargetMode) -> Option<GenOutput> {
    let text = raw.trim();
    let (ids, answer) = match mode {
        TargetMode::Full => {
            let c = CLEAN_FULL.captures(text)?;
            (c.get(1).map_or("", |m| m.as_str()), c.get(2).map_or("", |m| m.as_str()))
        }
        TargetMode::RetrievalOnly => (CLEAN_IDS.captures(text)?.get(1).map_or("", |m| m.as_str()), ""),
        TargetMode::AnswerOnly => ("", CLEAN_ANSWER.captures(text)?.get(1).map_or("", |m| m.as_str())),
    };
    let answer_ok = answer == answer.trim();
    Some(finish(raw, integers(ids)?, answer, answer_ok, k))
}

fn repaired(raw: &str, k: usize, mode: TargetMode) -> Option<GenOutput> {
    let ids_header = IDS_HEADER.find(raw);
    match mode {
        TargetMode::AnswerOnly => {
            let a = ANSWER_HEADER.find(raw)?;
            Some(finish(raw, Vec::new(), &raw[a.end()..], false, k))
        }
        TargetMode::RetrievalOnly => {
            let h = ids_header?;
            let section = &raw[h.end()..];
            let section = ANSWER_HEADER.find(section).map_or(section, |a| &section[..a.start()]);
            ID_SECTION.is_match(section.trim()).then_some(())?;
            Some(finish(raw, integers(section)?, "", false, k))
        }
        TargetMode::Full => {
            let h = ids_header?;
            let after = &raw[h.end()..];
            let a = ANSWER_HEADER.find(after)?;
            let section = &after[..a.start()];
            ID_SECTION.is_match(section.trim()).then_some(())?;
            Some(finish(raw, integers(section)?, &after[a.end()..], false, k))
        }
    }
}

/// Parses a full-grammar completion for a prompt with `k` documents.
pub fn parse_gen_output(raw: &str, k: usize) -> GenOutput {
    parse_gen_output_for(raw, k, TargetMode::Full)
}

pub fn parse_gen_output_for(raw: &str, k: usize, mode: TargetMode) -> GenOutput {
    clean(raw, k, mode)
        .or_else(|| repaired(raw, k, mode))
        .unwrap_or_else(|| failed(raw))
}

/// The target string a completion should reproduce. `ids` is written as given.
pub fn format_target(mode: TargetMode, ids: &[usize], answer: &str) -> String {
    let list = ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ");
    match mode {
        TargetMode::Full => format!("Relevant Document IDs: [{list}] {SECTION_SEP} Answer: {answer}"),
        TargetMode::RetrievalOnly => format!("Relevant Document IDs: [{list}]"),
        TargetMode::AnswerOnly => format!("Answer: {answer}"),
    }
}
