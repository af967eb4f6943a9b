//! Second-stage generative reranking and answering.
//!
//! The generator sees the question and the stage-1 top-k documents (as
//! unified text) under numeric DocIDs, and emits the relevant DocIDs followed
//! by the answer. Training examples are built under several random document
//! orders per question so the model cannot learn to trust positions.

mod parse;
mod perm;
pub mod prompt;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::Generator;
use crate::corpus::{Corpus, QuestionRecord, Split};
use crate::eval::normalize_answer;
use crate::text::{collapse_whitespace, fnv1a, truncate_words, whitespace_len};
use crate::unify::UnifiedMap;

pub use parse::{format_target, parse_gen_output, parse_gen_output_for, GenOutput, ParseStatus};
pub use perm::{all_permutations, factorial, inference_permutations, sample_permutations, Permutation};

pub const DEFAULT_TOKEN_BUDGET: usize = 8192;
pub const DEFAULT_TOKEN_INFLATION: f64 = 1.3;
pub const DEFAULT_PERMS_PER_QUESTION: usize = 5;

/// Which parts of the target the generator is trained to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    #[default]
    Full,
    RetrievalOnly,
    AnswerOnly,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenError {
    #[error("token budget {budget} cannot hold the prompt skeleton plus one token per document (needs {required})")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("question '{0}' has no gold answer")]
    NoAnswer(String),
    #[error("question '{0}' has no selected documents")]
    EmptySelection(String),
    #[error("document '{0}' has no unified text")]
    UnknownDocument(String),
    #[error("permutation does not match the {0} selected documents")]
    BadPermutation(usize),
    #[error("no stage-1 ranking for question '{0}'")]
    MissingRanking(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub token_budget: usize,
    pub inflation: f64,
    pub mode: TargetMode,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            token_budget: DEFAULT_TOKEN_BUDGET,
            inflation: DEFAULT_TOKEN_INFLATION,
            mode: TargetMode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenPrompt {
    /// Full instruction-wrapped prompt sent to the generator.
    pub text: String,
    /// The `Question: … Documents: …` block alone.
    pub input: String,
    pub docid_map: BTreeMap<usize, String>,
    pub q_key: String,
    pub permutation: Permutation,
    pub truncated: bool,
    pub mode: TargetMode,
}

impl GenPrompt {
    pub fn k(&self) -> usize {
        self.docid_map.len()
    }

    /// Doc keys for generated DocIDs, in generated order. Unknown ids are skipped.
    pub fn map_ids(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().filter_map(|i| self.docid_map.get(i).cloned()).collect()
    }
}

/// Per-document word caps summing to at most `available`, each at least one,
/// proportional to the original lengths.
fn proportional_caps(lens: &[usize], available: usize) -> Vec<usize> {
    let total: usize = lens.iter().sum();
    if total <= available {
        return lens.to_vec();
    }
    let mut caps: Vec<usize> = lens
        .iter()
        .map(|&l| ((l as u128 * available as u128 / total as u128) as usize).clamp(1.min(l), l))
        .collect();
    while caps.iter().sum::<usize>() > available {
        let (i, _) = caps
            .iter()
            .enumerate()
            .max_by_key(|(i, c)| (**c, usize::MAX - i))
            .expect("non-empty");
        if caps[i] <= 1 {
            break;
        }
        caps[i] -= 1;
    }
    caps
}

/// Lays the selected documents out in permuted order under DocIDs `1..=k`.
///
/// Document texts are shortened proportionally until the whole prompt fits the
/// token budget; every DocID line is kept.
pub fn build_gen_prompt(
    q: &QuestionRecord,
    selected: &[String],
    unified: &UnifiedMap,
    perm: &Permutation,
    options: &PromptOptions,
) -> Result<GenPrompt, GenError> {
    let k = selected.len();
    if k == 0 {
        return Err(GenError::EmptySelection(q.q_key.clone()));
    }
    if perm.len() != k || !perm.is_valid() {
        return Err(GenError::BadPermutation(k));
    }
    let mut texts = Vec::with_capacity(k);
    let mut docid_map = BTreeMap::new();
    for (pos, &idx) in perm.order.iter().enumerate() {
        let key = &selected[idx];
        let u = unified.get(key).ok_or_else(|| GenError::UnknownDocument(key.clone()))?;
        texts.push(collapse_whitespace(&u.unified_text));
        docid_map.insert(pos + 1, key.clone());
    }
    let question = collapse_whitespace(&q.question);

    let skeleton = prompt::render_alpaca(options.mode, &prompt::render_input(&question, &vec![""; k]));
    let fixed = whitespace_len(&skeleton);
    let max_words = prompt::max_whitespace_tokens(options.token_budget, options.inflation);
    let required = prompt::estimate_tokens(fixed + k, options.inflation);
    if max_words < fixed + k {
        return Err(GenError::BudgetTooSmall {
            budget: options.token_budget,
            required,
        });
    }
    let lens: Vec<usize> = texts.iter().map(|t| whitespace_len(t)).collect();
    let caps = proportional_caps(&lens, max_words - fixed);
    let truncated = caps != lens;
    let shown: Vec<&str> = texts.iter().zip(&caps).map(|(t, &c)| truncate_words(t, c)).collect();
    let input = prompt::render_input(&question, &shown);
    let text = prompt::render_alpaca(options.mode, &input);
    debug_assert!(prompt::estimate_tokens(whitespace_len(&text), options.inflation) <= options.token_budget);
    Ok(GenPrompt {
        text,
        input,
        docid_map,
        q_key: q.q_key.clone(),
        permutation: perm.clone(),
        truncated,
        mode: options.mode,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub q_key: String,
    pub permutation: Permutation,
    pub relevant_ids: Vec<usize>,
    /// Gold documents that were not among the selected candidates.
    pub omitted_gold: Vec<String>,
}

/// One line of the instruction-tuning file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlpacaRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl From<&SftExample> for AlpacaRecord {
    fn from(e: &SftExample) -> Self {
        AlpacaRecord {
            instruction: e.instruction.clone(),
            input: e.input.clone(),
            output: e.output.clone(),
        }
    }
}

/// Target for one prompt: ascending DocIDs of gold documents, then the first gold answer.
pub fn build_sft_target(q: &QuestionRecord, prompt: &GenPrompt) -> Result<SftExample, GenError> {
    let answer = q
        .gold_answers
        .iter()
        .map(|a| collapse_whitespace(a))
        .find(|a| !a.is_empty());
    let answer = match (answer, prompt.mode) {
        (Some(a), _) => a,
        (None, TargetMode::RetrievalOnly) => String::new(),
        (None, _) => return Err(GenError::NoAnswer(q.q_key.clone())),
    };
    let gold = q.gold_set();
    let relevant_ids: Vec<usize> = prompt
        .docid_map
        .iter()
        .filter(|(_, key)| gold.contains(key.as_str()))
        .map(|(id, _)| *id)
        .collect();
    let shown: std::collections::BTreeSet<&str> = prompt.docid_map.values().map(String::as_str).collect();
    let omitted_gold: Vec<String> = q
        .gold_doc_keys
        .iter()
        .filter(|g| !shown.contains(g.as_str()))
        .cloned()
        .collect();
    if !omitted_gold.is_empty() {
        log::info!(
            "{}: {} gold document(s) not in the candidate list",
            q.q_key,
            omitted_gold.len()
        );
    }
    Ok(SftExample {
        instruction: prompt::instruction(prompt.mode).to_string(),
        input: prompt.input.clone(),
        output: format_target(prompt.mode, &relevant_ids, &answer),
        q_key: q.q_key.clone(),
        permutation: prompt.permutation.clone(),
        relevant_ids,
        omitted_gold,
    })
}

/// Stable per-question seed.
pub fn question_seed(seed: u64, q_key: &str) -> u64 {
    fnv1a(seed, q_key.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftOptions {
    pub perms_per_question: usize,
    pub seed: u64,
    pub prompt: PromptOptions,
}

impl Default for SftOptions {
    fn default() -> Self {
        SftOptions {
            perms_per_question: DEFAULT_PERMS_PER_QUESTION,
            seed: 0,
            prompt: PromptOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SftReport {
    pub questions: usize,
    pub examples: usize,
    pub questions_with_omitted_gold: usize,
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftDataset {
    pub examples: Vec<SftExample>,
    pub report: SftReport,
}

fn examples_for(
    q: &QuestionRecord,
    ranking: &[String],
    unified: &UnifiedMap,
    options: &SftOptions,
) -> Result<Vec<SftExample>, GenError> {
    let perms = sample_permutations(
        ranking.len(),
        options.perms_per_question,
        question_seed(options.seed, &q.q_key),
    );
    perms
        .iter()
        .map(|p| build_sft_target(q, &build_gen_prompt(q, ranking, unified, p, &options.prompt)?))
        .collect()
}

/// One example per sampled permutation for every training question.
pub fn emit_sft_dataset(
    corpus: &Corpus,
    rankings: &BTreeMap<String, Vec<String>>,
    unified: &UnifiedMap,
    options: &SftOptions,
) -> SftDataset {
    let train: Vec<&QuestionRecord> = corpus.questions.iter().filter(|q| q.split == Split::Train).collect();
    let per_question: Vec<(String, Result<Vec<SftExample>, GenError>)> = train
        .par_iter()
        .map(|q| {
            let r = rankings
                .get(&q.q_key)
                .ok_or_else(|| GenError::MissingRanking(q.q_key.clone()))
                .and_then(|ranking| examples_for(q, ranking, unified, options));
            (q.q_key.clone(), r)
        })
        .collect();
    let mut report = SftReport {
        questions: train.len(),
        ..Default::default()
    };
    let mut examples = Vec::new();
    for (q_key, r) in per_question {
        match r {
            Ok(ex) => {
                if ex.first().is_some_and(|e| !e.omitted_gold.is_empty()) {
                    report.questions_with_omitted_gold += 1;
                }
                examples.extend(ex);
            }
            Err(e) => report.failures.push((q_key, e.to_string())),
        }
    }
    report.examples = examples.len();
    SftDataset { examples, report }
}

pub fn write_sft_dataset(path: &std::path::Path, examples: &[SftExample]) -> std::io::Result<()> {
    let records: Vec<AlpacaRecord> = examples.iter().map(AlpacaRecord::from).collect();
    crate::jsonl::write(path, &records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankOptions {
    /// 1 runs a single prompt in stage-1 order; more enables consensus voting.
    pub inference_perms: usize,
    pub seed: u64,
    pub prompt: PromptOptions,
}

impl Default for RerankOptions {
    fn default() -> Self {
        RerankOptions {
            inference_perms: 1,
            seed: 0,
            prompt: PromptOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankResult {
    pub q_key: String,
    pub predicted_doc_keys: Vec<String>,
    pub answer: String,
    pub per_permutation: Vec<GenOutput>,
    pub all_failed: bool,
    pub backend_errors: Vec<String>,
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRecord {
    pub q_key: String,
    pub predicted_doc_keys: Vec<String>,
    pub answer: String,
    pub parse_statuses: Vec<ParseStatus>,
}

impl From<&RerankResult> for RerankRecord {
    fn from(r: &RerankResult) -> Self {
        RerankRecord {
            q_key: r.q_key.clone(),
            predicted_doc_keys: r.predicted_doc_keys.clone(),
            answer: r.answer.clone(),
            parse_statuses: r.per_permutation.iter().map(|o| o.parse_status).collect(),
        }
    }
}

/// Combines parsed outputs of several prompts over the same `selected` list.
///
/// A document at 0-based position `p` of a generated list of length `L` earns
/// `L − p` points; documents are ordered by total points, then by stage-1
/// position. The answer is the most frequent normalized answer, ties going to
/// the earliest prompt; its surface form comes from that prompt. Failed
/// outputs do not vote.
pub fn consensus(outputs: &[(&GenOutput, &GenPrompt)], selected: &[String]) -> (Vec<String>, String) {
    let rank: HashMap<&str, usize> = selected.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let mut votes: HashMap<String, usize> = HashMap::new();
    let mut answers: Vec<(String, usize, usize)> = Vec::new();
    for (idx, (out, prompt)) in outputs.iter().enumerate() {
        if out.parse_status == ParseStatus::Failed {
            continue;
        }
        let keys = prompt.map_ids(&out.relevant_ids);
        let len = keys.len();
        for (p, key) in keys.into_iter().enumerate() {
            *votes.entry(key).or_default() += len - p;
        }
        let norm = normalize_answer(&out.answer);
        match answers.iter_mut().find(|(n, _, _)| *n == norm) {
            Some(entry) => entry.1 += 1,
            None => answers.push((norm, 1, idx)),
        }
    }
    let mut docs: Vec<(String, usize)> = votes.into_iter().collect();
    docs.sort_by(|a, b| {
        b.1.cmp(&a.1).then_with(|| {
            let ra = rank.get(a.0.as_str()).copied().unwrap_or(usize::MAX);
            let rb = rank.get(b.0.as_str()).copied().unwrap_or(usize::MAX);
            ra.cmp(&rb).then_with(|| a.0.cmp(&b.0))
        })
    });
    let answer = answers
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.2.cmp(&a.2)))
        .map(|(_, _, first)| outputs[*first].0.answer.clone())
        .unwrap_or_default();
    (docs.into_iter().map(|(k, _)| k).collect(), answer)
}

/// Runs the generator over one question's selected documents.
pub fn rerank_question(
    q: &QuestionRecord,
    selected: &[String],
    unified: &UnifiedMap,
    generator: &dyn Generator,
    options: &RerankOptions,
) -> Result<RerankResult, GenError> {
    let perms = inference_permutations(
        selected.len().max(1),
        options.inference_perms,
        question_seed(options.seed, &q.q_key),
    );
    let prompts: Vec<GenPrompt> = perms
        .iter()
        .map(|p| build_gen_prompt(q, selected, unified, p, &options.prompt))
        .collect::<Result<_, _>>()?;
    let raw: Vec<Result<String, String>> = prompts
        .par_iter()
        .map(|p| generator.generate(&p.text).map_err(|e| e.to_string()))
        .collect();
    let mut backend_errors = Vec::new();
    let outputs: Vec<GenOutput> = raw
        .into_iter()
        .zip(&prompts)
        .map(|(r, p)| match r {
            Ok(text) => parse_gen_output_for(&text, p.k(), options.prompt.mode),
            Err(e) => {
                log::warn!("{}: generator failed: {e}", q.q_key);
                backend_errors.push(e);
                parse_gen_output_for("", p.k(), options.prompt.mode)
            }
        })
        .collect();
    let pairs: Vec<(&GenOutput, &GenPrompt)> = outputs.iter().zip(&prompts).collect();
    let (predicted_doc_keys, answer) = consensus(&pairs, selected);
    let all_failed = outputs.iter().all(|o| o.parse_status == ParseStatus::Failed);
    if all_failed {
        log::warn!("{}: no generator output could be parsed", q.q_key);
    }
    Ok(RerankResult {
        q_key: q.q_key.clone(),
        predicted_doc_keys,
        answer,
        per_permutation: outputs,
        all_failed,
        backend_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::MockGenerator;
    use crate::corpus::Modality;
    use crate::unify::{Provenance, UnifiedDocument};

    fn unified(items: &[(&str, &str)]) -> UnifiedMap {
        items
            .iter()
            .map(|(k, t)| {
                (
                    k.to_string(),
                    UnifiedDocument {
                        doc_key: k.to_string(),
                        unified_text: t.to_string(),
                        source_modality: Modality::Text,
                        provenance: Provenance::OriginalText,
                        cache_key: None,
                    },
                )
            })
            .collect()
    }

    fn question(gold: &[&str], answer: &str) -> QuestionRecord {
        QuestionRecord {
            q_key: "q".into(),
            question: "Where is it?".into(),
            gold_answers: if answer.is_empty() { vec![] } else { vec![answer.into()] },
            candidate_pool: vec!["X".into(), "Y".into(), "Z".into()],
            gold_doc_keys: gold.iter().map(|s| s.to_string()).collect(),
            split: Split::Train,
        }
    }

    fn keys(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn swap() -> Permutation {
        Permutation {
            order: vec![1, 0],
            seed_tag: "swap".into(),
        }
    }

    #[test]
    fn identity_and_swap_layout() {
        let u = unified(&[("X", "x text"), ("Y", "y text")]);
        let q = question(&["Y"], "Paris");
        let sel = keys(&["X", "Y"]);
        let p = build_gen_prompt(&q, &sel, &u, &Permutation::identity(2), &PromptOptions::default()).unwrap();
        assert!(p.input.contains("[DocID: 1] x text\n[DocID: 2] y text"));
        let p = build_gen_prompt(&q, &sel, &u, &swap(), &PromptOptions::default()).unwrap();
        assert!(p.input.contains("[DocID: 1] y text"));
        assert_eq!(
            p.docid_map,
            BTreeMap::from([(1, "Y".to_string()), (2, "X".to_string())])
        );
        let t = build_sft_target(&q, &p).unwrap();
        assert_eq!(t.output, "Relevant Document IDs: [1] \\\\ Answer: Paris");
    }

    #[test]
    fn targets_ascending_and_omissions() {
        let u = unified(&[("X", "x"), ("Y", "y"), ("Z", "z")]);
        let sel = keys(&["X", "Y", "Z"]);
        let perm = Permutation {
            order: vec![2, 1, 0],
            seed_tag: String::new(),
        };
        let q = question(&["X", "Z"], "A");
        let p = build_gen_prompt(&q, &sel, &u, &perm, &PromptOptions::default()).unwrap();
        assert_eq!(build_sft_target(&q, &p).unwrap().relevant_ids, vec![1, 3]);

        let q = question(&["W"], "A");
        let t = build_sft_target(&q, &p).unwrap();
        assert!(t.output.starts_with("Relevant Document IDs: [] \\\\"));
        assert_eq!(t.omitted_gold, vec!["W"]);

        let q = question(&["X"], "");
        assert_eq!(build_sft_target(&q, &p), Err(GenError::NoAnswer("q".into())));
    }

    #[test]
    fn budget_truncates_but_keeps_every_docid() {
        let long: String = (0..2000).map(|i| format!("t{i} ")).collect();
        let u = unified(&[("X", long.as_str()), ("Y", "short text"), ("Z", long.as_str())]);
        let sel = keys(&["X", "Y", "Z"]);
        let opts = PromptOptions {
            token_budget: 400,
            ..Default::default()
        };
        let p = build_gen_prompt(&question(&["X"], "a"), &sel, &u, &Permutation::identity(3), &opts).unwrap();
        assert!(p.truncated);
        for i in 1..=3 {
            assert_eq!(p.text.matches(&format!("[DocID: {i}]")).count(), 1);
        }
        assert!(prompt::estimate_tokens(whitespace_len(&p.text), 1.3) <= 400);

        let tiny = PromptOptions {
            token_budget: 20,
            ..Default::default()
        };
        assert!(matches!(
            build_gen_prompt(&question(&["X"], "a"), &sel, &u, &Permutation::identity(3), &tiny),
            Err(GenError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn caps_are_proportional_and_bounded() {
        assert_eq!(proportional_caps(&[3, 4], 10), vec![3, 4]);
        let c = proportional_caps(&[1, 1, 1000], 3);
        assert_eq!(c.iter().sum::<usize>(), 3);
        assert!(c.iter().all(|&x| x >= 1));
        let c = proportional_caps(&[100, 300], 40);
        assert_eq!(c, vec![10, 30]);
    }

    #[test]
    fn single_pass_maps_ids() {
        let u = unified(&[("X", "x"), ("Y", "y")]);
        let q = question(&["X"], "A");
        let g: MockGenerator = serde_json::from_value(serde_json::json!({
            "kind": "position_biased", "default_answer": "A"
        }))
        .unwrap();
        let r = rerank_question(&q, &keys(&["X", "Y"]), &u, &g, &RerankOptions::default()).unwrap();
        assert_eq!(r.predicted_doc_keys, vec!["X"]);
        assert_eq!(r.answer, "A");
        assert_eq!(r.per_permutation.len(), 1);
    }

    fn out(ids: &[usize], answer: &str) -> GenOutput {
        GenOutput {
            relevant_ids: ids.to_vec(),
            answer: answer.into(),
            raw_text: String::new(),
            parse_status: ParseStatus::Clean,
        }
    }

    #[test]
    fn borda_and_answer_majority() {
        let u = unified(&[("X", "x"), ("Y", "y"), ("Z", "z")]);
        let sel = keys(&["X", "Y", "Z"]);
        let q = question(&["X"], "A");
        let perms = [
            Permutation::identity(3),
            Permutation {
                order: vec![1, 0, 2],
                seed_tag: String::new(),
            },
            Permutation {
                order: vec![2, 1, 0],
                seed_tag: String::new(),
            },
        ];
        let prompts: Vec<GenPrompt> = perms
            .iter()
            .map(|p| build_gen_prompt(&q, &sel, &u, p, &PromptOptions::default()).unwrap())
            .collect();
        // X sits at DocID 1, 2 and 3 respectively and is generated first each time
        let outs = [out(&[1, 2], "paris"), out(&[2, 3], "Paris."), out(&[3], "Lyon")];
        let pairs: Vec<_> = outs.iter().zip(&prompts).collect();
        let (docs, answer) = consensus(&pairs, &sel);
        assert_eq!(docs[0], "X");
        assert_eq!(answer, "paris");

        let two = [out(&[1], "Lyon"), out(&[1], "paris")];
        let pairs: Vec<_> = two.iter().zip(&prompts).collect();
        assert_eq!(consensus(&pairs, &sel).1, "Lyon");
    }

    #[test]
    fn failed_outputs_flagged() {
        let u = unified(&[("X", "x")]);
        let g: MockGenerator = serde_json::from_value(serde_json::json!({
            "kind": "scripted", "default": "no idea"
        }))
        .unwrap();
        let r = rerank_question(&question(&["X"], "A"), &keys(&["X"]), &u, &g, &RerankOptions::default()).unwrap();
        assert!(r.all_failed);
        assert!(r.predicted_doc_keys.is_empty());
        assert_eq!(r.answer, "");
    }
}
