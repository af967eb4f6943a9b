//! One pass/fail line per acceptance criterion. Oracles here are written from
//! the metric definitions and never call the code they check.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use mmrerank::backends::mock::MockGenerator;
use mmrerank::backends::Generator;
use mmrerank::corpus::{self, Split};
use mmrerank::eval::{exact_match, retrieval_f1, token_f1};
use mmrerank::genrank::{
    build_gen_prompt, build_sft_target, consensus, emit_sft_dataset, parse_gen_output, rerank_question,
    sample_permutations, ParseStatus, Permutation, PromptOptions, RerankOptions, SftOptions,
};
use mmrerank::harness::Variant;
use mmrerank::pointwise::{rank_loss, tune_threshold, LexicalScorerModel, QuestionScores, TrainConfig, TrainingPair};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
/// Name, runtime limit in seconds, check.
type Criterion = (&'static str, Option<u64>, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

// ---- oracles ----

/// Exact set F1 as a reduced-free fraction (numerator, denominator).
fn f1_fraction(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> (u64, u64) {
    if pred.is_empty() && gold.is_empty() {
        return (1, 1);
    }
    let hit = pred.iter().filter(|p| gold.contains(*p)).count() as u64;
    (2 * hit, (pred.len() + gold.len()) as u64)
}

fn f1_oracle(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    let (n, d) = f1_fraction(pred, gold);
    n as f64 / d as f64
}

const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

fn oracle_tokens(s: &str) -> Vec<String> {
    let cleaned: String = s.to_lowercase().chars().filter(|c| !PUNCT.contains(*c)).collect();
    cleaned
        .split_whitespace()
        .filter(|w| *w != "a" && *w != "an" && *w != "the")
        .map(str::to_string)
        .collect()
}

fn oracle_em(pred: &str, golds: &[String]) -> u8 {
    golds.iter().any(|g| oracle_tokens(g) == oracle_tokens(pred)) as u8
}

fn oracle_bag_f1(p: &[String], g: &[String]) -> f64 {
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let mut used = vec![false; g.len()];
    let mut common = 0;
    for t in p {
        if let Some(j) = (0..g.len()).find(|&j| !used[j] && &g[j] == t) {
            used[j] = true;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn oracle_token_f1(pred: &str, golds: &[String]) -> f64 {
    let p = oracle_tokens(pred);
    golds
        .iter()
        .map(|g| oracle_bag_f1(&p, &oracle_tokens(g)))
        .fold(0.0, f64::max)
}

// ---- criteria ----

fn c1_loss_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s: f64 = rng.random_range(1e-7..1.0 - 1e-7);
        let y: u8 = rng.random_range(0..2);
        let yf = f64::from(y);
        let oracle = -yf * s.ln() - (1.0 - yf) * (1.0 - s).ln();
        worst = worst.max(rel_err(rank_loss(s, y), oracle));
    }
    ensure(worst <= 1e-12, || format!("loss relative error {worst:e}"))?;

    let pairs = separable_pairs()?;
    let mut model = LexicalScorerModel::zeros(97, 5);
    for w in model.weights.iter_mut() {
        *w = rng.random_range(-0.5..0.5);
    }
    model.bias = 0.1;
    let data: Vec<_> = pairs
        .iter()
        .take(40)
        .map(|p| (model.features(&p.question, &p.document), p.label))
        .collect();
    let (_, grad, grad_bias) = model.loss_and_gradient(&data);
    let h = 1e-5;
    let mut worst_g: f64 = 0.0;
    for (i, g) in grad.iter().enumerate() {
        let mut plus = model.clone();
        plus.weights[i] += h;
        let mut minus = model.clone();
        minus.weights[i] -= h;
        let fd = (plus.mean_loss(&data) - minus.mean_loss(&data)) / (2.0 * h);
        if g.abs().max(fd.abs()) > 1e-9 {
            worst_g = worst_g.max(rel_err(*g, fd));
        }
    }
    let mut plus = model.clone();
    plus.bias += h;
    let mut minus = model.clone();
    minus.bias -= h;
    let fd = (plus.mean_loss(&data) - minus.mean_loss(&data)) / (2.0 * h);
    worst_g = worst_g.max(rel_err(grad_bias, fd));
    ensure(worst_g <= 1e-4, || format!("gradient relative error {worst_g:e}"))?;
    Ok(format!("loss rel err {worst:.1e}, gradient rel err {worst_g:.1e}"))
}

fn separable_pairs() -> Result<Vec<TrainingPair>, String> {
    let path = common::fixtures().join("separable_pairs.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn c2_ranker_learns() -> Check {
    let pairs = separable_pairs()?;
    ensure(pairs.len() == 200, || format!("{} pairs", pairs.len()))?;
    let model = LexicalScorerModel::train(&pairs, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for p in &pairs {
        let pos = model.probability(&p.question, &p.document) > 0.5;
        match (pos, p.label == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            _ => {}
        }
    }
    let f1 = 2.0 * tp / (2.0 * tp + fp + fneg);
    let log = &model.training_log;
    let increases = log.windows(2).filter(|w| w[1].mean_loss > w[0].mean_loss).count();
    ensure(f1 >= 0.95, || format!("F1 {f1:.4} < 0.95"))?;
    ensure(increases == 0 && !log.is_empty(), || {
        format!("{increases} loss increases over {} epochs", log.len())
    })?;
    Ok(format!(
        "F1@0.5 = {f1:.4}, loss {:.4} -> {:.4} over {} epochs",
        log[0].mean_loss,
        log[log.len() - 1].mean_loss,
        log.len()
    ))
}

fn c3_fivefold() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let h = common::stage1_harness(dir.path());
    let corpus = h.load_corpus().map_err(|e| e.to_string())?;
    let unified = h.load_unified().map_err(|e| e.to_string())?;
    let scored = h.load_scored().map_err(|e| e.to_string())?;
    let train = corpus::split_view(&corpus, Split::Train).len();
    let mut summary = Vec::new();
    for k in 1..=6usize {
        let rankings: BTreeMap<String, Vec<String>> = scored.iter().map(|(q, s)| (q.clone(), s.top_keys(k))).collect();
        let ds = emit_sft_dataset(&corpus, &rankings, &unified, &SftOptions::default());
        let per_q = match k {
            1 => 1,
            2 => 2,
            _ => 5,
        };
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &ds.examples {
            *counts.entry(e.q_key.as_str()).or_default() += 1;
        }
        ensure(
            ds.examples.len() == per_q * train && counts.values().all(|&c| c == per_q),
            || {
                format!(
                    "k={k}: {} lines for {train} questions, per question {counts:?}",
                    ds.examples.len()
                )
            },
        )?;
        summary.push(format!("k={k}:{}", ds.examples.len()));
    }
    Ok(format!("{train} training questions; {}", summary.join(" ")))
}

fn c4_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let k = rng.random_range(1..=20usize);
        let mut keys: Vec<String> = (0..k).map(|i| format!("d{case}_{i}")).collect();
        keys.shuffle(&mut rng);
        let gold: Vec<String> = keys.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
        let q = common::synthetic_question(&format!("q{case}"), &keys, &gold, "some answer");
        let unified = common::synthetic_unified(&keys);
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let perm = Permutation {
            order,
            seed_tag: format!("case{case}"),
        };
        let prompt =
            build_gen_prompt(&q, &keys, &unified, &perm, &PromptOptions::default()).map_err(|e| e.to_string())?;
        let example = build_sft_target(&q, &prompt).map_err(|e| e.to_string())?;
        let parsed = parse_gen_output(&example.output, k);
        let back: BTreeSet<String> = prompt.map_ids(&parsed.relevant_ids).into_iter().collect();
        let want: BTreeSet<String> = gold.iter().cloned().collect();
        ensure(parsed.parse_status == ParseStatus::Clean && back == want, || {
            format!("case {case} (k={k}): {:?} -> {:?}", want, back)
        })?;
    }
    Ok("1000/1000 cases reproduce the gold set".into())
}

fn c5_consensus() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let h = common::stage1_harness(dir.path());
    let corpus = h.load_corpus().map_err(|e| e.to_string())?;
    let unified = h.load_unified().map_err(|e| e.to_string())?;
    let scored = h.load_scored().map_err(|e| e.to_string())?;
    let k = h.config().stage1.k;
    let fx = common::landmarks();
    let keyed = MockGenerator::from_file(&fx.join("mock_generator.json")).map_err(|e| e.to_string())?;
    let biased = MockGenerator::from_file(&fx.join("mock_generator_biased.json")).map_err(|e| e.to_string())?;
    let options = PromptOptions::default();
    let mut differing = 0;
    for q in &corpus.questions {
        let selected = scored[&q.q_key].top_keys(k);
        let perms = sample_permutations(selected.len(), 5, 99);
        let mut results = Vec::new();
        for p in &perms {
            let prompt = build_gen_prompt(q, &selected, &unified, p, &options).map_err(|e| e.to_string())?;
            let raw = keyed.generate(&prompt.text).map_err(|e| e.to_string())?;
            let out = parse_gen_output(&raw, prompt.k());
            results.push(consensus(&[(&out, &prompt)], &selected));
        }
        let multi = rerank_question(
            q,
            &selected,
            &unified,
            &keyed,
            &RerankOptions {
                inference_perms: 5,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        results.push((multi.predicted_doc_keys, multi.answer));
        ensure(results.windows(2).all(|w| w[0] == w[1]), || {
            format!("{}: results vary {results:?}", q.q_key)
        })?;

        let single =
            rerank_question(q, &selected, &unified, &biased, &RerankOptions::default()).map_err(|e| e.to_string())?;
        let voted = rerank_question(
            q,
            &selected,
            &unified,
            &biased,
            &RerankOptions {
                inference_perms: 5,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        if single.predicted_doc_keys != voted.predicted_doc_keys {
            differing += 1;
        }
    }
    ensure(differing >= 1, || {
        "position-biased mock gave identical single-pass and consensus results".into()
    })?;
    Ok(format!(
        "content-keyed invariant on {} questions; position-biased differs on {differing}",
        corpus.questions.len()
    ))
}

fn c6_metrics() -> Check {
    let vocab = [
        "the", "a", "an", "New", "york", "York", "City", "city,", "Paris", "paris.", "of", "(the)", "1", "A-B", "ab",
        "x",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let phrase = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(0..5);
        (0..n)
            .map(|_| vocab[rng.random_range(0..vocab.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let pred = phrase(&mut rng);
        let golds: Vec<String> = (0..rng.random_range(1..4)).map(|_| phrase(&mut rng)).collect();
        ensure(exact_match(&pred, &golds) == oracle_em(&pred, &golds), || {
            format!("EM mismatch on {pred:?} vs {golds:?}")
        })?;
        let d = (token_f1(&pred, &golds) - oracle_token_f1(&pred, &golds)).abs();
        ensure(d <= 1e-12, || format!("token F1 mismatch on {pred:?} vs {golds:?}"))?;
        worst = worst.max(d);

        let set = |rng: &mut ChaCha8Rng| -> BTreeSet<String> {
            (0..6)
                .filter(|_| rng.random_bool(0.4))
                .map(|j| format!("d{j}"))
                .collect()
        };
        let (p, g) = (set(&mut rng), set(&mut rng));
        let d = (retrieval_f1(&p, &g).f1 - f1_oracle(&p, &g)).abs();
        ensure(d <= 1e-12, || {
            format!("instance {i}: retrieval F1 mismatch {p:?} vs {g:?}")
        })?;
        worst = worst.max(d);
    }
    let example = token_f1("New York City", &["York City".to_string()]);
    ensure((example - 0.8).abs() <= 1e-12, || {
        format!("documented example gives {example}")
    })?;
    Ok(format!(
        "10000 instances agree (max |diff| {worst:.1e}); example = {example}"
    ))
}

/// Smallest threshold on a 0.1 grid maximizing the exact mean F1.
fn threshold_oracle(qs: &[QuestionScores]) -> (f64, (u64, u64)) {
    let mut best: Option<(f64, (u64, u64))> = None;
    for step in 0..=10 {
        let t = step as f64 / 10.0;
        // mean of fractions, kept exact: sum n_i/d_i over a common denominator
        let (mut num, mut den) = (0u64, 1u64);
        for q in qs {
            let pred: BTreeSet<String> = q
                .scored
                .iter()
                .filter(|(_, s)| *s > t)
                .map(|(k, _)| k.clone())
                .collect();
            let (n, d) = f1_fraction(&pred, &q.gold);
            num = num * d + n * den;
            den *= d;
        }
        den *= qs.len() as u64;
        let better = match best {
            None => true,
            Some((_, (bn, bd))) => (num as u128) * (bd as u128) > (bn as u128) * (den as u128),
        };
        if better {
            best = Some((t, (num, den)));
        }
    }
    best.unwrap()
}

const GRID: [f64; 3] = [0.2, 0.5, 0.8];

/// Every question of `n` documents with grid scores and gold bits.
fn all_questions(n: usize, tag: &str) -> Vec<QuestionScores> {
    let per_doc = GRID.len() * 2;
    let total = per_doc.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut scored = Vec::new();
            let mut gold = BTreeSet::new();
            for j in 0..n {
                let c = code % per_doc;
                code /= per_doc;
                let key = format!("{tag}d{j}");
                scored.push((key.clone(), GRID[c / 2]));
                if c % 2 == 1 {
                    gold.insert(key);
                }
            }
            QuestionScores {
                q_key: tag.into(),
                scored,
                gold,
            }
        })
        .collect()
}

fn c7_threshold() -> Check {
    let mut instances: Vec<Vec<QuestionScores>> = Vec::new();
    for n in 1..=4 {
        instances.extend(all_questions(n, "a").into_iter().map(|q| vec![q]));
    }
    let small: Vec<QuestionScores> = (1..=2).flat_map(|n| all_questions(n, "b")).collect();
    let small_c: Vec<QuestionScores> = (1..=2).flat_map(|n| all_questions(n, "c")).collect();
    for a in &small {
        for b in &small_c {
            instances.push(vec![a.clone(), b.clone()]);
        }
    }
    let pairs = [all_questions(2, "a"), all_questions(2, "b"), all_questions(2, "c")];
    for a in &pairs[0] {
        for b in &pairs[1] {
            for c in &pairs[2] {
                instances.push(vec![a.clone(), b.clone(), c.clone()]);
            }
        }
    }
    let exhaustive = instances.len();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let four = [all_questions(4, "a"), all_questions(4, "b"), all_questions(4, "c")];
    for _ in 0..5000 {
        instances.push(
            four.iter()
                .map(|qs| qs[rng.random_range(0..qs.len())].clone())
                .collect(),
        );
    }
    for qs in &instances {
        let got = tune_threshold(qs);
        let (t, (n, d)) = threshold_oracle(qs);
        let f1 = n as f64 / d as f64;
        ensure(got.threshold == t && (got.dev_f1 - f1).abs() <= 1e-12, || {
            format!("{qs:?}: got ({}, {}), oracle ({t}, {f1})", got.threshold, got.dev_f1)
        })?;
    }
    Ok(format!("{exhaustive} exhaustive + 5000 sampled 3x4 instances agree"))
}

fn c8_end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut h = common::landmark_harness(dir.path());
    h.run_all().map_err(|e| e.to_string())?;
    let got = std::fs::read(h.path("eval_report.json")).map_err(|e| e.to_string())?;
    let expected_path = common::landmarks().join("expected_eval_report.json");
    let expected = std::fs::read(&expected_path).map_err(|e| e.to_string())?;
    ensure(got == expected, || {
        "eval_report.json differs from the checked-in report".into()
    })?;

    // the checked-in numbers themselves, against the results and gold
    let report: serde_json::Value = serde_json::from_slice(&expected).map_err(|e| e.to_string())?;
    let corpus = h.load_corpus().map_err(|e| e.to_string())?;
    let results = h.load_results().map_err(|e| e.to_string())?;
    let rows = report["retrieval"]["per_question"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let answers = report["answers"]["per_question"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    ensure(rows.len() == results.len() && answers.len() == results.len(), || {
        "row count mismatch".into()
    })?;
    for ((r, row), ans) in results.iter().zip(&rows).zip(&answers) {
        let q = corpus.question(&r.q_key).ok_or("unknown question")?;
        let pred: BTreeSet<String> = r.predicted_doc_keys.iter().cloned().collect();
        let f1 = f1_oracle(&pred, &q.gold_set());
        ensure((row["f1"].as_f64().unwrap_or(-1.0) - f1).abs() <= 1e-12, || {
            format!("{}: retrieval F1", r.q_key)
        })?;
        ensure(
            ans["em"].as_u64() == Some(oracle_em(&r.answer, &q.gold_answers) as u64),
            || format!("{}: EM", r.q_key),
        )?;
        let tf = oracle_token_f1(&r.answer, &q.gold_answers);
        ensure((ans["token_f1"].as_f64().unwrap_or(-1.0) - tf).abs() <= 1e-12, || {
            format!("{}: token F1", r.q_key)
        })?;
    }
    Ok(format!(
        "{} bytes match; {} questions re-checked",
        got.len(),
        results.len()
    ))
}

fn c9_sweep() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut h = common::stage1_harness(dir.path());
    let ks = vec![1, 5, 10, 15, 20];
    h.sweep_doccount(Some(ks.clone())).map_err(|e| e.to_string())?;
    let report = h.load_sweep().map_err(|e| e.to_string())?;
    let got_ks: Vec<usize> = report.rows.iter().map(|r| r.k).collect();
    ensure(got_ks == ks, || format!("rows for k = {got_ks:?}"))?;
    let csv = std::fs::read_to_string(h.path("sweep_doccount.csv")).map_err(|e| e.to_string())?;
    ensure(csv.lines().count() == ks.len() + 1, || "csv row count".into())?;

    let corpus = h.load_corpus().map_err(|e| e.to_string())?;
    let scored = h.load_scored().map_err(|e| e.to_string())?;
    let mut recalls = Vec::new();
    for (row, &k) in report.rows.iter().zip(&ks) {
        let qs: Vec<_> = corpus::split_view(&corpus, Split::Test)
            .into_iter()
            .filter(|q| !q.gold_doc_keys.is_empty())
            .collect();
        let mut sum = 0.0;
        for q in &qs {
            let mut ranking = scored[&q.q_key].ranking.clone();
            ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_key.cmp(&b.doc_key)));
            let top: Vec<&str> = ranking.iter().take(k).map(|r| r.doc_key.as_str()).collect();
            sum += q.gold_doc_keys.iter().filter(|g| top.contains(&g.as_str())).count() as f64
                / q.gold_doc_keys.len() as f64;
        }
        let oracle = sum / qs.len() as f64;
        let got = row.recall_at_k.ok_or("missing recall")?;
        ensure((got - oracle).abs() <= 1e-12, || {
            format!("k={k}: recall {got} vs oracle {oracle}")
        })?;
        recalls.push(got);
    }
    ensure(recalls.windows(2).all(|w| w[1] >= w[0]), || {
        format!("recall not monotone: {recalls:?}")
    })?;
    Ok(format!("recall@k = {recalls:?}"))
}

fn c10_ablation() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut h = common::stage1_harness(dir.path());
    h.ablate().map_err(|e| e.to_string())?;
    let report = h.load_ablation().map_err(|e| e.to_string())?;
    let variants: Vec<Variant> = report.rows.iter().map(|r| r.variant).collect();
    ensure(variants == Variant::ALL, || format!("variants {variants:?}"))?;

    let threshold: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(h.path("threshold.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let t = threshold["threshold"].as_f64().ok_or("threshold.json")?;
    let corpus = h.load_corpus().map_err(|e| e.to_string())?;
    let scored = h.load_scored().map_err(|e| e.to_string())?;
    let qs = corpus::split_view(&corpus, Split::Test);
    let oracle = qs
        .iter()
        .map(|q| {
            let pred: BTreeSet<String> = scored[&q.q_key]
                .ranking
                .iter()
                .filter(|r| r.score > t)
                .map(|r| r.doc_key.clone())
                .collect();
            f1_oracle(&pred, &q.gold_set())
        })
        .sum::<f64>()
        / qs.len() as f64;
    let qa = report
        .rows
        .iter()
        .find(|r| r.variant == Variant::QaOnly)
        .ok_or("no qa_only row")?;
    let got = qa.retr_f1.ok_or("qa_only has no retrieval F1")?;
    ensure((got - oracle).abs() <= 1e-12, || {
        format!("qa_only Retr-F1 {got} vs recomputed {oracle}")
    })?;
    Ok(format!(
        "4 rows; qa_only Retr-F1 {got:.4} = stage-1 selection at t={t:.4}"
    ))
}

fn main() {
    // runtime limits only where the criterion states one
    let criteria: [Criterion; 10] = [
        ("loss and gradient oracles", Some(5), c1_loss_oracle),
        ("lexical ranker learns separable set", Some(30), c2_ranker_learns),
        ("fivefold SFT augmentation", None, c3_fivefold),
        ("permutation round trip", None, c4_round_trip),
        ("consensus invariance", None, c5_consensus),
        ("metric oracles", None, c6_metrics),
        ("threshold tuning brute force", None, c7_threshold),
        ("end-to-end fixture report", Some(60), c8_end_to_end),
        ("sweep recall@k monotone", None, c9_sweep),
        ("ablation plumbing", None, c10_ablation),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(d) if limit.is_some_and(|l| elapsed > Duration::from_secs(l)) => {
                Err(format!("{d}; took {elapsed:.2?}, limit {}s", limit.unwrap_or_default()))
            }
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
