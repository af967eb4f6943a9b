//! Emit permutation-augmented instruction-tuning records in Alpaca layout.
//!
//!     cargo run --example build_sft

use std::collections::BTreeMap;

use mmrerank::backends::mock::MockCaptioner;
use mmrerank::corpus::{Corpus, Document, QuestionRecord, Split};
use mmrerank::genrank::{emit_sft_dataset, AlpacaRecord, SftOptions};
use mmrerank::unify::{unify_document, UnifiedMap, UnifyOptions, UnifyPrompt};

fn main() {
    let docs = vec![
        Document::text(
            "a",
            "Taj Mahal",
            "A marble mausoleum in Agra commissioned by Shah Jahan.",
        )
        .with_label(1),
        Document::text("b", "Parthenon", "A temple on the Athenian Acropolis.").with_label(0),
        Document::text("c", "Colosseum", "An elliptical amphitheatre in Rome.").with_label(0),
        Document::text("d", "Red Fort", "A fort in Delhi also built under Shah Jahan.").with_label(0),
    ];
    let keys: Vec<String> = docs.iter().map(|d| d.doc_key.clone()).collect();
    let q = QuestionRecord {
        q_key: "q1".into(),
        question: "Who commissioned the Taj Mahal?".into(),
        gold_answers: vec!["Shah Jahan".into()],
        candidate_pool: keys.clone(),
        gold_doc_keys: vec!["a".into()],
        split: Split::Train,
    };
    let corpus = Corpus::new("demo", docs, vec![q]).unwrap();
    let captioner = MockCaptioner::default();
    let unified: UnifiedMap = corpus
        .documents
        .values()
        .map(|d| {
            let u = unify_document(
                d,
                &UnifyPrompt::default(),
                &captioner,
                UnifyOptions { description_budget: 96 },
            )
            .unwrap();
            (d.doc_key.clone(), u)
        })
        .collect();

    // stage-1 ordering; here simply the pool order
    let rankings = BTreeMap::from([("q1".to_string(), keys)]);
    let ds = emit_sft_dataset(&corpus, &rankings, &unified, &SftOptions::default());
    println!(
        "{} examples from {} question(s)",
        ds.report.examples, ds.report.questions
    );
    for e in &ds.examples {
        println!("order {:?} -> {}", e.permutation.order, e.output);
    }
    let first: AlpacaRecord = (&ds.examples[0]).into();
    println!("\n{}", serde_json::to_string_pretty(&first).unwrap());
}
