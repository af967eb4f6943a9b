//! Generative reranking over several prompt orders, with a content-driven
//! generator and one that always names the first document.
//!
//!     cargo run --example rerank_consensus

use std::collections::BTreeMap;

use mmrerank::backends::mock::MockGenerator;
use mmrerank::corpus::{Modality, QuestionRecord, Split};
use mmrerank::genrank::{rerank_question, RerankOptions};
use mmrerank::unify::{Provenance, UnifiedDocument, UnifiedMap};

fn main() {
    let texts = [
        ("d1", "Big Ben — a clock tower in London"),
        ("d2", "Eiffel Tower — wrought iron lattice tower in Paris"),
        ("d3", "Eiffel Tower — built for the 1889 World's Fair"),
        ("d4", "Colosseum — an amphitheatre in Rome"),
    ];
    let unified: UnifiedMap = texts
        .iter()
        .map(|(k, t)| {
            let u = UnifiedDocument {
                doc_key: k.to_string(),
                unified_text: t.to_string(),
                source_modality: Modality::Text,
                provenance: Provenance::OriginalText,
                cache_key: None,
            };
            (k.to_string(), u)
        })
        .collect();
    let selected: Vec<String> = texts.iter().map(|(k, _)| k.to_string()).collect();
    let q = QuestionRecord {
        q_key: "q1".into(),
        question: "What is the Eiffel Tower made of?".into(),
        gold_answers: vec!["wrought iron".into()],
        candidate_pool: selected.clone(),
        gold_doc_keys: vec!["d2".into()],
        split: Split::Test,
    };

    let keyed = MockGenerator::ContentKeyed {
        relevant: BTreeMap::from([("wrought iron".to_string(), 2.0), ("1889".to_string(), 1.0)]),
        per_question: BTreeMap::new(),
        answers: BTreeMap::new(),
        default_answer: "wrought iron".into(),
        max_ids: None,
    };
    let biased = MockGenerator::PositionBiased {
        answers: BTreeMap::new(),
        default_answer: "iron".into(),
    };
    for (name, generator) in [("content-keyed", &keyed), ("position-biased", &biased)] {
        for m in [1, 5] {
            let opts = RerankOptions {
                inference_perms: m,
                seed: 3,
                ..Default::default()
            };
            let r = rerank_question(&q, &selected, &unified, generator, &opts).unwrap();
            println!("{name:<16} perms={m}: {:?} answer={:?}", r.predicted_doc_keys, r.answer);
        }
    }
}
