//! Retrieval and answer metrics on a handful of predictions.
//!
//!     cargo run --example evaluate_answers

use std::collections::BTreeSet;

use mmrerank::eval::{exact_match, keyword_accuracy, normalize_answer, qa_score, retrieval_f1, token_f1};

fn main() {
    let gold = vec!["York City".to_string()];
    for pred in ["New York City", "the york city.", "Boston"] {
        println!(
            "{pred:<16} norm={:<14} EM={} F1={:.3}",
            normalize_answer(pred),
            exact_match(pred, &gold),
            token_f1(pred, &gold)
        );
    }

    let predicted: BTreeSet<&str> = ["d1", "d4"].into();
    let relevant: BTreeSet<&str> = ["d1", "d2"].into();
    let prf = retrieval_f1(&predicted, &relevant);
    println!("retrieval P={:.2} R={:.2} F1={:.2}", prf.precision, prf.recall, prf.f1);

    let keywords = vec![
        vec!["iron".to_string()],
        vec!["lattice".to_string(), "grid".to_string()],
    ];
    let acc = keyword_accuracy("a wrought iron lattice", &keywords);
    println!(
        "keyword accuracy {acc:.2}, QA with fluency 0.9: {:.2}",
        qa_score(Some(0.9), acc).unwrap()
    );
}
