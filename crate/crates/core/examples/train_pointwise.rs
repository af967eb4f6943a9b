//! Train the lexical pointwise ranker, score a pool and pick a threshold.
//!
//!     cargo run --example train_pointwise

use std::collections::BTreeSet;

use mmrerank::pointwise::{
    select_above, tune_threshold, LexicalScorerModel, QuestionScores, TrainConfig, TrainingPair,
};

fn pair(q: &str, d: &str, label: u8) -> TrainingPair {
    TrainingPair {
        question: q.into(),
        document: d.into(),
        label,
    }
}

fn main() {
    let train = vec![
        pair("what colour is the bridge", "the bridge is painted orange", 1),
        pair("what colour is the bridge", "a marble temple on a hill", 0),
        pair("who built the tower", "the tower was built by eiffel", 1),
        pair("who built the tower", "a copper statue in the harbor", 0),
        pair("where is the temple", "a marble temple on a hill in athens", 1),
        pair("where is the temple", "the bridge is painted orange", 0),
    ];
    let model = LexicalScorerModel::train(
        &train,
        &TrainConfig {
            epochs: 50,
            ..Default::default()
        },
    )
    .unwrap();
    let log = &model.training_log;
    println!("loss {:.4} -> {:.4}", log[0].mean_loss, log[log.len() - 1].mean_loss);

    let question = "what is the statue made of";
    let pool = [
        ("s1", "the statue is made of copper"),
        ("s2", "the bridge spans the strait"),
        ("s3", "a statue of copper sheets on an iron frame"),
    ];
    let scored: Vec<(String, f64)> = pool
        .iter()
        .map(|(k, d)| (k.to_string(), model.probability(question, d)))
        .collect();
    for (k, s) in &scored {
        println!("{k}: {s:.3}");
    }

    let dev = vec![QuestionScores {
        q_key: "dev1".into(),
        scored: scored.clone(),
        gold: ["s1", "s3"].iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
    }];
    let report = tune_threshold(&dev);
    println!("threshold {:.3} (dev F1 {:.3})", report.threshold, report.dev_f1);
    println!("selected: {:?}", select_above(&scored, report.threshold));
}
