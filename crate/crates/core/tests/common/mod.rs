#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mmrerank::corpus::{Modality, QuestionRecord, Split};
use mmrerank::harness::Harness;
use mmrerank::unify::{Provenance, UnifiedDocument, UnifiedMap};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn landmarks() -> PathBuf {
    fixtures().join("landmarks")
}

/// Harness over the landmark fixture writing into `out`.
pub fn landmark_harness(out: &Path) -> Harness {
    Harness::from_config_file(&landmarks().join("pipeline.toml"), Some(out.to_path_buf()), None)
        .expect("fixture config")
}

/// Harness with ingest through tune-threshold already run.
pub fn stage1_harness(out: &Path) -> Harness {
    let mut h = landmark_harness(out);
    h.ingest().unwrap();
    h.unify().unwrap();
    h.train_ranker().unwrap();
    h.score().unwrap();
    h.tune_threshold().unwrap();
    h
}

pub fn synthetic_question(q_key: &str, pool: &[String], gold: &[String], answer: &str) -> QuestionRecord {
    QuestionRecord {
        q_key: q_key.into(),
        question: format!("question {q_key}"),
        gold_answers: vec![answer.into()],
        candidate_pool: pool.to_vec(),
        gold_doc_keys: gold.to_vec(),
        split: Split::Train,
    }
}

pub fn synthetic_unified(keys: &[String]) -> UnifiedMap {
    keys.iter()
        .map(|k| {
            (
                k.clone(),
                UnifiedDocument {
                    doc_key: k.clone(),
                    unified_text: format!("text of {k} with a few words"),
                    source_modality: Modality::Text,
                    provenance: Provenance::OriginalText,
                    cache_key: None,
                },
            )
        })
        .collect()
}
