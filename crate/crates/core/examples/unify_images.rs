//! Turn image documents into text with a captioner and a persistent cache.
//!
//!     cargo run --example unify_images

use mmrerank::backends::mock::MockCaptioner;
use mmrerank::corpus::{Corpus, Document, QuestionRecord, Split};
use mmrerank::unify::{unify_pool, CaptionCache, UnifyOptions, UnifyPrompt};

fn main() {
    let docs = vec![
        Document::text("t1", "Arc de Triomphe", "A triumphal arch in Paris.").with_label(1),
        Document::image("i1", "Arc de Triomphe", "arc.jpg").with_label(1),
        Document::image("i2", "Unknown landmark", "missing.jpg").with_label(0),
    ];
    let q = QuestionRecord {
        q_key: "q1".into(),
        question: "Where is the Arc de Triomphe?".into(),
        gold_answers: vec!["Paris".into()],
        candidate_pool: vec!["t1".into(), "i1".into(), "i2".into()],
        gold_doc_keys: vec!["t1".into(), "i1".into()],
        split: Split::Train,
    };
    let corpus = Corpus::new("demo", docs, vec![q]).unwrap();
    let captioner = MockCaptioner::new([("arc.jpg", "a stone arch with carved reliefs at a busy roundabout")]);

    let dir = tempfile::tempdir().unwrap();
    let cache = CaptionCache::open(&dir.path().join("cache.jsonl")).unwrap();
    let prompt = UnifyPrompt::default();
    let options = UnifyOptions { description_budget: 8 };

    let first = unify_pool(&corpus, &prompt, &captioner, &cache, options);
    for u in first.unified.values() {
        println!("{:<3} {:?}: {}", u.doc_key, u.provenance, u.unified_text);
    }
    println!("backend calls: {}, errors: {}", first.backend_calls, first.errors.len());

    // a second pass is served from the cache; the failed image is retried
    let second = unify_pool(&corpus, &prompt, &captioner, &cache, options);
    println!("second pass backend calls: {}", second.backend_calls);
}
