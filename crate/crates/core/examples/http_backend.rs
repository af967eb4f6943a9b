//! Drive the JSON-over-HTTP generator client against a scripted transport.
//! Swap the transport for `UreqTransport` to talk to a real endpoint.
//!
//!     cargo run --example http_backend

use std::sync::Arc;

use mmrerank::backends::mock::ScriptedTransport;
use mmrerank::backends::{BackendConfig, Generator, HttpGenerator};

fn main() {
    let config: BackendConfig = serde_json::from_value(serde_json::json!({
        "endpoint": "http://localhost:8000/v1/completions",
        "role": "generator",
        "request_template": {"model": "reranker", "prompt": "{prompt}", "max_tokens": 64},
        "response_path": "/choices/0/text",
        "max_retries": 2,
        "backoff_base_ms": 1
    }))
    .unwrap();

    // one transient failure, then a completion
    let transport = Arc::new(ScriptedTransport::sequence(vec![
        (503, "busy".into()),
        (
            200,
            r#"{"choices": [{"text": "Relevant Document IDs: [2] \\\\ Answer: Paris"}]}"#.into(),
        ),
    ]));
    let generator = HttpGenerator::with_transport(config, transport.clone()).unwrap();
    let out = generator
        .generate("Question: where? \\\\ Documents:\n[DocID: 1] a\n[DocID: 2] b")
        .unwrap();
    println!("completion: {out}");
    println!("requests sent: {}", transport.requests().len());
    println!("last body: {}", transport.requests().last().unwrap());
}
