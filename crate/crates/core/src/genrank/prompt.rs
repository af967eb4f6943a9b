//! Generator prompts in the Stanford-Alpaca instruction layout.

use super::TargetMode;

/// Separator between the question and the document list, and between the
/// id list and the answer in targets: two literal backslashes.
pub const SECTION_SEP: &str = "\\\\";
pub const DOCID_PREFIX: &str = "[DocID: ";

const ALPACA_PREAMBLE: &str = "Below is an instruction that describes a task, paired with an input that provides further context. Write a response that appropriately completes the request.";
const RESPONSE_HEADER: &str = "### Response:";

pub fn instruction(mode: TargetMode) -> &'static str {
    match mode {
        TargetMode::Full => {
            "Given a question and a list of candidate documents, list the IDs of the documents that are relevant to the question, then give a short answer to the question."
        }
        TargetMode::RetrievalOnly => {
            "Given a question and a list of candidate documents, list the IDs of the documents that are relevant to the question."
        }
        TargetMode::AnswerOnly => "Given a question and a list of candidate documents, give a short answer to the question.",
    }
}

/// `Question: {q} \\ Documents:` followed by one `[DocID: i] text` line per document.
pub fn render_input(question: &str, docs: &[&str]) -> String {
    let mut out = format!("Question: {question} {SECTION_SEP} Documents:");
    for (i, text) in docs.iter().enumerate() {
        out.push('\n');
        out.push_str(DOCID_PREFIX);
        out.push_str(&(i + 1).to_string());
        out.push(']');
        if !text.is_empty() {
            out.push(' ');
            out.push_str(text);
        }
    }
    out
}

pub fn render_alpaca(mode: TargetMode, input: &str) -> String {
    format!(
        "{ALPACA_PREAMBLE}\n\n### Instruction:\n{}\n\n### Input:\n{input}\n\n{RESPONSE_HEADER}\n",
        instruction(mode)
    )
}

/// The question and numbered documents recovered from a rendered prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadPrompt {
    pub question: String,
    pub documents: Vec<(usize, String)>,
}

/// Reads a prompt produced by [`render_alpaca`] or [`render_input`].
pub fn read_gen_prompt(text: &str) -> Option<ReadPrompt> {
    let start = text.find("Question: ")? + "Question: ".len();
    let rest = &text[start..];
    let header = format!(" {SECTION_SEP} Documents:");
    let end = rest.find(&header)?;
    let question = rest[..end].to_string();
    let mut documents = Vec::new();
    for line in rest[end + header.len()..].lines() {
        if line.starts_with(RESPONSE_HEADER) {
            break;
        }
        let Some(body) = line.strip_prefix(DOCID_PREFIX) else {
            continue;
        };
        let Some((id, doc)) = body.split_once(']') else {
            continue;
        };
        if let Ok(id) = id.parse::<usize>() {
            documents.push((id, doc.trim_start().to_string()));
        }
    }
    Some(ReadPrompt { question, documents })
}

/// Whitespace tokens scaled by `inflation`, rounded up.
pub fn estimate_tokens(whitespace_tokens: usize, inflation: f64) -> usize {
    (whitespace_tokens as f64 * inflation).ceil() as usize
}

/// The largest whitespace-token count whose estimate stays within `budget`.
pub fn max_whitespace_tokens(budget: usize, inflation: f64) -> usize {
    let mut n = (budget as f64 / inflation).floor().max(0.0) as usize;
    while n > 0 && estimate_tokens(n, inflation) > budget {
        n -= 1;
    }
    while estimate_tokens(n + 1, inflation) <= budget {
        n += 1;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_layout() {
        let s = render_input("Who?", &["X text", "Y text"]);
        assert_eq!(
            s,
            "Question: Who? \\\\ Documents:\n[DocID: 1] X text\n[DocID: 2] Y text"
        );
    }

    #[test]
    fn alpaca_round_trip() {
        let text = render_alpaca(TargetMode::Full, &render_input("Who built it?", &["a b", "c"]));
        assert!(text.contains("### Instruction:\n"));
        assert!(text.ends_with("### Response:\n"));
        let read = read_gen_prompt(&text).unwrap();
        assert_eq!(read.question, "Who built it?");
        assert_eq!(read.documents, vec![(1, "a b".to_string()), (2, "c".to_string())]);
        assert_eq!(read_gen_prompt("nothing here"), None);
    }

    #[test]
    fn budget_arithmetic() {
        assert_eq!(estimate_tokens(10, 1.3), 13);
        for budget in [0, 1, 13, 100, 8192] {
            let n = max_whitespace_tokens(budget, 1.3);
            assert!(estimate_tokens(n, 1.3) <= budget);
            assert!(estimate_tokens(n + 1, 1.3) > budget);
        }
    }
}
