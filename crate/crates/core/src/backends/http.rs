//! JSON-over-HTTP backend.
//!
//! A request body is produced from a JSON template by substituting the
//! `{prompt}` (and for captioners `{image}`, base64) slots inside string
//! values. The output is read from the response with a JSON pointer. Any
//! status of 400 and above is a [`BackendError::BadStatus`].

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{clamp_probability, BackendError, Captioner, Generator, InFlightLimit, RetryPolicy, Role, Scorer};

pub const PROMPT_SLOT: &str = "{prompt}";
pub const IMAGE_SLOT: &str = "{image}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthHeader {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub role: Role,
    pub request_template: Value,
    /// JSON pointer to the output field, e.g. `/choices/0/text`.
    pub response_path: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub auth_header: Option<AuthHeader>,
    /// Identifier recorded with scores; defaults to the endpoint.
    #[serde(default)]
    pub id: Option<String>,
    /// Base directory for relative image paths.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
}

fn default_timeout() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    200
}
fn default_in_flight() -> usize {
    4
}

fn template_contains(v: &Value, slot: &str) -> bool {
    match v {
        Value::String(s) => s.contains(slot),
        Value::Array(items) => items.iter().any(|i| template_contains(i, slot)),
        Value::Object(map) => map.values().any(|i| template_contains(i, slot)),
        _ => false,
    }
}

fn fill_template(v: &Value, slots: &[(&str, &str)]) -> Value {
    match v {
        Value::String(s) => {
            let mut out = s.clone();
            for (slot, value) in slots {
                if out.contains(slot) {
                    out = out.replace(slot, value);
                }
            }
            Value::String(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(|i| fill_template(i, slots)).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, i)| (k.clone(), fill_template(i, slots))).collect()),
        other => other.clone(),
    }
}

impl BackendConfig {
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let cfg: BackendConfig =
            serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// `MMRERANK_<ROLE>_ENDPOINT` and `MMRERANK_<ROLE>_AUTH` replace the
    /// endpoint and the auth header value.
    pub fn apply_env_overrides(&mut self) {
        let role = self.role.to_string().to_ascii_uppercase();
        if let Ok(endpoint) = std::env::var(format!("MMRERANK_{role}_ENDPOINT")) {
            self.endpoint = endpoint;
        }
        if let Ok(value) = std::env::var(format!("MMRERANK_{role}_AUTH")) {
            let name = self
                .auth_header
                .as_ref()
                .map(|h| h.name.clone())
                .unwrap_or_else(|| "Authorization".into());
            self.auth_header = Some(AuthHeader { name, value });
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout_ms must be positive".into()));
        }
        if !template_contains(&self.request_template, PROMPT_SLOT) {
            return Err(BackendError::Config(format!(
                "request template lacks the {PROMPT_SLOT} slot"
            )));
        }
        if self.role == Role::Captioner && !template_contains(&self.request_template, IMAGE_SLOT) {
            return Err(BackendError::Config(format!(
                "captioner request template lacks the {IMAGE_SLOT} slot"
            )));
        }
        if !self.response_path.is_empty() && !self.response_path.starts_with('/') {
            return Err(BackendError::Config("response_path must be a JSON pointer".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay_ms: self.backoff_base_ms,
            max_delay_ms: self.backoff_base_ms.saturating_mul(32).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout(String),
    Unreachable(String),
    Io(String),
}

/// A raw HTTP response: status code and body text.
#[derive(Debug, Clone, PartialEq)]
pub struct WireResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<WireResponse, TransportError>;
    fn get_bytes(&self, url: &str) -> Result<Vec<u8>, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        UreqTransport { agent }
    }
}

fn map_ureq(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
        ureq::Error::Io(io) => TransportError::Unreachable(io.to_string()),
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => TransportError::Unreachable(e.to_string()),
        other => TransportError::Io(other.to_string()),
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<WireResponse, TransportError> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send_json(body).map_err(map_ureq)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(map_ureq)?;
        Ok(WireResponse { status, body })
    }

    fn get_bytes(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        let mut resp = self.agent.get(url).call().map_err(map_ureq)?;
        if resp.status().as_u16() >= 400 {
            return Err(TransportError::Io(format!("status {}", resp.status())));
        }
        resp.body_mut().read_to_vec().map_err(map_ureq)
    }
}

/// Role-agnostic core shared by the three typed handles.
struct HttpCore {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    limit: InFlightLimit,
    retry: RetryPolicy,
}

impl HttpCore {
    fn new(config: BackendConfig, role: Role, transport: Option<Arc<dyn Transport>>) -> Result<Self, BackendError> {
        config.validate()?;
        if config.role != role {
            return Err(BackendError::Config(format!(
                "configuration is for a {} but a {} handle was requested",
                config.role, role
            )));
        }
        let transport =
            transport.unwrap_or_else(|| Arc::new(UreqTransport::new(Duration::from_millis(config.timeout_ms))));
        Ok(HttpCore {
            limit: InFlightLimit::new(config.max_in_flight),
            retry: config.retry_policy(),
            config,
            transport,
        })
    }

    fn headers(&self) -> Vec<(String, String)> {
        let mut h = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(a) = &self.config.auth_header {
            h.push((a.name.clone(), a.value.clone()));
        }
        h
    }

    fn call_once(&self, body: &Value) -> Result<Value, BackendError> {
        let _permit = self.limit.acquire();
        let resp = self
            .transport
            .post_json(&self.config.endpoint, &self.headers(), body)
            .map_err(|e| match e {
                TransportError::Timeout(m) => BackendError::Timeout(m),
                TransportError::Unreachable(m) => BackendError::Timeout(format!("endpoint unreachable: {m}")),
                TransportError::Io(m) => BackendError::BadStatus { status: 0, detail: m },
            })?;
        if resp.status >= 400 {
            return Err(BackendError::BadStatus {
                status: resp.status,
                detail: resp.body.chars().take(200).collect(),
            });
        }
        let json: Value = serde_json::from_str(&resp.body).map_err(|e| BackendError::BadStatus {
            status: resp.status,
            detail: format!("response is not JSON: {e}"),
        })?;
        let field = if self.config.response_path.is_empty() {
            Some(&json)
        } else {
            json.pointer(&self.config.response_path)
        };
        field.cloned().ok_or_else(|| BackendError::BadStatus {
            status: resp.status,
            detail: format!("response has no field at '{}'", self.config.response_path),
        })
    }

    fn call(&self, slots: &[(&str, &str)]) -> Result<Value, BackendError> {
        let body = fill_template(&self.config.request_template, slots);
        self.retry.run(|| self.call_once(&body))
    }

    fn call_text(&self, slots: &[(&str, &str)]) -> Result<String, BackendError> {
        match self.call(slots)? {
            Value::String(s) if !s.trim().is_empty() => Ok(s),
            Value::String(_) | Value::Null => Err(BackendError::EmptyResponse),
            other => Ok(other.to_string()),
        }
    }

    fn read_image(&self, image_ref: &str) -> Result<Vec<u8>, BackendError> {
        if image_ref.starts_with("http://") || image_ref.starts_with("https://") {
            return self
                .transport
                .get_bytes(image_ref)
                .map_err(|_| BackendError::UnreadableImage(image_ref.to_string()));
        }
        let path = Path::new(image_ref);
        let path = match (&self.config.image_root, path.is_absolute()) {
            (Some(root), false) => root.join(path),
            _ => path.to_path_buf(),
        };
        std::fs::read(&path).map_err(|_| BackendError::UnreadableImage(image_ref.to_string()))
    }
}

pub struct HttpCaptioner(HttpCore);
pub struct HttpScorer(HttpCore);
pub struct HttpGenerator(HttpCore);

impl HttpCaptioner {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        HttpCore::new(config, Role::Captioner, None).map(Self)
    }
    pub fn with_transport(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        HttpCore::new(config, Role::Captioner, Some(transport)).map(Self)
    }
}

impl HttpScorer {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        HttpCore::new(config, Role::Scorer, None).map(Self)
    }
    pub fn with_transport(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        HttpCore::new(config, Role::Scorer, Some(transport)).map(Self)
    }
}

impl HttpGenerator {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        HttpCore::new(config, Role::Generator, None).map(Self)
    }
    pub fn with_transport(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        HttpCore::new(config, Role::Generator, Some(transport)).map(Self)
    }
}

impl Captioner for HttpCaptioner {
    fn caption(&self, image_ref: &str, prompt: &str) -> Result<String, BackendError> {
        let bytes = self.0.read_image(image_ref)?;
        let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
        self.0.call_text(&[(PROMPT_SLOT, prompt), (IMAGE_SLOT, &encoded)])
    }
}

impl Scorer for HttpScorer {
    fn id(&self) -> String {
        self.0
            .config
            .id
            .clone()
            .unwrap_or_else(|| self.0.config.endpoint.clone())
    }

    fn score(&self, prompt: &str) -> Result<f64, BackendError> {
        let value = match self.0.call(&[(PROMPT_SLOT, prompt)])? {
            Value::Number(n) => n.as_f64().ok_or_else(|| BackendError::NonNumeric(n.to_string()))?,
            Value::String(s) if s.trim().is_empty() => return Err(BackendError::EmptyResponse),
            Value::String(s) => s.trim().parse::<f64>().map_err(|_| BackendError::NonNumeric(s))?,
            Value::Null => return Err(BackendError::EmptyResponse),
            other => return Err(BackendError::NonNumeric(other.to_string())),
        };
        clamp_probability(value, &self.id())
    }

    fn score_batch(&self, prompts: &[String]) -> Vec<Result<f64, BackendError>> {
        prompts.par_iter().map(|p| self.score(p)).collect()
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        self.0.call_text(&[(PROMPT_SLOT, prompt)])
    }
}

#[cfg(test)]
mod tests {
    use super::super::mock::ScriptedTransport;
    use super::*;
    use serde_json::json;

    fn config(role: Role) -> BackendConfig {
        BackendConfig {
            endpoint: "http://backend.invalid/v1".into(),
            role,
            request_template: json!({"model": "m", "prompt": "{prompt}", "image": "{image}"}),
            response_path: "/out".into(),
            timeout_ms: 100,
            max_retries: 2,
            backoff_base_ms: 1,
            max_in_flight: 2,
            auth_header: Some(AuthHeader {
                name: "Authorization".into(),
                value: "Bearer t".into(),
            }),
            id: None,
            image_root: None,
        }
    }

    #[test]
    fn template_slots_validated() {
        let mut c = config(Role::Captioner);
        c.request_template = json!({"prompt": "{prompt}"});
        assert!(matches!(c.validate(), Err(BackendError::Config(_))));
        let mut c = config(Role::Generator);
        c.request_template = json!({"text": "nothing"});
        assert!(c.validate().is_err());
        let mut c = config(Role::Generator);
        c.timeout_ms = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn a_handle_serves_one_role() {
        assert!(HttpScorer::new(config(Role::Generator)).is_err());
    }

    #[test]
    fn score_response_pass_through_and_clamp() {
        let t = Arc::new(ScriptedTransport::always(200, r#"{"out": "0.73"}"#));
        let s = HttpScorer::with_transport(config(Role::Scorer), t.clone()).unwrap();
        assert_eq!(s.score("Question: a Document: b </s>").unwrap(), 0.73);
        let sent = t.requests();
        assert_eq!(sent[0]["prompt"], "Question: a Document: b </s>");

        let t = Arc::new(ScriptedTransport::always(200, r#"{"out": 1.2}"#));
        let s = HttpScorer::with_transport(config(Role::Scorer), t).unwrap();
        assert_eq!(s.score("p").unwrap(), 1.0);

        let t = Arc::new(ScriptedTransport::always(200, r#"{"out": "high"}"#));
        let s = HttpScorer::with_transport(config(Role::Scorer), t).unwrap();
        assert!(matches!(s.score("p"), Err(BackendError::NonNumeric(_))));
    }

    #[test]
    fn missing_response_path_is_bad_status_naming_path() {
        let t = Arc::new(ScriptedTransport::always(200, r#"{"other": 1}"#));
        let g = HttpGenerator::with_transport(config(Role::Generator), t).unwrap();
        match g.generate("p") {
            Err(BackendError::BadStatus { detail, .. }) => assert!(detail.contains("/out")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_completion() {
        let t = Arc::new(ScriptedTransport::always(200, r#"{"out": "  "}"#));
        let g = HttpGenerator::with_transport(config(Role::Generator), t).unwrap();
        assert_eq!(g.generate("p"), Err(BackendError::EmptyResponse));
    }

    #[test]
    fn server_errors_retried_then_surface() {
        let t = Arc::new(ScriptedTransport::always(503, "busy"));
        let g = HttpGenerator::with_transport(config(Role::Generator), t.clone()).unwrap();
        assert!(matches!(
            g.generate("p"),
            Err(BackendError::BadStatus { status: 503, .. })
        ));
        assert_eq!(t.requests().len(), 3);

        let t = Arc::new(ScriptedTransport::always(400, "bad"));
        let g = HttpGenerator::with_transport(config(Role::Generator), t.clone()).unwrap();
        assert!(matches!(
            g.generate("p"),
            Err(BackendError::BadStatus { status: 400, .. })
        ));
        assert_eq!(t.requests().len(), 1);
    }

    #[test]
    fn recovers_after_transient_failure() {
        let t = Arc::new(ScriptedTransport::sequence(vec![
            (500, "oops".into()),
            (200, r#"{"out": "Relevant Document IDs: [1] \\\\ Answer: x"}"#.into()),
        ]));
        let g = HttpGenerator::with_transport(config(Role::Generator), t).unwrap();
        assert!(g.generate("p").unwrap().starts_with("Relevant"));
    }

    #[test]
    fn unreachable_endpoint_times_out_after_retries() {
        let mut c = config(Role::Generator);
        c.endpoint = "http://127.0.0.1:9/unreachable".into();
        let g = HttpGenerator::new(c).unwrap();
        assert!(matches!(g.generate("p"), Err(BackendError::Timeout(_))));
    }

    #[test]
    fn captioner_sends_base64_image() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.png"), b"PNGDATA").unwrap();
        let mut c = config(Role::Captioner);
        c.image_root = Some(dir.path().to_path_buf());
        let t = Arc::new(ScriptedTransport::always(200, r#"{"out": "a stone arch"}"#));
        let cap = HttpCaptioner::with_transport(c, t.clone()).unwrap();
        assert_eq!(cap.caption("a.png", "Describe").unwrap(), "a stone arch");
        let sent = t.requests();
        assert_eq!(
            sent[0]["image"],
            base64::engine::general_purpose::STANDARD.encode(b"PNGDATA")
        );
        assert!(matches!(
            cap.caption("missing.png", "Describe"),
            Err(BackendError::UnreadableImage(_))
        ));
    }

    #[test]
    fn in_flight_bound_holds_under_concurrency() {
        let t = Arc::new(ScriptedTransport::always(200, r#"{"out": 0.5}"#).with_delay(Duration::from_millis(5)));
        let s = HttpScorer::with_transport(config(Role::Scorer), t.clone()).unwrap();
        let prompts: Vec<String> = (0..24).map(|i| format!("p{i}")).collect();
        let scores = s.score_batch(&prompts);
        assert!(scores.iter().all(|r| r.as_ref().map(|v| *v == 0.5).unwrap_or(false)));
        assert!(t.peak_in_flight() <= 2, "peak {}", t.peak_in_flight());
    }
}
