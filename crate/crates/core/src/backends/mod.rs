//! Client layer for the three external model roles.
//!
//! Every neural computation in the pipeline sits behind one of these traits: a
//! [`Captioner`] turns an image into a sentence-level description, a [`Scorer`]
//! returns the relevance probability of a query–document prompt, and a
//! [`Generator`] completes a reranking prompt with document ids and an answer.
//!
//! Two families of implementations exist: [`http`] speaks a JSON-templated wire
//! protocol to a remote service, and [`mock`] provides deterministic in-process
//! stand-ins so the whole pipeline runs without network access.

pub mod http;
pub mod mock;
mod retry;

use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{BackendConfig, HttpCaptioner, HttpGenerator, HttpScorer, Transport, TransportError, UreqTransport};
pub use retry::RetryPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Captioner,
    Scorer,
    Generator,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Captioner => "captioner",
            Role::Scorer => "scorer",
            Role::Generator => "generator",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("bad status {status}: {detail}")]
    BadStatus { status: u16, detail: String },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("cannot read image '{0}'")]
    UnreadableImage(String),
    #[error("non-numeric score response: {0}")]
    NonNumeric(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

impl BackendError {
    /// Transient failures worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout(_) => true,
            BackendError::BadStatus { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

pub trait Captioner: Send + Sync {
    fn caption(&self, image_ref: &str, prompt: &str) -> Result<String, BackendError>;
}

pub trait Scorer: Send + Sync {
    /// Stable identifier recorded alongside every score.
    fn id(&self) -> String;

    /// Relevance probability of a rank prompt, already squashed to [0, 1].
    fn score(&self, prompt: &str) -> Result<f64, BackendError>;

    fn score_batch(&self, prompts: &[String]) -> Vec<Result<f64, BackendError>> {
        prompts.iter().map(|p| self.score(p)).collect()
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<T: Captioner + ?Sized> Captioner for Arc<T> {
    fn caption(&self, image_ref: &str, prompt: &str) -> Result<String, BackendError> {
        (**self).caption(image_ref, prompt)
    }
}

impl<T: Scorer + ?Sized> Scorer for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn score(&self, prompt: &str) -> Result<f64, BackendError> {
        (**self).score(prompt)
    }
    fn score_batch(&self, prompts: &[String]) -> Vec<Result<f64, BackendError>> {
        (**self).score_batch(prompts)
    }
}

impl<T: Generator + ?Sized> Generator for Arc<T> {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).generate(prompt)
    }
}

/// Clamps a probability into [0, 1], warning when the backend strayed outside.
pub fn clamp_probability(value: f64, source: &str) -> Result<f64, BackendError> {
    if value.is_nan() {
        return Err(BackendError::NonNumeric(format!("NaN from {source}")));
    }
    if !(0.0..=1.0).contains(&value) {
        log::warn!("{source} returned {value}, clamping to [0, 1]");
        return Ok(value.clamp(0.0, 1.0));
    }
    Ok(value)
}

/// Counting semaphore bounding concurrent requests through one handle.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit { limit: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limit.current.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limit.freed.notify_one();
    }
}

/// Where a backend comes from: a mock description or a wire configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSource {
    Mock(std::path::PathBuf),
    Http(std::path::PathBuf),
}

impl BackendSource {
    /// Parses `mock:<file>` or `http:<file>`; a bare path means `http:`.
    pub fn parse(spec: &str, base: &Path) -> Self {
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        if let Some(rest) = spec.strip_prefix("mock:") {
            BackendSource::Mock(resolve(rest))
        } else if let Some(rest) = spec.strip_prefix("http:") {
            BackendSource::Http(resolve(rest))
        } else {
            BackendSource::Http(resolve(spec))
        }
    }
}

fn load_http_config(path: &Path, role: Role) -> Result<BackendConfig, BackendError> {
    let mut cfg = BackendConfig::from_file(path)?;
    cfg.apply_env_overrides();
    if cfg.role != role {
        return Err(BackendError::Config(format!(
            "{} configures a {} backend, expected {}",
            path.display(),
            cfg.role,
            role
        )));
    }
    if cfg.image_root.is_none() {
        cfg.image_root = path.parent().map(Path::to_path_buf);
    }
    Ok(cfg)
}

pub fn open_captioner(source: &BackendSource) -> Result<Arc<dyn Captioner>, BackendError> {
    match source {
        BackendSource::Mock(p) => Ok(Arc::new(mock::MockCaptioner::from_file(p)?)),
        BackendSource::Http(p) => Ok(Arc::new(HttpCaptioner::new(load_http_config(p, Role::Captioner)?)?)),
    }
}

pub fn open_scorer(source: &BackendSource) -> Result<Arc<dyn Scorer>, BackendError> {
    match source {
        BackendSource::Mock(p) => Ok(Arc::new(mock::MockScorer::from_file(p)?)),
        BackendSource::Http(p) => Ok(Arc::new(HttpScorer::new(load_http_config(p, Role::Scorer)?)?)),
    }
}

pub fn open_generator(source: &BackendSource) -> Result<Arc<dyn Generator>, BackendError> {
    match source {
        BackendSource::Mock(p) => Ok(Arc::new(mock::MockGenerator::from_file(p)?)),
        BackendSource::Http(p) => Ok(Arc::new(HttpGenerator::new(load_http_config(p, Role::Generator)?)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn clamp_rule() {
        assert_eq!(clamp_probability(1.2, "t").unwrap(), 1.0);
        assert_eq!(clamp_probability(-0.1, "t").unwrap(), 0.0);
        assert_eq!(clamp_probability(0.73, "t").unwrap(), 0.73);
        assert!(matches!(
            clamp_probability(f64::NAN, "t"),
            Err(BackendError::NonNumeric(_))
        ));
    }

    #[test]
    fn limit_is_never_exceeded() {
        let limit = InFlightLimit::new(3);
        let now = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| {
                    let _p = limit.acquire();
                    let n = now.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(n, Ordering::SeqCst);
                    std::thread::sleep(std::time::Duration::from_millis(3));
                    now.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert!(peak.load(Ordering::SeqCst) >= 1);
    }

    #[test]
    fn source_parsing() {
        let base = Path::new("/cfg");
        assert_eq!(
            BackendSource::parse("mock:m.json", base),
            BackendSource::Mock("/cfg/m.json".into())
        );
        assert_eq!(
            BackendSource::parse("http:/abs.json", base),
            BackendSource::Http("/abs.json".into())
        );
        assert_eq!(
            BackendSource::parse("b.json", base),
            BackendSource::Http("/cfg/b.json".into())
        );
    }
}
