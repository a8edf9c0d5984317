//! Uniform access to chat-completion, embedding and web-search services.
//!
//! A [`ProviderHandle`] wraps one backend together with its retry policy and
//! an optional response cache. Backends are plain traits, so the HTTP
//! clients in [`http`], the deterministic mocks in [`mock`] and ad-hoc test
//! closures are interchangeable.

mod cache;
mod capture;
pub mod http;
pub mod mock;
mod types;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::ResponseCache;
pub use capture::PromptLog;
pub use mock::{make_mock_suite, ChatFixture, FixtureDoc, MockFixture, MockSuite};
pub use types::{ChatRequest, ChatResponse, EmbeddingVector, SearchResult, Usage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("handle `{id}` is a {actual:?} provider, expected {expected:?}")]
    WrongKind {
        id: String,
        expected: ProviderKind,
        actual: ProviderKind,
    },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("embedding width mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("request timed out")]
    Timeout,
    #[error("fixture load failed: {0}")]
    FixtureLoad(String),
}

impl ProviderError {
    /// Worth another attempt under the retry policy.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited { .. } | ProviderError::Unavailable(_) | ProviderError::Timeout
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Chat,
    Embed,
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "duration_ms")]
    pub backoff_base: Duration,
    pub backoff_factor: f64,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base: Duration::from_secs(1),
            backoff_factor: 2.0,
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn no_wait(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            backoff_base: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Delay before attempt `attempt + 1`, for `attempt >= 1`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let exp = self.backoff_factor.powi(attempt.saturating_sub(1) as i32);
        self.backoff_base.mul_f64(exp)
    }

    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let max = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < max => {
                    log::debug!("attempt {attempt}/{max} failed: {e}; retrying");
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
                Err(ProviderError::RateLimited { .. }) => {
                    return Err(ProviderError::RateLimited { attempts: attempt })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

pub struct ChatOutput {
    pub text: String,
    pub usage: Usage,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatOutput, ProviderError>;
}

pub trait EmbedBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError>;
}

#[derive(Clone)]
enum Backend {
    Chat(Arc<dyn ChatBackend>),
    Embed(Arc<dyn EmbedBackend>),
    Search(Arc<dyn SearchBackend>),
}

/// Opaque credential; never printed.
#[derive(Clone, Default)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Debug for Secret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Clone)]
pub struct ProviderHandle {
    id: String,
    pub endpoint: String,
    pub credentials: Secret,
    pub retry: RetryPolicy,
    backend: Backend,
    cache: Option<Arc<ResponseCache>>,
}

impl std::fmt::Debug for ProviderHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderHandle")
            .field("id", &self.id)
            .field("kind", &self.kind())
            .field("endpoint", &self.endpoint)
            .finish()
    }
}

impl ProviderHandle {
    fn new(id: impl Into<String>, backend: Backend) -> Self {
        Self {
            id: id.into(),
            endpoint: String::new(),
            credentials: Secret::default(),
            retry: RetryPolicy::default(),
            backend,
            cache: None,
        }
    }

    pub fn chat(id: impl Into<String>, backend: impl ChatBackend + 'static) -> Self {
        Self::new(id, Backend::Chat(Arc::new(backend)))
    }

    pub fn embedder(id: impl Into<String>, backend: impl EmbedBackend + 'static) -> Self {
        Self::new(id, Backend::Embed(Arc::new(backend)))
    }

    pub fn searcher(id: impl Into<String>, backend: impl SearchBackend + 'static) -> Self {
        Self::new(id, Backend::Search(Arc::new(backend)))
    }

    /// Chat handle backed by a closure; handy for planted faults in tests.
    pub fn chat_fn<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        Self::chat(id, FnChat(f))
    }

    pub fn search_fn<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(&str, usize) -> Result<Vec<SearchResult>, ProviderError> + Send + Sync + 'static,
    {
        Self::searcher(id, FnSearch(f))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>, credentials: Secret) -> Self {
        self.endpoint = endpoint.into();
        self.credentials = credentials;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> ProviderKind {
        match self.backend {
            Backend::Chat(_) => ProviderKind::Chat,
            Backend::Embed(_) => ProviderKind::Embed,
            Backend::Search(_) => ProviderKind::Search,
        }
    }

    fn wrong_kind(&self, expected: ProviderKind) -> ProviderError {
        ProviderError::WrongKind {
            id: self.id.clone(),
            expected,
            actual: self.kind(),
        }
    }

    /// Chat handle whose requests are recorded in the returned log before
    /// being forwarded to this handle's backend.
    pub fn capturing(&self) -> (ProviderHandle, PromptLog) {
        let log = PromptLog::default();
        let mut h = self.clone();
        if let Backend::Chat(inner) = &self.backend {
            h.backend = Backend::Chat(Arc::new(capture::CapturingChat {
                inner: inner.clone(),
                log: log.clone(),
            }));
        }
        (h, log)
    }

    pub fn chat_complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        chat_complete(self, req)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        embed(self, texts)
    }

    pub fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        search(self, query, limit)
    }
}

struct FnChat<F>(F);

impl<F> ChatBackend for FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatOutput, ProviderError> {
        let text = (self.0)(req)?;
        Ok(ChatOutput {
            usage: Usage::estimate(req, &text),
            text,
        })
    }
}

struct FnSearch<F>(F);

impl<F> SearchBackend for FnSearch<F>
where
    F: Fn(&str, usize) -> Result<Vec<SearchResult>, ProviderError> + Send + Sync,
{
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        (self.0)(query, limit)
    }
}

pub fn chat_complete(handle: &ProviderHandle, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
    let Backend::Chat(backend) = &handle.backend else {
        return Err(handle.wrong_kind(ProviderKind::Chat));
    };
    req.validate()?;
    let key = handle
        .cache
        .as_ref()
        .map(|_| cache::request_key(ProviderKind::Chat, &handle.id, req));
    if let (Some(cache), Some(key)) = (&handle.cache, &key) {
        if let Some(hit) = cache.get::<ChatResponse>(key) {
            return Ok(hit);
        }
    }
    let out = handle.retry.run(|| backend.complete(req))?;
    if out.text.is_empty() {
        return Err(ProviderError::MalformedResponse("empty completion".into()));
    }
    let resp = ChatResponse {
        text: out.text,
        provider_id: handle.id.clone(),
        usage: out.usage,
    };
    if let (Some(cache), Some(key)) = (&handle.cache, &key) {
        cache.put(key, &resp);
    }
    Ok(resp)
}

pub fn embed(handle: &ProviderHandle, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
    let Backend::Embed(backend) = &handle.backend else {
        return Err(handle.wrong_kind(ProviderKind::Embed));
    };
    if texts.is_empty() {
        return Err(ProviderError::InvalidRequest("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.is_empty()) {
        return Err(ProviderError::InvalidRequest(format!("text {i} is empty")));
    }
    let key = handle
        .cache
        .as_ref()
        .map(|_| cache::request_key(ProviderKind::Embed, &handle.id, &texts));
    if let (Some(cache), Some(key)) = (&handle.cache, &key) {
        if let Some(hit) = cache.get::<Vec<EmbeddingVector>>(key) {
            return Ok(hit);
        }
    }
    let raw = handle.retry.run(|| backend.embed(texts))?;
    if raw.len() != texts.len() {
        return Err(ProviderError::MalformedResponse(format!(
            "{} vectors for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    let width = raw[0].len();
    let mut out = Vec::with_capacity(raw.len());
    for values in raw {
        if values.len() != width {
            return Err(ProviderError::DimensionMismatch {
                expected: width,
                got: values.len(),
            });
        }
        out.push(EmbeddingVector::new(values, backend.model_id())?);
    }
    if let (Some(cache), Some(key)) = (&handle.cache, &key) {
        cache.put(key, &out);
    }
    Ok(out)
}

pub fn search(
    handle: &ProviderHandle,
    query: &str,
    limit: usize,
) -> Result<Vec<SearchResult>, ProviderError> {
    let Backend::Search(backend) = &handle.backend else {
        return Err(handle.wrong_kind(ProviderKind::Search));
    };
    if query.trim().is_empty() {
        return Err(ProviderError::InvalidRequest("empty search query".into()));
    }
    if limit == 0 {
        return Err(ProviderError::InvalidRequest("search limit must be >= 1".into()));
    }
    let key = handle
        .cache
        .as_ref()
        .map(|_| cache::request_key(ProviderKind::Search, &handle.id, &(query, limit)));
    if let (Some(cache), Some(key)) = (&handle.cache, &key) {
        if let Some(hit) = cache.get::<Vec<SearchResult>>(key) {
            return Ok(hit);
        }
    }
    let mut results = handle.retry.run(|| backend.search(query, limit))?;
    results.truncate(limit);
    for (i, r) in results.iter_mut().enumerate() {
        if r.url.is_empty() {
            return Err(ProviderError::MalformedResponse(format!("result {i} has no url")));
        }
        r.rank = i + 1;
    }
    if let (Some(cache), Some(key)) = (&handle.cache, &key) {
        cache.put(key, &results);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn flaky(fail_first: u32, err: ProviderError) -> (ProviderHandle, Arc<AtomicU32>) {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let h = ProviderHandle::chat_fn("flaky", move |req| {
            let n = c.fetch_add(1, Ordering::SeqCst);
            if n < fail_first {
                Err(err.clone())
            } else {
                Ok(format!("ok:{}", req.user_prompt))
            }
        })
        .with_retry(RetryPolicy::no_wait(3));
        (h, calls)
    }

    #[test]
    fn retry_success_matches_first_attempt_success() {
        let req = ChatRequest::new("", "hi", 0.0);
        let (h0, _) = flaky(0, ProviderError::Timeout);
        let (h2, calls) = flaky(2, ProviderError::Unavailable("503".into()));
        let a = h0.chat_complete(&req).unwrap();
        let b = h2.chat_complete(&req).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.usage, b.usage);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn rate_limit_exhausts_attempts() {
        let (h, calls) = flaky(10, ProviderError::RateLimited { attempts: 1 });
        let err = h.chat_complete(&ChatRequest::new("", "hi", 0.0)).unwrap_err();
        assert_eq!(err, ProviderError::RateLimited { attempts: 3 });
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let (h, calls) = flaky(10, ProviderError::Auth("bad key".into()));
        assert!(matches!(
            h.chat_complete(&ChatRequest::new("", "hi", 0.0)),
            Err(ProviderError::Auth(_))
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn temperature_checked_before_backend_call() {
        let (h, calls) = flaky(0, ProviderError::Timeout);
        let err = h.chat_complete(&ChatRequest::new("", "hi", 2.5)).unwrap_err();
        assert!(matches!(err, ProviderError::InvalidRequest(_)));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn backoff_is_exponential() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(2), Duration::from_secs(2));
        assert_eq!(p.backoff(3), Duration::from_secs(4));
        assert_eq!(p.timeout, Duration::from_secs(60));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let (h, _) = flaky(0, ProviderError::Timeout);
        assert!(matches!(h.search("q", 1), Err(ProviderError::WrongKind { .. })));
    }

    struct Ragged;
    impl EmbedBackend for Ragged {
        fn model_id(&self) -> &str {
            "ragged"
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            Ok(texts.iter().enumerate().map(|(i, _)| vec![1.0; i + 1]).collect())
        }
    }

    #[test]
    fn inconsistent_widths_are_rejected() {
        let h = ProviderHandle::embedder("ragged", Ragged);
        let err = h.embed(&["a".into(), "b".into()]).unwrap_err();
        assert_eq!(err, ProviderError::DimensionMismatch { expected: 1, got: 2 });
    }

    #[test]
    fn cache_short_circuits_backend() {
        let (h, calls) = flaky(0, ProviderError::Timeout);
        let h = h.with_cache(Arc::new(ResponseCache::in_memory()));
        let req = ChatRequest::new("", "hi", 0.0);
        let a = h.chat_complete(&req).unwrap();
        let b = h.chat_complete(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}
