//! Single choke point for model calls.
//!
//! Every module talks to a [`Gateway`]. The gateway forwards to a
//! [`ChatBackend`] (live HTTP, fixture replay, recording, or a scripted
//! closure), keeps an ordered request log, and optionally rate-limits.

mod fixture;
mod limiter;
mod live;
mod request;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

pub use fixture::{Fixture, FixtureEntry, RecordingBackend, ReplayBackend};
pub use limiter::TokenBucket;
pub use live::{Endpoint, LiveBackend, LiveConfig};
pub use request::{ChatRequest, GenerationParams, Message, Purpose, Role};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no fixture entry for a {purpose} request")]
    FixtureMiss { purpose: Purpose },
    #[error("fixture file error: {0}")]
    FixtureFormat(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("provider rate limit exceeded")]
    RateLimited,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("no model backend configured (use --live, --replay or --record-to)")]
    Offline,
}

impl GatewayError {
    fn fixture_io(path: &Path, err: std::io::Error) -> Self {
        GatewayError::FixtureFormat(format!("{}: {err}", path.display()))
    }

    /// True when the call failed only because no model output is available offline.
    pub fn is_offline_miss(&self) -> bool {
        matches!(
            self,
            GatewayError::FixtureMiss { .. } | GatewayError::Offline
        )
    }
}

/// Failure of [`Gateway::ask`]: either the call failed or every reply was unusable.
#[derive(Debug, Error)]
pub enum AskError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unusable model output after {attempts} attempts: {last_error}")]
    Unparseable { attempts: u32, last_error: String },
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// Backend that refuses every call.
pub struct OfflineBackend;

impl ChatBackend for OfflineBackend {
    fn complete(&self, _request: &ChatRequest) -> Result<String, GatewayError> {
        Err(GatewayError::Offline)
    }
}

type ScriptFn = dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync;

/// Backend driven by a closure; used for deterministic scripted runs.
pub struct ScriptedBackend {
    script: Box<ScriptFn>,
}

impl ScriptedBackend {
    pub fn new(
        script: impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            script: Box::new(script),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        (self.script)(request)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRequest {
    pub scope: Option<String>,
    pub request: ChatRequest,
}

/// Selects which slice of the request log to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogScope<'a> {
    All,
    Named(&'a str),
}

struct Shared {
    backend: Arc<dyn ChatBackend>,
    log: Option<Mutex<Vec<LoggedRequest>>>,
    limiter: Option<TokenBucket>,
    provider_calls: AtomicUsize,
}

/// Cheaply cloneable handle; clones share backend, log and limiter.
#[derive(Clone)]
pub struct Gateway {
    shared: Arc<Shared>,
    scope: Option<Arc<str>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self::build(backend, true, None)
    }

    pub fn without_log(backend: Arc<dyn ChatBackend>) -> Self {
        Self::build(backend, false, None)
    }

    pub fn with_limiter(backend: Arc<dyn ChatBackend>, limiter: TokenBucket) -> Self {
        Self::build(backend, true, Some(limiter))
    }

    fn build(backend: Arc<dyn ChatBackend>, log: bool, limiter: Option<TokenBucket>) -> Self {
        Self {
            shared: Arc::new(Shared {
                backend,
                log: log.then(|| Mutex::new(Vec::new())),
                limiter,
                provider_calls: AtomicUsize::new(0),
            }),
            scope: None,
        }
    }

    pub fn replay(fixture: Fixture) -> Self {
        Self::new(Arc::new(ReplayBackend::new(fixture)))
    }

    pub fn scripted(
        script: impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self::new(Arc::new(ScriptedBackend::new(script)))
    }

    pub fn offline() -> Self {
        Self::new(Arc::new(OfflineBackend))
    }

    /// Handle whose calls are tagged with `scope` in the shared log.
    pub fn scoped(&self, scope: &str) -> Gateway {
        Gateway {
            shared: Arc::clone(&self.shared),
            scope: Some(Arc::from(scope)),
        }
    }

    pub fn scope(&self) -> Option<&str> {
        self.scope.as_deref()
    }

    pub fn chat(&self, request: ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        if let Some(limiter) = &self.shared.limiter {
            limiter.acquire();
        }
        if let Some(log) = &self.shared.log {
            log.lock()
                .expect("request log poisoned")
                .push(LoggedRequest {
                    scope: self.scope.as_deref().map(str::to_string),
                    request: request.clone(),
                });
        }
        self.shared.provider_calls.fetch_add(1, Ordering::SeqCst);
        self.shared.backend.complete(&request)
    }

    /// Sends `messages` and parses the reply, retrying up to `retries` more
    /// times when `parse` rejects it. Each retry shows the model its previous
    /// reply and the parse error.
    pub fn ask<T>(
        &self,
        purpose: Purpose,
        messages: Vec<Message>,
        retries: u32,
        mut parse: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, AskError> {
        let mut conversation = messages;
        let mut last_error = String::new();
        for attempt in 0..=retries {
            let reply = self.chat(ChatRequest::new(purpose, conversation.clone()))?;
            match parse(&reply) {
                Ok(value) => return Ok(value),
                Err(e) => {
                    tracing::debug!(%purpose, attempt, error = %e, "rejecting model output");
                    last_error = e;
                    conversation.push(Message::assistant(reply));
                    conversation.push(Message::user(format!(
                        "That answer was not usable: {last_error}. Answer again in exactly the requested format."
                    )));
                }
            }
        }
        Err(AskError::Unparseable {
            attempts: retries + 1,
            last_error,
        })
    }

    /// Requests in issue order. Empty when logging is disabled.
    pub fn request_log(&self, scope: LogScope<'_>) -> Vec<ChatRequest> {
        let Some(log) = &self.shared.log else {
            return Vec::new();
        };
        log.lock()
            .expect("request log poisoned")
            .iter()
            .filter(|entry| match scope {
                LogScope::All => true,
                LogScope::Named(name) => entry.scope.as_deref() == Some(name),
            })
            .map(|entry| entry.request.clone())
            .collect()
    }

    pub fn logging_enabled(&self) -> bool {
        self.shared.log.is_some()
    }

    /// Number of calls forwarded to the backend.
    pub fn provider_calls(&self) -> usize {
        self.shared.provider_calls.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(purpose: Purpose) -> ChatRequest {
        ChatRequest::new(purpose, vec![Message::user("hi")])
    }

    #[test]
    fn log_counts_every_call() {
        let gw = Gateway::scripted(|_| Ok("ok".into()));
        for _ in 0..5 {
            gw.chat(req(Purpose::Patient)).unwrap();
        }
        assert_eq!(gw.request_log(LogScope::All).len(), 5);
        assert_eq!(gw.provider_calls(), 5);
    }

    #[test]
    fn disabled_log_is_empty() {
        let gw = Gateway::without_log(Arc::new(ScriptedBackend::new(|_| Ok("ok".into()))));
        gw.chat(req(Purpose::Judge)).unwrap();
        assert!(gw.request_log(LogScope::All).is_empty());
        assert_eq!(gw.provider_calls(), 1);
    }

    #[test]
    fn scoped_handles_share_log() {
        let gw = Gateway::scripted(|_| Ok("ok".into()));
        let a = gw.scoped("a");
        let b = gw.scoped("b");
        a.chat(req(Purpose::Patient)).unwrap();
        b.chat(req(Purpose::Judge)).unwrap();
        a.chat(req(Purpose::Judge)).unwrap();
        assert_eq!(gw.request_log(LogScope::All).len(), 3);
        let only_a = gw.request_log(LogScope::Named("a"));
        assert_eq!(only_a.len(), 2);
        assert_eq!(only_a[0].purpose, Purpose::Patient);
    }

    #[test]
    fn invalid_request_never_reaches_backend() {
        let gw = Gateway::scripted(|_| Ok("ok".into()));
        let bad = req(Purpose::Patient).with_params(GenerationParams {
            temperature: 3.0,
            max_tokens: 1,
        });
        assert!(gw.chat(bad).is_err());
        assert_eq!(gw.provider_calls(), 0);
    }

    #[test]
    fn ask_retries_with_feedback() {
        let gw = Gateway::replay(
            Fixture::new()
                .with(Purpose::Judge, "maybe")
                .with(Purpose::Judge, "42"),
        );
        let value = gw.ask(Purpose::Judge, vec![Message::user("n?")], 2, |r| {
            r.trim().parse::<u32>().map_err(|e| e.to_string())
        });
        assert_eq!(value.unwrap(), 42);
        let log = gw.request_log(LogScope::All);
        assert_eq!(log.len(), 2);
        assert_eq!(log[1].messages.len(), 3);
        assert_eq!(log[1].messages[1].content, "maybe");
    }

    #[test]
    fn ask_gives_up() {
        let gw = Gateway::scripted(|_| Ok("nope".into()));
        let err = gw
            .ask(Purpose::Judge, vec![Message::user("n?")], 2, |r| {
                r.parse::<u32>().map_err(|e| e.to_string())
            })
            .unwrap_err();
        assert!(matches!(err, AskError::Unparseable { attempts: 3, .. }));
    }

    #[test]
    fn offline_backend_refuses() {
        let err = Gateway::offline()
            .chat(req(Purpose::Decompose))
            .unwrap_err();
        assert!(err.is_offline_miss());
    }
}
