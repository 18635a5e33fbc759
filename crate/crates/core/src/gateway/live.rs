use std::collections::HashMap;
use std::env;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use tracing::{debug, warn};

use super::request::{ChatRequest, Purpose};
use super::{ChatBackend, GatewayError};

pub const ENV_API_KEY: &str = "PZ_API_KEY";
pub const ENV_BASE_URL: &str = "PZ_BASE_URL";
pub const ENV_MODEL: &str = "PZ_MODEL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o-2024-08-06";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub base_url: String,
    pub model: String,
}

#[derive(Clone)]
pub struct LiveConfig {
    pub api_key: String,
    pub default: Endpoint,
    pub overrides: HashMap<Purpose, Endpoint>,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl std::fmt::Debug for LiveConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveConfig")
            .field("api_key", &"<redacted>")
            .field("default", &self.default)
            .field("overrides", &self.overrides)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl LiveConfig {
    /// Reads `PZ_API_KEY`, `PZ_BASE_URL`, `PZ_MODEL` and per-purpose
    /// overrides such as `PZ_MODEL_JUDGE` / `PZ_BASE_URL_JUDGE`.
    pub fn from_env() -> Result<Self, GatewayError> {
        Self::from_lookup(|name| env::var(name).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, GatewayError> {
        let api_key = lookup(ENV_API_KEY)
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GatewayError::Config(format!("{ENV_API_KEY} is not set")))?;
        let default = Endpoint {
            base_url: lookup(ENV_BASE_URL).unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            model: lookup(ENV_MODEL).unwrap_or_else(|| DEFAULT_MODEL.to_string()),
        };
        let mut overrides = HashMap::new();
        for purpose in Purpose::ALL {
            let suffix = purpose.as_str().to_ascii_uppercase();
            let model = lookup(&format!("{ENV_MODEL}_{suffix}"));
            let base = lookup(&format!("{ENV_BASE_URL}_{suffix}"));
            if model.is_some() || base.is_some() {
                overrides.insert(
                    purpose,
                    Endpoint {
                        base_url: base.unwrap_or_else(|| default.base_url.clone()),
                        model: model.unwrap_or_else(|| default.model.clone()),
                    },
                );
            }
        }
        Ok(Self {
            api_key,
            default,
            overrides,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        })
    }

    pub fn endpoint(&self, purpose: Purpose) -> &Endpoint {
        self.overrides.get(&purpose).unwrap_or(&self.default)
    }
}

/// Chat-completion HTTP backend (OpenAI-compatible wire format).
pub struct LiveBackend {
    config: LiveConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Transient(String),
    RateLimited,
    Fatal(GatewayError),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        Self::new(LiveConfig::from_env()?)
    }

    fn attempt(&self, request: &ChatRequest) -> Attempt {
        let endpoint = self.config.endpoint(request.purpose);
        let url = format!(
            "{}/chat/completions",
            endpoint.base_url.trim_end_matches('/')
        );
        let messages: Vec<_> = request
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let body = json!({
            "model": endpoint.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let response = match self
            .client
            .post(&url)
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
        {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Attempt::Transient(e.to_string())
            }
            Err(e) => return Attempt::Fatal(GatewayError::Provider(e.to_string())),
        };
        let status = response.status();
        if status.as_u16() == 429 {
            return Attempt::RateLimited;
        }
        if status.is_server_error() {
            return Attempt::Transient(format!("HTTP {status}"));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Attempt::Fatal(GatewayError::Provider(format!("HTTP {status}: {text}")));
        }
        match response.json::<CompletionResponse>() {
            Ok(parsed) => match parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
            {
                Some(content) => Attempt::Done(content),
                None => Attempt::Fatal(GatewayError::Provider("response had no content".into())),
            },
            Err(e) => Attempt::Fatal(GatewayError::Provider(format!("bad response body: {e}"))),
        }
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut backoff = self.config.initial_backoff;
        let mut last_rate_limited = false;
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                debug!(attempt, purpose = %request.purpose, "retrying chat request");
                thread::sleep(backoff);
                backoff *= 2;
            }
            match self.attempt(request) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(err) => return Err(err),
                Attempt::RateLimited => {
                    warn!(purpose = %request.purpose, "provider rate limited the request");
                    last_rate_limited = true;
                }
                Attempt::Transient(msg) => {
                    warn!(purpose = %request.purpose, error = %msg, "transient provider failure");
                    last_rate_limited = false;
                    last_error = msg;
                }
            }
        }
        if last_rate_limited {
            Err(GatewayError::RateLimited)
        } else {
            Err(GatewayError::Provider(format!(
                "gave up after {} retries: {last_error}",
                self.config.max_retries
            )))
        }
    }
}
