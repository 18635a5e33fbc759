use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GatewayError;

/// What a model call is for. Drives per-purpose model routing and the replay cursor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Outline,
    Step2,
    Step3,
    Decompose,
    Judge,
    Extract,
    Patient,
    Doctor,
    Evaluator,
}

impl Purpose {
    pub const ALL: [Purpose; 9] = [
        Purpose::Outline,
        Purpose::Step2,
        Purpose::Step3,
        Purpose::Decompose,
        Purpose::Judge,
        Purpose::Extract,
        Purpose::Patient,
        Purpose::Doctor,
        Purpose::Evaluator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Outline => "outline",
            Purpose::Step2 => "step2",
            Purpose::Step3 => "step3",
            Purpose::Decompose => "decompose",
            Purpose::Judge => "judge",
            Purpose::Extract => "extract",
            Purpose::Patient => "patient",
            Purpose::Doctor => "doctor",
            Purpose::Evaluator => "evaluator",
        }
    }

    /// Judging purposes run cold; generation purposes use the sampling defaults.
    pub fn is_judging(self) -> bool {
        matches!(
            self,
            Purpose::Decompose | Purpose::Judge | Purpose::Extract | Purpose::Evaluator
        )
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Purpose {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Purpose::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown purpose tag {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Sampling parameters. Defaults are temperature 1.0 and 4096 max tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 4096,
        }
    }
}

impl GenerationParams {
    pub const JUDGING: GenerationParams = GenerationParams {
        temperature: 0.0,
        max_tokens: 4096,
    };

    pub fn for_purpose(purpose: Purpose) -> Self {
        if purpose.is_judging() {
            Self::JUDGING
        } else {
            Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub purpose: Purpose,
}

impl ChatRequest {
    /// Builds a request with the purpose's default parameters.
    pub fn new(purpose: Purpose, messages: Vec<Message>) -> Self {
        let params = GenerationParams::for_purpose(purpose);
        Self {
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            purpose,
        }
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.temperature = params.temperature;
        self.max_tokens = params.max_tokens;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "request has no messages".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 over the normalized request content.
    ///
    /// Message text is trimmed and newline-normalized before hashing, so
    /// fixtures survive incidental whitespace edits in templates.
    pub fn canonical_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.purpose.as_str().as_bytes());
        hasher.update([0u8]);
        hasher.update(format!("{:.6}", self.temperature).as_bytes());
        hasher.update([0u8]);
        hasher.update(self.max_tokens.to_le_bytes());
        for message in &self.messages {
            hasher.update([1u8]);
            hasher.update(message.role.as_str().as_bytes());
            hasher.update([0u8]);
            hasher.update(normalize_text(&message.content).as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Short human-readable preview of the final message, stored beside fixtures.
    pub fn digest_preview(&self) -> String {
        let last = self
            .messages
            .last()
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let flat: String = normalize_text(last)
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        if flat.chars().count() > 160 {
            let head: String = flat.chars().take(160).collect();
            format!("{head}…")
        } else {
            flat
        }
    }

    /// Concatenated text of every message, for prompt-content assertions.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub(crate) fn normalize_text(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    unified
        .lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn request(text: &str) -> ChatRequest {
        ChatRequest::new(
            Purpose::Judge,
            vec![Message::system("sys"), Message::user(text)],
        )
    }

    #[test]
    fn judging_purposes_run_cold() {
        assert_eq!(ChatRequest::new(Purpose::Judge, vec![]).temperature, 0.0);
        let gen = ChatRequest::new(Purpose::Step2, vec![]);
        assert_eq!(gen.temperature, 1.0);
        assert_eq!(gen.max_tokens, 4096);
    }

    #[test]
    fn rejects_out_of_range_params() {
        let req = request("x").with_params(GenerationParams {
            temperature: 2.5,
            max_tokens: 10,
        });
        assert!(matches!(
            req.validate(),
            Err(GatewayError::InvalidRequest(_))
        ));
        let req = request("x").with_params(GenerationParams {
            temperature: 1.0,
            max_tokens: 0,
        });
        assert!(req.validate().is_err());
        assert!(request("x").validate().is_ok());
    }

    #[test]
    fn hash_ignores_incidental_whitespace() {
        assert_eq!(
            request("line one\r\nline two  \n").canonical_hash(),
            request("  line one\nline two").canonical_hash()
        );
    }

    #[test]
    fn hash_covers_purpose_and_params() {
        let base = request("x");
        let mut other = base.clone();
        other.purpose = Purpose::Extract;
        assert_ne!(base.canonical_hash(), other.canonical_hash());
        let tuned = base.clone().with_params(GenerationParams {
            temperature: 0.5,
            max_tokens: 4096,
        });
        assert_ne!(base.canonical_hash(), tuned.canonical_hash());
    }

    proptest! {
        #[test]
        fn hash_is_stable_under_equal_content(text in "[a-z ]{1,40}") {
            prop_assert_eq!(request(&text).canonical_hash(), request(&text.clone()).canonical_hash());
        }

        #[test]
        fn hash_detects_content_mutation(text in "[a-z]{1,40}", extra in "[a-z]{1,5}") {
            let mutated = format!("{text}{extra}");
            prop_assert_ne!(request(&text).canonical_hash(), request(&mutated).canonical_hash());
        }
    }
}
