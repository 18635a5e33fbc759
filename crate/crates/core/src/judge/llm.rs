use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::gateway::{AskError, Gateway, Message, Purpose};
use crate::llm_text::{fill_template, parse_embedded, sha256_hex, single_line};
use crate::memory::AtomicFact;
use crate::prompts::Prompts;
use crate::store::jsonl;

use super::{ClaimMode, JudgeError, TripletJudge, TripletLabel};

pub const VERDICT_MAX_RETRIES: u32 = 2;
pub const EXTRACT_MAX_PARSE_RETRIES: u32 = 3;

/// One line of the verdict audit file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub response_hash: String,
    pub fact_id: String,
    pub label: TripletLabel,
}

/// Judge backed by the gateway, with a verdict cache keyed by
/// (response hash, fact id).
pub struct LlmJudge {
    gateway: Gateway,
    prompts: Arc<Prompts>,
    cache: RwLock<HashMap<(String, String), TripletLabel>>,
    audit: Option<Mutex<PathBuf>>,
}

impl LlmJudge {
    pub fn new(gateway: Gateway, prompts: Arc<Prompts>) -> Self {
        Self {
            gateway,
            prompts,
            cache: RwLock::new(HashMap::new()),
            audit: None,
        }
    }

    /// Also appends every fresh verdict to `path` (JSONL).
    pub fn with_audit_file(mut self, path: impl Into<PathBuf>) -> Self {
        self.audit = Some(Mutex::new(path.into()));
        self
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("verdict cache poisoned").len()
    }

    fn response_hash(premise: &str, context: Option<&str>) -> String {
        sha256_hex(&[premise, context.unwrap_or("")])
    }
}

impl TripletJudge for LlmJudge {
    fn judge(
        &self,
        premise: &str,
        hypothesis: &AtomicFact,
        context: Option<&str>,
    ) -> Result<TripletLabel, JudgeError> {
        let key = (
            Self::response_hash(premise, context),
            hypothesis.fact_id.clone(),
        );
        if let Some(label) = self.cache.read().expect("verdict cache poisoned").get(&key) {
            return Ok(*label);
        }
        let context_block = context
            .map(|c| format!("Context (the doctor's question):\n{c}\n\n"))
            .unwrap_or_default();
        let prompt = fill_template(
            &self.prompts.judge,
            &[
                ("context", &context_block),
                ("premise", premise),
                ("hypothesis", &hypothesis.statement),
            ],
        );
        let label = self
            .gateway
            .ask(
                Purpose::Judge,
                vec![Message::user(prompt)],
                VERDICT_MAX_RETRIES,
                |reply| reply.parse::<TripletLabel>(),
            )
            .map_err(|e| match e {
                AskError::Gateway(g) => JudgeError::Unavailable(g),
                AskError::Unparseable {
                    attempts,
                    last_error,
                } => JudgeError::MalformedVerdict {
                    attempts,
                    last_error,
                },
            })?;
        self.cache
            .write()
            .expect("verdict cache poisoned")
            .insert(key.clone(), label);
        if let Some(audit) = &self.audit {
            let path = audit.lock().expect("audit lock poisoned");
            let line = VerdictRecord {
                response_hash: key.0,
                fact_id: key.1,
                label,
            };
            if let Err(e) = jsonl::append_line(&path, &line) {
                tracing::warn!(error = %e, "could not append verdict audit line");
            }
        }
        Ok(label)
    }

    fn extract_claims(&self, response: &str, mode: ClaimMode) -> Result<Vec<String>, JudgeError> {
        let template = match mode {
            ClaimMode::New => &self.prompts.extract_new,
            ClaimMode::All => &self.prompts.extract_all,
        };
        let prompt = fill_template(template, &[("response", response)]);
        self.gateway
            .ask(
                Purpose::Extract,
                vec![Message::user(prompt)],
                EXTRACT_MAX_PARSE_RETRIES,
                |reply| {
                    let claims: Vec<String> = parse_embedded(reply)?;
                    Ok(claims
                        .iter()
                        .map(|c| single_line(c))
                        .filter(|c| !c.is_empty())
                        .collect())
                },
            )
            .map_err(|e| match e {
                AskError::Gateway(g) => JudgeError::Unavailable(g),
                AskError::Unparseable {
                    attempts,
                    last_error,
                } => JudgeError::Parse {
                    attempts,
                    last_error,
                },
            })
    }
}
