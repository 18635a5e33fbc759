//! Patient-agent conversations: styled reply generation checked against
//! memory, regeneration on contradiction, memory updates from neutral
//! claims, and scripted or model-driven doctors.

mod doctor;
mod runtime;
mod session;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::judge::{JudgeError, VerdictSummary};
use crate::memory::{MemoryError, MemoryFormat};
use crate::pipeline::ValidationReport;
use crate::prompts::Prompts;
use crate::store::StoreError;

pub use doctor::{llm_doctor_next_question, DoctorAgent, DOCTOR_MAX_RETRIES};
pub use runtime::{CrossDialogue, DialogueRuntime};
pub use session::{Session, SessionMeta};

const DEFAULT_BANK: &str = include_str!("../../banks/default.txt");

/// Reply text used when memory is empty and regeneration is exhausted.
pub const EMPTY_FALLBACK_TEXT: &str = "I'm sorry, I'm not sure how to answer that.";

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("record is invalid: {0}")]
    InvalidRecord(ValidationReport),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Storage(#[from] StoreError),
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("doctor message is empty")]
    EmptyMessage,
    #[error("question list is empty")]
    NoQuestions,
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("doctor output unusable after {attempts} attempts: {last_error}")]
    DoctorOutput { attempts: u32, last_error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversationStyle {
    Plain,
    Upset,
    Verbose,
    Reserved,
    Tangent,
    Pleasing,
}

impl ConversationStyle {
    pub const ALL: [ConversationStyle; 6] = [
        ConversationStyle::Plain,
        ConversationStyle::Upset,
        ConversationStyle::Verbose,
        ConversationStyle::Reserved,
        ConversationStyle::Tangent,
        ConversationStyle::Pleasing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConversationStyle::Plain => "plain",
            ConversationStyle::Upset => "upset",
            ConversationStyle::Verbose => "verbose",
            ConversationStyle::Reserved => "reserved",
            ConversationStyle::Tangent => "tangent",
            ConversationStyle::Pleasing => "pleasing",
        }
    }

    pub fn instructions(self, prompts: &Prompts) -> &str {
        match self {
            ConversationStyle::Plain => &prompts.style_plain,
            ConversationStyle::Upset => &prompts.style_upset,
            ConversationStyle::Verbose => &prompts.style_verbose,
            ConversationStyle::Reserved => &prompts.style_reserved,
            ConversationStyle::Tangent => &prompts.style_tangent,
            ConversationStyle::Pleasing => &prompts.style_pleasing,
        }
    }
}

impl fmt::Display for ConversationStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConversationStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == wanted)
            .ok_or_else(|| {
                format!("unknown style {s:?} (plain, upset, verbose, reserved, tangent, pleasing)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub max_attempts: u32,
    pub memory_update_enabled: bool,
    pub memory_format: MemoryFormat,
    /// Exposes memory through the inspector API route.
    #[serde(default)]
    pub inspector: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            memory_update_enabled: true,
            memory_format: MemoryFormat::Atomic,
            inspector: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Doctor,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub role: Speaker,
    pub text: String,
    pub attempts_used: u32,
    pub verdict_summary: VerdictSummary,
    pub inserted_fact_ids: Vec<String>,
    /// Safe restatement of memory after regeneration ran out of attempts.
    #[serde(default)]
    pub fallback: bool,
}

impl DialogueTurn {
    pub fn doctor(text: impl Into<String>) -> Self {
        Self {
            role: Speaker::Doctor,
            text: text.into(),
            attempts_used: 0,
            verdict_summary: VerdictSummary::default(),
            inserted_fact_ids: Vec::new(),
            fallback: false,
        }
    }
}

pub type Transcript = Vec<DialogueTurn>;

/// Questions from a bank file: one per non-blank line, `#` lines ignored.
pub fn parse_question_bank(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn default_question_bank() -> Vec<String> {
    parse_question_bank(DEFAULT_BANK)
}
