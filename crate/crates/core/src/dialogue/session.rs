use serde::{Deserialize, Serialize};

use crate::memory::{AgentMemory, AtomicFact, InsertionRecord};
use crate::store::{SessionStore, StoreError, INSERTION_LOG_FILE, MEMORY_FILE, TRANSCRIPT_FILE};

use super::{ConversationStyle, DialogueTurn, SessionConfig, Speaker, Transcript};

/// What `session.json` holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub record_ref: String,
    pub style: ConversationStyle,
    pub config: SessionConfig,
    pub initial_memory_hash: String,
    #[serde(default)]
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub session_id: String,
    pub record_ref: String,
    pub memory: AgentMemory,
    pub style: ConversationStyle,
    pub transcript: Transcript,
    pub config: SessionConfig,
    pub initial_memory_hash: String,
    pub closed: bool,
}

impl Session {
    pub(crate) fn new(
        record_ref: &str,
        memory: AgentMemory,
        style: ConversationStyle,
        config: SessionConfig,
    ) -> Self {
        Self {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            record_ref: record_ref.to_string(),
            initial_memory_hash: memory.content_hash(),
            memory,
            style,
            transcript: Vec::new(),
            config,
            closed: false,
        }
    }

    pub fn meta(&self) -> SessionMeta {
        SessionMeta {
            session_id: self.session_id.clone(),
            record_ref: self.record_ref.clone(),
            style: self.style,
            config: self.config,
            initial_memory_hash: self.initial_memory_hash.clone(),
            closed: self.closed,
        }
    }

    pub fn patient_turns(&self) -> impl Iterator<Item = &DialogueTurn> {
        self.transcript
            .iter()
            .filter(|t| t.role == Speaker::Patient)
    }

    /// Writes metadata and the full memory; used once when a session opens.
    pub(crate) fn persist_new(&self, store: &SessionStore) -> Result<(), StoreError> {
        store.save_meta(&self.session_id, &self.meta())?;
        for fact in self.memory.facts() {
            store.append(&self.session_id, MEMORY_FILE, fact)?;
        }
        for entry in self.memory.insertion_log() {
            store.append(&self.session_id, INSERTION_LOG_FILE, entry)?;
        }
        Ok(())
    }

    pub fn load(store: &SessionStore, session_id: &str) -> Result<Self, StoreError> {
        let meta: SessionMeta = store.load_meta(session_id)?;
        let facts: Vec<AtomicFact> = store.read(session_id, MEMORY_FILE)?;
        let log: Vec<InsertionRecord> = store.read(session_id, INSERTION_LOG_FILE)?;
        let transcript: Transcript = store.read(session_id, TRANSCRIPT_FILE)?;
        Ok(Self {
            session_id: meta.session_id,
            record_ref: meta.record_ref,
            memory: AgentMemory::restore(facts, log),
            style: meta.style,
            transcript,
            config: meta.config,
            initial_memory_hash: meta.initial_memory_hash,
            closed: meta.closed,
        })
    }
}
