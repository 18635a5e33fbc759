use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{jsonl, StoreError};

pub const SESSION_FILE: &str = "session.json";
pub const MEMORY_FILE: &str = "memory.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const INSERTION_LOG_FILE: &str = "insertion_log.jsonl";

/// Directory-per-session store. Memory, transcript and insertion log are
/// append-only; `session.json` holds mutable session metadata.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, session_id: &str) -> PathBuf {
        self.root.join(session_id)
    }

    pub fn exists(&self, session_id: &str) -> bool {
        self.dir(session_id).join(SESSION_FILE).exists()
    }

    pub fn save_meta<T: Serialize>(&self, session_id: &str, meta: &T) -> Result<(), StoreError> {
        jsonl::write_document(&self.dir(session_id).join(SESSION_FILE), meta)
    }

    pub fn load_meta<T: DeserializeOwned>(&self, session_id: &str) -> Result<T, StoreError> {
        if !self.exists(session_id) {
            return Err(StoreError::UnknownSession(session_id.to_string()));
        }
        jsonl::read_document(&self.dir(session_id).join(SESSION_FILE))
    }

    pub fn append<T: Serialize>(
        &self,
        session_id: &str,
        file: &str,
        value: &T,
    ) -> Result<(), StoreError> {
        jsonl::append_line(&self.dir(session_id).join(file), value)
    }

    pub fn read<T: DeserializeOwned>(
        &self,
        session_id: &str,
        file: &str,
    ) -> Result<Vec<T>, StoreError> {
        jsonl::read_lines(&self.dir(session_id).join(file))
    }

    /// Session ids with a metadata file, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => {
                return Err(StoreError::Io {
                    path: self.root.clone(),
                    source,
                })
            }
        };
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(SESSION_FILE).exists())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }
}
