//! Append-only line-delimited stores under a data directory:
//!
//! ```text
//! data/records/<department>.jsonl
//! data/sessions/<id>/{session.json,memory.jsonl,transcript.jsonl,insertion_log.jsonl}
//! data/cache/verdicts.jsonl
//! data/reports/*.json
//! ```

pub mod jsonl;
mod records;
mod sessions;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use records::{RecordFilter, RecordStore, ID_WIDTH};
pub use sessions::{SessionStore, INSERTION_LOG_FILE, MEMORY_FILE, SESSION_FILE, TRANSCRIPT_FILE};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("no such session {0:?}")]
    UnknownSession(String),
}

/// Layout helper for a data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> PathBuf {
        self.root.join("records")
    }

    pub fn sessions(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn verdict_cache(&self) -> PathBuf {
        self.root.join("cache").join("verdicts.jsonl")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    /// Writes `reports/<name>.json` and returns its path.
    pub fn write_report<T: Serialize>(
        &self,
        name: &str,
        report: &T,
    ) -> Result<PathBuf, StoreError> {
        let path = self.reports().join(format!("{name}.json"));
        jsonl::write_document(&path, report)?;
        Ok(path)
    }
}
