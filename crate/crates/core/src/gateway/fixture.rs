use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::request::{ChatRequest, Purpose};
use super::{ChatBackend, GatewayError};

/// One stored (request, response) pair, serialized as a single JSONL line.
///
/// Hand-authored entries may leave `hash` empty; they are then served only by
/// the per-purpose cursor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    #[serde(default)]
    pub hash: String,
    pub purpose: Purpose,
    #[serde(default)]
    pub request_digest: String,
    pub response: String,
}

impl FixtureEntry {
    pub fn cursor(purpose: Purpose, response: impl Into<String>) -> Self {
        Self {
            hash: String::new(),
            purpose,
            request_digest: String::new(),
            response: response.into(),
        }
    }

    pub fn recorded(request: &ChatRequest, response: impl Into<String>) -> Self {
        Self {
            hash: request.canonical_hash(),
            purpose: request.purpose,
            request_digest: request.digest_preview(),
            response: response.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Fixture {
    pub entries: Vec<FixtureEntry>,
}

impl Fixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, purpose: Purpose, response: impl Into<String>) -> &mut Self {
        self.entries.push(FixtureEntry::cursor(purpose, response));
        self
    }

    pub fn with(mut self, purpose: Purpose, response: impl Into<String>) -> Self {
        self.push(purpose, response);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load_file(path: &Path) -> Result<Self, GatewayError> {
        let file = File::open(path).map_err(|e| GatewayError::fixture_io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::fixture_io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(&line).map_err(|e| {
                GatewayError::FixtureFormat(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    /// Loads every `*.jsonl` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| GatewayError::fixture_io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
            .collect();
        paths.sort();
        let mut fixture = Fixture::new();
        for path in paths {
            fixture.entries.extend(Fixture::load_file(&path)?.entries);
        }
        Ok(fixture)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), GatewayError> {
        let mut file = File::create(path).map_err(|e| GatewayError::fixture_io(path, e))?;
        for entry in &self.entries {
            let line = serde_json::to_string(entry)
                .map_err(|e| GatewayError::FixtureFormat(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| GatewayError::fixture_io(path, e))?;
        }
        Ok(())
    }
}

struct ReplayState {
    consumed: Vec<bool>,
    served_by_hash: HashMap<String, usize>,
}

/// Serves responses from a fixture.
///
/// Lookup order: an unconsumed entry with the request's exact canonical hash;
/// then the next unconsumed entry for the request's purpose in file order.
/// Repeating an exact request after its hashed entries are consumed returns
/// the last of them again.
pub struct ReplayBackend {
    fixture: Fixture,
    by_hash: HashMap<String, Vec<usize>>,
    state: Mutex<ReplayState>,
}

impl ReplayBackend {
    pub fn new(fixture: Fixture) -> Self {
        let mut by_hash: HashMap<String, Vec<usize>> = HashMap::new();
        for (idx, entry) in fixture.entries.iter().enumerate() {
            if !entry.hash.is_empty() {
                by_hash.entry(entry.hash.clone()).or_default().push(idx);
            }
        }
        let consumed = vec![false; fixture.entries.len()];
        Self {
            fixture,
            by_hash,
            state: Mutex::new(ReplayState {
                consumed,
                served_by_hash: HashMap::new(),
            }),
        }
    }

    pub fn remaining(&self, purpose: Purpose) -> usize {
        let state = self.state.lock().expect("replay state poisoned");
        self.fixture
            .entries
            .iter()
            .zip(&state.consumed)
            .filter(|(e, used)| e.purpose == purpose && !**used)
            .count()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let hash = request.canonical_hash();
        let mut state = self.state.lock().expect("replay state poisoned");

        if let Some(indices) = self.by_hash.get(&hash) {
            if let Some(&idx) = indices.iter().find(|&&i| !state.consumed[i]) {
                state.consumed[idx] = true;
                state.served_by_hash.insert(hash, idx);
                return Ok(self.fixture.entries[idx].response.clone());
            }
            if let Some(&idx) = state.served_by_hash.get(&hash) {
                return Ok(self.fixture.entries[idx].response.clone());
            }
        }

        let next = self
            .fixture
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| e.purpose == request.purpose && !state.consumed[*i])
            .map(|(i, _)| i);
        match next {
            Some(idx) => {
                state.consumed[idx] = true;
                Ok(self.fixture.entries[idx].response.clone())
            }
            None => Err(GatewayError::FixtureMiss {
                purpose: request.purpose,
            }),
        }
    }
}

/// Forwards to an inner backend and appends every exchange to a fixture file.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    path: PathBuf,
    writer: Mutex<File>,
}

impl RecordingBackend {
    pub fn new(
        inner: Arc<dyn ChatBackend>,
        path: impl Into<PathBuf>,
    ) -> Result<Self, GatewayError> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| GatewayError::fixture_io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::fixture_io(&path, e))?;
        Ok(Self {
            inner,
            path,
            writer: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let response = self.inner.complete(request)?;
        let entry = FixtureEntry::recorded(request, response.clone());
        let line = serde_json::to_string(&entry)
            .map_err(|e| GatewayError::FixtureFormat(e.to_string()))?;
        let mut file = self.writer.lock().expect("fixture writer poisoned");
        writeln!(file, "{line}").map_err(|e| GatewayError::fixture_io(&self.path, e))?;
        file.flush()
            .map_err(|e| GatewayError::fixture_io(&self.path, e))?;
        Ok(response)
    }
}
