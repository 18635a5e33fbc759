use std::fs;
use std::path::{Path, PathBuf};

use crate::pipeline::PatientRecord;

use super::{jsonl, StoreError};

pub const ID_WIDTH: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordFilter {
    pub department: Option<String>,
    pub disease: Option<String>,
    pub record_id: Option<String>,
}

impl RecordFilter {
    pub fn department(name: &str) -> Self {
        Self {
            department: Some(name.to_string()),
            ..Self::default()
        }
    }

    pub fn id(id: &str) -> Self {
        Self {
            record_id: Some(id.to_string()),
            ..Self::default()
        }
    }

    fn matches(&self, r: &PatientRecord) -> bool {
        self.department.as_ref().is_none_or(|d| *d == r.department)
            && self
                .disease
                .as_ref()
                .is_none_or(|d| *d == r.disease_info.disease)
            && self.record_id.as_ref().is_none_or(|id| *id == r.record_id)
    }
}

/// Per-department JSONL files plus a monotonic id counter.
#[derive(Debug)]
pub struct RecordStore {
    root: PathBuf,
    next_id: u64,
}

fn file_for(root: &Path, department: &str) -> PathBuf {
    let safe: String = department
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect();
    root.join(format!("{safe}.jsonl"))
}

impl RecordStore {
    /// Opens the store at `root` (usually `data/records`), recovering torn
    /// tails and restoring the id counter to one past the largest id.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let mut store = Self { root, next_id: 1 };
        for record in store.scan()? {
            let n: u64 = record.record_id.parse().unwrap_or(0);
            store.next_id = store.next_id.max(n + 1);
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn files(&self) -> Result<Vec<PathBuf>, StoreError> {
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
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        Ok(files)
    }

    fn scan(&self) -> Result<Vec<PatientRecord>, StoreError> {
        let mut all = Vec::new();
        for file in self.files()? {
            all.extend(jsonl::read_lines::<PatientRecord>(&file)?);
        }
        // insertion order is id order because ids are monotonic
        all.sort_by_key(|r| r.record_id.parse::<u64>().unwrap_or(0));
        Ok(all)
    }

    /// The id the next append will assign.
    pub fn peek_next_id(&self) -> String {
        format!("{:0width$}", self.next_id, width = ID_WIDTH)
    }

    /// Appends `record` under the next id and returns that id. The stored
    /// line carries the assigned id regardless of `record.record_id`.
    pub fn append_record(&mut self, record: &PatientRecord) -> Result<String, StoreError> {
        let id = self.peek_next_id();
        let mut stored = record.clone();
        stored.record_id = id.clone();
        jsonl::append_line(&file_for(&self.root, &stored.department), &stored)?;
        self.next_id += 1;
        Ok(id)
    }

    /// Matching records in insertion order.
    pub fn load_records(&self, filter: &RecordFilter) -> Result<Vec<PatientRecord>, StoreError> {
        let files = match &filter.department {
            Some(d) => vec![file_for(&self.root, d)],
            None => self.files()?,
        };
        let mut out = Vec::new();
        for file in files {
            out.extend(
                jsonl::read_lines::<PatientRecord>(&file)?
                    .into_iter()
                    .filter(|r| filter.matches(r)),
            );
        }
        out.sort_by_key(|r| r.record_id.parse::<u64>().unwrap_or(0));
        Ok(out)
    }

    pub fn get(&self, record_id: &str) -> Result<Option<PatientRecord>, StoreError> {
        Ok(self
            .load_records(&RecordFilter::id(record_id))?
            .into_iter()
            .next())
    }
}
