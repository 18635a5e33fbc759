//! Disease knowledge: raw encyclopedia entries, validated outlines, and the
//! reviewed outline catalog that feeds record generation.

mod catalog;
mod ingest;
mod outline;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

pub use catalog::{CatalogListing, OutlineCatalog, ReviewStatus};
pub use ingest::ingest_entry;
pub use outline::{build_outline, OUTLINE_MAX_PARSE_RETRIES};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge input is empty")]
    EmptyInput,
    #[error("unknown department {0:?}")]
    UnknownDepartment(String),
    #[error("no outline for {department}/{disease}")]
    UnknownDisease { department: String, disease: String },
    #[error("catalog has no approved outlines")]
    EmptyCatalog,
    #[error("could not parse outline after {attempts} attempts: {last_error}")]
    OutlineParse { attempts: u32, last_error: String },
    #[error("outline violates invariants: {}", .0.join("; "))]
    InvariantViolation(Vec<String>),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("catalog format: {0}")]
    Format(String),
}

/// Departments sampled by default.
pub const DEFAULT_DEPARTMENTS: [&str; 6] = [
    "Psychiatry",
    "Urology",
    "Orthopedics",
    "Ophthalmology",
    "Endocrinology",
    "General Surgery",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepartmentCatalog {
    names: Vec<String>,
}

impl Default for DepartmentCatalog {
    fn default() -> Self {
        Self::new(DEFAULT_DEPARTMENTS.iter().map(|s| s.to_string()).collect())
    }
}

impl DepartmentCatalog {
    pub fn new(names: Vec<String>) -> Self {
        Self { names }
    }

    pub fn contains(&self, department: &str) -> bool {
        self.names.iter().any(|n| n == department)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "Female",
            Gender::Male => "Male",
        })
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" | "woman" => Ok(Gender::Female),
            "male" | "m" | "man" => Ok(Gender::Male),
            other => Err(format!("unrecognized gender {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiseaseEntry {
    pub department: String,
    pub disease_name: String,
    pub raw_sections: Vec<Section>,
    pub source_uri: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeGroup {
    pub label: String,
    pub min_age: u32,
    pub max_age: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicContext {
    pub gender_weights: BTreeMap<Gender, f64>,
    pub age_groups: Vec<AgeGroup>,
}

impl DemographicContext {
    /// Even gender split with children (0-17), adults (18-59) and elderly (60-85).
    pub fn general(weights: [f64; 3]) -> Self {
        Self {
            gender_weights: [(Gender::Female, 0.5), (Gender::Male, 0.5)]
                .into_iter()
                .collect(),
            age_groups: vec![
                AgeGroup {
                    label: "children".into(),
                    min_age: 0,
                    max_age: 17,
                    weight: weights[0],
                },
                AgeGroup {
                    label: "adults".into(),
                    min_age: 18,
                    max_age: 59,
                    weight: weights[1],
                },
                AgeGroup {
                    label: "elderly".into(),
                    min_age: 60,
                    max_age: 85,
                    weight: weights[2],
                },
            ],
        }
    }

    pub fn gender_supported(&self, gender: Gender) -> bool {
        self.gender_weights.get(&gender).is_some_and(|w| *w > 0.0)
    }

    pub fn group_for_age(&self, age: u32) -> Option<&AgeGroup> {
        self.age_groups
            .iter()
            .find(|g| g.min_age <= age && age <= g.max_age)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.gender_weights.is_empty() {
            out.push("demographic_context.gender_weights is empty".into());
        }
        check_weights(
            "demographic_context.gender_weights",
            self.gender_weights.values().copied(),
            &mut out,
        );
        if self.age_groups.is_empty() {
            out.push("demographic_context.age_groups is empty".into());
        }
        check_weights(
            "demographic_context.age_groups",
            self.age_groups.iter().map(|g| g.weight),
            &mut out,
        );
        for group in &self.age_groups {
            if group.min_age > group.max_age {
                out.push(format!("age group {:?} has min_age > max_age", group.label));
            }
            if group.max_age > 120 {
                out.push(format!("age group {:?} exceeds 120 years", group.label));
            }
        }
        let mut sorted: Vec<&AgeGroup> = self.age_groups.iter().collect();
        sorted.sort_by_key(|g| g.min_age);
        for pair in sorted.windows(2) {
            if pair[1].min_age <= pair[0].max_age {
                out.push(format!(
                    "age groups {:?} and {:?} overlap",
                    pair[0].label, pair[1].label
                ));
            }
        }
        out
    }
}

fn check_weights(name: &str, weights: impl Iterator<Item = f64>, out: &mut Vec<String>) {
    let mut sum = 0.0;
    let mut any = false;
    for w in weights {
        any = true;
        if w.is_nan() || w < 0.0 {
            out.push(format!("{name} has a negative or NaN weight"));
        }
        sum += w;
    }
    if any && (sum - 1.0).abs() > 1e-9 {
        out.push(format!("{name} sum to {sum}, expected 1"));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomDescriptor {
    pub name: String,
    pub severity_range: String,
    pub onset_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamDescriptor {
    pub name: String,
    pub expected_finding: String,
    #[serde(default)]
    pub reference_ranges: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseOutline {
    pub disease_name: String,
    pub department: String,
    pub demographic_context: DemographicContext,
    pub symptom_inventory: Vec<SymptomDescriptor>,
    pub epidemiology_factors: Vec<String>,
    pub exam_protocol: Vec<ExamDescriptor>,
    pub severity_levels: Vec<String>,
}

impl DiseaseOutline {
    /// Every invariant the outline breaks; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.disease_name.trim().is_empty() {
            out.push("disease_name is empty".into());
        }
        if self.department.trim().is_empty() {
            out.push("department is empty".into());
        }
        out.extend(self.demographic_context.violations());
        if self.symptom_inventory.is_empty() {
            out.push("symptom_inventory is empty".into());
        }
        if self
            .symptom_inventory
            .iter()
            .any(|s| s.name.trim().is_empty())
        {
            out.push("symptom_inventory has an unnamed symptom".into());
        }
        if self.exam_protocol.is_empty() {
            out.push("exam_protocol is empty".into());
        }
        for exam in &self.exam_protocol {
            if exam.name.trim().is_empty() {
                out.push("exam_protocol has an unnamed exam".into());
            }
            if exam.expected_finding.trim().is_empty() {
                out.push(format!(
                    "exam {:?} has no expected-finding template",
                    exam.name
                ));
            }
        }
        if self.severity_levels.is_empty() {
            out.push("severity_levels is empty".into());
        }
        for (i, level) in self.severity_levels.iter().enumerate() {
            if level.trim().is_empty() {
                out.push("severity_levels has a blank level".into());
            }
            if self.severity_levels[..i].contains(level) {
                out.push(format!("severity level {level:?} is duplicated"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), KbError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(KbError::InvariantViolation(v))
        }
    }

    pub fn exam_names(&self) -> impl Iterator<Item = &str> {
        self.exam_protocol.iter().map(|e| e.name.as_str())
    }
}
