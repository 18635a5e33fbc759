use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::kb::{DiseaseOutline, Gender};

pub const NONE_REPORTED: &str = "None reported";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicInfo {
    #[serde(rename = "id")]
    pub patient_id: String,
    pub name: String,
    pub gender: Gender,
    pub age: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epidemiology {
    pub medical_history: String,
    pub lifestyle_factor: String,
    pub vaccination_history: String,
    pub family_history: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiseaseInfo {
    pub disease: String,
    pub level: String,
    pub symptoms: Vec<String>,
    pub duration: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamResult {
    pub exam_name: String,
    pub finding: String,
}

/// A complete synthetic record. Serialized field names follow the record
/// section headings in snake_case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub record_id: String,
    pub department: String,
    #[serde(rename = "basic_information")]
    pub basic: BasicInfo,
    pub epidemiology: Epidemiology,
    #[serde(rename = "disease_information")]
    pub disease_info: DiseaseInfo,
    #[serde(rename = "examination_results")]
    pub exams: Vec<ExamResult>,
}

/// Section headings in display order.
pub const SECTION_HEADINGS: [&str; 4] = [
    "Basic Information",
    "Epidemiology",
    "Disease Information",
    "Examination Results",
];

/// One leaf field of a record, addressed by a dotted path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordField {
    pub path: String,
    pub label: String,
    pub value: String,
}

impl PatientRecord {
    /// Every leaf field in document order. Exams are addressed as
    /// `examination_results[i]`.
    pub fn fields(&self) -> Vec<RecordField> {
        let f = |path: &str, label: &str, value: String| RecordField {
            path: path.to_string(),
            label: label.to_string(),
            value,
        };
        let mut out = vec![
            f("basic_information.id", "ID", self.basic.patient_id.clone()),
            f("basic_information.name", "Name", self.basic.name.clone()),
            f(
                "basic_information.gender",
                "Gender",
                self.basic.gender.to_string(),
            ),
            f("basic_information.age", "Age", self.basic.age.to_string()),
            f(
                "epidemiology.medical_history",
                "Medical History",
                self.epidemiology.medical_history.clone(),
            ),
            f(
                "epidemiology.lifestyle_factor",
                "Lifestyle Factor",
                self.epidemiology.lifestyle_factor.clone(),
            ),
            f(
                "epidemiology.vaccination_history",
                "Vaccination History",
                self.epidemiology.vaccination_history.clone(),
            ),
            f(
                "epidemiology.family_history",
                "Family History",
                self.epidemiology.family_history.clone(),
            ),
            f(
                "disease_information.disease",
                "Disease",
                self.disease_info.disease.clone(),
            ),
            f(
                "disease_information.level",
                "Level",
                self.disease_info.level.clone(),
            ),
            f(
                "disease_information.symptoms",
                "Symptoms",
                self.disease_info.symptoms.join(", "),
            ),
            f(
                "disease_information.duration",
                "Duration",
                self.disease_info.duration.clone(),
            ),
        ];
        for (i, exam) in self.exams.iter().enumerate() {
            out.push(RecordField {
                path: format!("examination_results[{i}]"),
                label: exam.exam_name.clone(),
                value: exam.finding.clone(),
            });
        }
        out
    }

    pub fn has_path(&self, path: &str) -> bool {
        self.fields().iter().any(|f| f.path == path)
    }

    /// Plain-text rendering in the four-section layout.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let b = &self.basic;
        let e = &self.epidemiology;
        let d = &self.disease_info;
        let _ = writeln!(out, "Basic Information");
        let _ = writeln!(
            out,
            "ID: {}\nName: {}\nGender: {}\nAge: {}\n",
            b.patient_id, b.name, b.gender, b.age
        );
        let _ = writeln!(out, "Epidemiology");
        let _ = writeln!(
            out,
            "Medical History: {}\nLifestyle Factor: {}\nVaccination History: {}\nFamily History: {}\n",
            e.medical_history, e.lifestyle_factor, e.vaccination_history, e.family_history
        );
        let _ = writeln!(out, "Disease Information");
        let _ = writeln!(
            out,
            "Disease: {}\nLevel: {}\nSymptoms: {}\nDuration: {}\n",
            d.disease,
            d.level,
            d.symptoms.join(", "),
            d.duration
        );
        let _ = writeln!(out, "Examination Results");
        for exam in &self.exams {
            let _ = writeln!(out, "- {}: {}", exam.exam_name, exam.finding);
        }
        out
    }
}

static TIME_QUANTITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(\d+(?:[.,]\d+)?|a|an|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|several|few|couple of)\s*(?:-\s*\d+\s*|to\s+\d+\s+)?(second|minute|hour|day|week|month|year)s?\b",
    )
    .expect("valid regex")
});

/// True when the text names at least one time quantity ("10 days", "two weeks").
pub fn has_time_quantity(text: &str) -> bool {
    TIME_QUANTITY.is_match(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.field, v.message))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks that need no outline: presence and shape of every section.
pub fn validate_structure(record: &PatientRecord) -> ValidationReport {
    let mut report = ValidationReport::default();
    let blank = |s: &str| s.trim().is_empty();

    if blank(&record.record_id) {
        report.push("record_id", "is empty");
    }
    if blank(&record.basic.patient_id) {
        report.push("BasicInfo.patient_id", "is empty");
    }
    if blank(&record.basic.name) {
        report.push("BasicInfo.name", "is empty");
    }
    if record.basic.age > 120 {
        report.push(
            "BasicInfo.age",
            format!("{} is outside [0, 120]", record.basic.age),
        );
    }

    let epi = &record.epidemiology;
    for (name, value) in [
        ("medical_history", &epi.medical_history),
        ("lifestyle_factor", &epi.lifestyle_factor),
        ("vaccination_history", &epi.vaccination_history),
        ("family_history", &epi.family_history),
    ] {
        if blank(value) {
            report.push(
                &format!("Epidemiology.{name}"),
                "is blank (use \"None reported\")",
            );
        }
    }

    let info = &record.disease_info;
    if blank(&info.disease) {
        report.push("DiseaseInfo.disease", "is empty");
    }
    if blank(&info.level) {
        report.push("DiseaseInfo.level", "is empty");
    }
    if info.symptoms.is_empty() || info.symptoms.iter().any(|s| blank(s)) {
        report.push(
            "DiseaseInfo.symptoms",
            "must be a non-empty list of non-blank symptoms",
        );
    }
    if blank(&info.duration) {
        report.push("DiseaseInfo.duration", "is empty");
    } else if !has_time_quantity(&info.duration) {
        report.push("DiseaseInfo.duration", "names no time quantity");
    }

    if record.exams.is_empty() {
        report.push("ExamResult", "no examination results");
    }
    for (i, exam) in record.exams.iter().enumerate() {
        if blank(&exam.exam_name) {
            report.push(&format!("ExamResult[{i}].exam_name"), "is empty");
        }
        if blank(&exam.finding) {
            report.push(&format!("ExamResult[{i}].finding"), "is empty");
        }
    }
    report
}

/// Lists every invariant the record breaks against its generating outline.
pub fn validate_record(record: &PatientRecord, outline: &DiseaseOutline) -> ValidationReport {
    let mut report = validate_structure(record);
    let ctx = &outline.demographic_context;

    if ctx.group_for_age(record.basic.age).is_none() {
        report.push(
            "BasicInfo.age",
            format!("{} falls in no configured age group", record.basic.age),
        );
    }
    if !ctx.gender_supported(record.basic.gender) {
        report.push(
            "BasicInfo.gender",
            format!(
                "{} has zero weight for {}",
                record.basic.gender, outline.disease_name
            ),
        );
    }
    if record.disease_info.disease != outline.disease_name {
        report.push(
            "DiseaseInfo.disease",
            format!(
                "{:?} differs from outline {:?}",
                record.disease_info.disease, outline.disease_name
            ),
        );
    }
    if !outline.severity_levels.contains(&record.disease_info.level) {
        report.push(
            "DiseaseInfo.level",
            format!(
                "{:?} is not one of {:?}",
                record.disease_info.level, outline.severity_levels
            ),
        );
    }
    for (i, exam) in record.exams.iter().enumerate() {
        if !outline.exam_names().any(|n| n == exam.exam_name) {
            report.push(
                &format!("ExamResult[{i}].exam_name"),
                format!("{:?} is not in the exam protocol", exam.exam_name),
            );
        }
    }
    for name in outline.exam_names() {
        if !record.exams.iter().any(|e| e.exam_name == name) {
            report.push("ExamResult", format!("missing result for {name:?}"));
        }
    }
    report
}
