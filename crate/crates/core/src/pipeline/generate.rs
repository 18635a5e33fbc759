use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::debug;

use crate::gateway::{AskError, Gateway, Message, Purpose};
use crate::kb::{DiseaseOutline, ExamDescriptor, Gender, OutlineCatalog};
use crate::llm_text::{fill_template, parse_embedded, single_line};
use crate::prompts::Prompts;
use crate::store::RecordStore;

use super::record::{has_time_quantity, validate_record, NONE_REPORTED};
use super::{
    sample_demographics, BasicInfo, Demographics, DiseaseInfo, Epidemiology, ExamResult,
    PatientRecord, PipelineError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub max_parse_retries: u32,
    pub max_regen: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_parse_retries: 3,
            max_regen: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    SelectDisease,
    SampleDemographics,
    BasicInfo,
    ExamResults,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBundle {
    pub basic: BasicInfo,
    pub epidemiology: Epidemiology,
    pub disease_info: DiseaseInfo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamGeneration {
    pub exams: Vec<ExamResult>,
    pub regenerations: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationRequest {
    pub department: Option<String>,
    pub disease: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub stages: Vec<Stage>,
    pub demographics: Option<Demographics>,
    pub exam_regenerations: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedRecord {
    pub record: PatientRecord,
    pub trace: GenerationTrace,
}

pub struct RecordPipeline {
    gateway: Gateway,
    prompts: Arc<Prompts>,
    config: PipelineConfig,
}

#[derive(Deserialize)]
struct RawBundle {
    basic_information: RawBasic,
    epidemiology: RawEpidemiology,
    disease_information: RawDisease,
}

#[derive(Deserialize)]
struct RawBasic {
    #[serde(default)]
    id: Option<Value>,
    name: String,
    gender: String,
    age: Value,
}

#[derive(Deserialize)]
struct RawEpidemiology {
    #[serde(default)]
    medical_history: Option<String>,
    #[serde(default)]
    lifestyle_factor: Option<String>,
    #[serde(default)]
    vaccination_history: Option<String>,
    #[serde(default)]
    family_history: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StringOrList {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
struct RawDisease {
    #[serde(default)]
    level: String,
    symptoms: StringOrList,
    duration: String,
}

#[derive(Deserialize)]
struct RawExam {
    finding: String,
}

enum CheckVerdict {
    Consistent,
    Inconsistent(String),
}

fn text_or_id(value: &Value) -> Option<String> {
    match value {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn none_if_blank(value: Option<String>) -> String {
    value
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| NONE_REPORTED.to_string())
}

fn parse_check(reply: &str) -> Result<CheckVerdict, String> {
    let trimmed = reply.trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '#');
    let upper = trimmed.to_ascii_uppercase();
    if upper.starts_with("INCONSISTENT") {
        let reason = trimmed["INCONSISTENT".len()..]
            .trim_start_matches(|c: char| c == ':' || c == '-' || c.is_whitespace())
            .trim();
        Ok(CheckVerdict::Inconsistent(single_line(reason)))
    } else if upper.starts_with("CONSISTENT") {
        Ok(CheckVerdict::Consistent)
    } else {
        Err("expected CONSISTENT or INCONSISTENT on the first line".into())
    }
}

fn bundle_text(bundle: &BasicBundle) -> String {
    let b = &bundle.basic;
    let e = &bundle.epidemiology;
    let d = &bundle.disease_info;
    format!(
        "Basic Information\nID: {}\nName: {}\nGender: {}\nAge: {}\n\nEpidemiology\nMedical History: {}\nLifestyle Factor: {}\nVaccination History: {}\nFamily History: {}\n\nDisease Information\nDisease: {}\nLevel: {}\nSymptoms: {}\nDuration: {}",
        b.patient_id, b.name, b.gender, b.age,
        e.medical_history, e.lifestyle_factor, e.vaccination_history, e.family_history,
        d.disease, d.level, d.symptoms.join(", "), d.duration
    )
}

fn exams_text(exams: &[ExamResult]) -> String {
    if exams.is_empty() {
        "(none yet)".to_string()
    } else {
        exams
            .iter()
            .map(|e| format!("- {}: {}", e.exam_name, e.finding))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl RecordPipeline {
    pub fn new(gateway: Gateway, prompts: Arc<Prompts>, config: PipelineConfig) -> Self {
        Self {
            gateway,
            prompts,
            config,
        }
    }

    fn parse_error(stage: Stage) -> impl FnOnce(AskError) -> PipelineError {
        move |e| match e {
            AskError::Gateway(g) => PipelineError::Gateway(g),
            AskError::Unparseable {
                attempts,
                last_error,
            } => PipelineError::Parse {
                stage,
                attempts,
                last_error,
            },
        }
    }

    /// Step 2: one-shot prompt over the outline and sampled demographics.
    ///
    /// `rng` picks the target severity level that is suggested to the model.
    pub fn generate_basic_info<R: rand::Rng + ?Sized>(
        &self,
        outline: &DiseaseOutline,
        demographics: &Demographics,
        rng: &mut R,
    ) -> Result<BasicBundle, PipelineError> {
        let target_level = outline
            .severity_levels
            .choose(rng)
            .expect("outline has severity levels")
            .clone();
        let outline_json = serde_json::to_string_pretty(outline).expect("outline serializes");
        let demo_text = format!(
            "Gender: {}\nAge: {}\nAge group: {}\nSuggested severity level: {}",
            demographics.gender, demographics.age, demographics.age_group, target_level
        );
        let prompt = fill_template(
            &self.prompts.step2,
            &[
                ("outline", &outline_json),
                ("demographics", &demo_text),
                ("exemplar", self.prompts.step2_exemplar.trim()),
            ],
        );

        let levels = &outline.severity_levels;
        let bundle = self
            .gateway
            .ask(
                Purpose::Step2,
                vec![Message::user(prompt)],
                self.config.max_parse_retries,
                |reply| {
                    let raw: RawBundle = parse_embedded(reply)?;
                    let gender: Gender = raw.basic_information.gender.parse()?;
                    let age = match &raw.basic_information.age {
                        Value::Number(n) => n.as_u64(),
                        Value::String(s) => s.trim().parse().ok(),
                        _ => None,
                    }
                    .and_then(|a| u32::try_from(a).ok())
                    .ok_or("age must be a whole number of years")?;
                    let name = raw.basic_information.name.trim().to_string();
                    if name.is_empty() {
                        return Err("name is empty".into());
                    }
                    let symptoms: Vec<String> = match raw.disease_information.symptoms {
                        StringOrList::One(s) => {
                            s.split(',').map(|p| p.trim().to_string()).collect()
                        }
                        StringOrList::Many(v) => {
                            v.into_iter().map(|p| p.trim().to_string()).collect()
                        }
                    };
                    let symptoms: Vec<String> =
                        symptoms.into_iter().filter(|s| !s.is_empty()).collect();
                    if symptoms.is_empty() {
                        return Err("symptoms list is empty".into());
                    }
                    let level = raw.disease_information.level.trim().to_string();
                    if !levels.contains(&level) {
                        return Err(format!("level {level:?} is not one of {levels:?}"));
                    }
                    let duration = single_line(&raw.disease_information.duration);
                    if !has_time_quantity(&duration) {
                        return Err("duration must state onset with a number and time unit".into());
                    }
                    let epi = raw.epidemiology;
                    Ok(BasicBundle {
                        basic: BasicInfo {
                            patient_id: raw
                                .basic_information
                                .id
                                .as_ref()
                                .and_then(text_or_id)
                                .unwrap_or_default(),
                            name,
                            gender,
                            age,
                        },
                        epidemiology: Epidemiology {
                            medical_history: none_if_blank(epi.medical_history),
                            lifestyle_factor: none_if_blank(epi.lifestyle_factor),
                            vaccination_history: none_if_blank(epi.vaccination_history),
                            family_history: none_if_blank(epi.family_history),
                        },
                        disease_info: DiseaseInfo {
                            disease: outline.disease_name.clone(),
                            level,
                            symptoms,
                            duration,
                        },
                    })
                },
            )
            .map_err(Self::parse_error(Stage::BasicInfo))?;

        if bundle.basic.gender != demographics.gender || bundle.basic.age != demographics.age {
            return Err(PipelineError::DemographicMismatch {
                expected: format!("{} {}", demographics.gender, demographics.age),
                got: format!("{} {}", bundle.basic.gender, bundle.basic.age),
            });
        }
        Ok(bundle)
    }

    /// Step 3: one finding per protocol exam, each cross-checked against the
    /// patient information and earlier findings, regenerated when flagged.
    pub fn generate_exam_results(
        &self,
        outline: &DiseaseOutline,
        bundle: &BasicBundle,
    ) -> Result<ExamGeneration, PipelineError> {
        let outline_json = serde_json::to_string_pretty(outline).expect("outline serializes");
        let patient = bundle_text(bundle);
        let mut exams: Vec<ExamResult> = Vec::new();
        let mut regenerations = 0;

        for descriptor in &outline.exam_protocol {
            let mut feedback = String::new();
            let mut attempts_for_exam = 0;
            loop {
                let candidate = self.generate_finding(
                    outline_json.as_str(),
                    &patient,
                    &exams,
                    descriptor,
                    &feedback,
                )?;
                match self.check_finding(&patient, &exams, &candidate)? {
                    CheckVerdict::Consistent => {
                        exams.push(candidate);
                        break;
                    }
                    CheckVerdict::Inconsistent(reason) => {
                        debug!(exam = %descriptor.name, %reason, "exam finding flagged inconsistent");
                        if attempts_for_exam == self.config.max_regen {
                            return Err(PipelineError::CoherenceFailure {
                                exam: descriptor.name.clone(),
                                regenerations: attempts_for_exam,
                            });
                        }
                        attempts_for_exam += 1;
                        regenerations += 1;
                        feedback = format!(
                            "A previous draft was rejected as inconsistent ({reason}). Rejected draft: \"{}\"",
                            candidate.finding
                        );
                    }
                }
            }
        }
        Ok(ExamGeneration {
            exams,
            regenerations,
        })
    }

    fn generate_finding(
        &self,
        outline_json: &str,
        patient: &str,
        prior: &[ExamResult],
        descriptor: &ExamDescriptor,
        feedback: &str,
    ) -> Result<ExamResult, PipelineError> {
        let prompt = fill_template(
            &self.prompts.step3,
            &[
                ("outline", outline_json),
                ("patient", patient),
                ("prior_exams", &exams_text(prior)),
                ("exemplar", self.prompts.step3_exemplar.trim()),
                ("exam_name", &descriptor.name),
                ("expected_finding", &descriptor.expected_finding),
                ("reference_ranges", &descriptor.reference_ranges),
                ("feedback", feedback),
            ],
        );
        self.gateway
            .ask(
                Purpose::Step3,
                vec![Message::user(prompt)],
                self.config.max_parse_retries,
                |reply| {
                    let raw: RawExam = parse_embedded(reply)?;
                    let finding = single_line(&raw.finding);
                    if finding.is_empty() {
                        return Err("finding is empty".into());
                    }
                    Ok(ExamResult {
                        exam_name: descriptor.name.clone(),
                        finding,
                    })
                },
            )
            .map_err(Self::parse_error(Stage::ExamResults))
    }

    fn check_finding(
        &self,
        patient: &str,
        prior: &[ExamResult],
        candidate: &ExamResult,
    ) -> Result<CheckVerdict, PipelineError> {
        let prompt = fill_template(
            &self.prompts.step3_check,
            &[
                ("patient", patient),
                ("prior_exams", &exams_text(prior)),
                (
                    "candidate",
                    &format!("{}: {}", candidate.exam_name, candidate.finding),
                ),
            ],
        );
        self.gateway
            .ask(
                Purpose::Step3,
                vec![Message::user(prompt)],
                self.config.max_parse_retries,
                parse_check,
            )
            .map_err(Self::parse_error(Stage::ExamResults))
    }

    /// Runs all stages and validates the result. The record gets `record_id`.
    ///
    /// Explicit department/disease arguments override random selection.
    pub fn generate_record(
        &self,
        request: &GenerationRequest,
        catalog: &OutlineCatalog,
        record_id: &str,
    ) -> Result<GeneratedRecord, PipelineError> {
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let mut trace = GenerationTrace::default();

        trace.stages.push(Stage::SelectDisease);
        let outline = match &request.disease {
            Some(disease) => catalog
                .find_approved(request.department.as_deref(), disease)
                .ok_or_else(|| crate::kb::KbError::UnknownDisease {
                    department: request.department.clone().unwrap_or_else(|| "*".into()),
                    disease: disease.clone(),
                })?,
            None => catalog.select_disease(request.department.as_deref(), &mut rng)?,
        };

        trace.stages.push(Stage::SampleDemographics);
        let demographics = sample_demographics(outline, &mut rng);
        trace.demographics = Some(demographics.clone());

        trace.stages.push(Stage::BasicInfo);
        let bundle = self.generate_basic_info(outline, &demographics, &mut rng)?;

        trace.stages.push(Stage::ExamResults);
        let exams = self.generate_exam_results(outline, &bundle)?;
        trace.exam_regenerations = exams.regenerations;

        let mut basic = bundle.basic;
        if basic.patient_id.is_empty() {
            basic.patient_id = record_id.to_string();
        }
        let record = PatientRecord {
            record_id: record_id.to_string(),
            department: outline.department.clone(),
            basic,
            epidemiology: bundle.epidemiology,
            disease_info: bundle.disease_info,
            exams: exams.exams,
        };

        trace.stages.push(Stage::Validate);
        let report = validate_record(&record, outline);
        if !report.is_valid() {
            return Err(PipelineError::InvalidRecord(report));
        }
        Ok(GeneratedRecord { record, trace })
    }

    /// Generates a record under the store's next id and appends it.
    pub fn generate_and_store(
        &self,
        request: &GenerationRequest,
        catalog: &OutlineCatalog,
        store: &mut RecordStore,
    ) -> Result<GeneratedRecord, PipelineError> {
        let id = store.peek_next_id();
        let generated = self.generate_record(request, catalog, &id)?;
        let assigned = store.append_record(&generated.record)?;
        debug_assert_eq!(assigned, id);
        Ok(generated)
    }
}
