//! Record generation: demographic sampling, basic information (Step 2),
//! cross-checked examination results (Step 3), and record validation.

mod demographics;
mod generate;
mod record;

use thiserror::Error;

use crate::gateway::GatewayError;
use crate::kb::KbError;
use crate::store::StoreError;

pub use demographics::{sample_demographics, Demographics};
pub use generate::{
    BasicBundle, ExamGeneration, GeneratedRecord, GenerationRequest, GenerationTrace,
    PipelineConfig, RecordPipeline, Stage,
};
pub use record::{
    has_time_quantity, validate_record, validate_structure, BasicInfo, DiseaseInfo, Epidemiology,
    ExamResult, PatientRecord, RecordField, ValidationReport, Violation, NONE_REPORTED,
    SECTION_HEADINGS,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{stage:?} output unusable after {attempts} attempts: {last_error}")]
    Parse {
        stage: Stage,
        attempts: u32,
        last_error: String,
    },
    #[error("generated demographics {got} contradict sampled {expected}")]
    DemographicMismatch { expected: String, got: String },
    #[error("exam {exam:?} still inconsistent after {regenerations} regenerations")]
    CoherenceFailure { exam: String, regenerations: u32 },
    #[error("generated record is invalid: {0}")]
    InvalidRecord(ValidationReport),
    #[error(transparent)]
    Storage(#[from] StoreError),
}
