use crate::gateway::{AskError, Gateway, Message, Purpose};
use crate::llm_text::{fill_template, parse_embedded};
use crate::prompts::Prompts;

use super::{DiseaseEntry, DiseaseOutline, KbError};

pub const OUTLINE_MAX_PARSE_RETRIES: u32 = 3;

/// Asks the model to reconstruct `entry` into a [`DiseaseOutline`].
///
/// Malformed output is retried; a well-formed outline that breaks an
/// invariant is rejected immediately. Department and disease name are taken
/// from the entry, not the model.
pub fn build_outline(
    entry: &DiseaseEntry,
    gateway: &Gateway,
    prompts: &Prompts,
) -> Result<DiseaseOutline, KbError> {
    let knowledge = entry
        .raw_sections
        .iter()
        .map(|s| format!("## {}\n{}", s.heading, s.body))
        .collect::<Vec<_>>()
        .join("\n\n");
    let prompt = fill_template(
        &prompts.outline,
        &[
            ("department", &entry.department),
            ("disease", &entry.disease_name),
            ("knowledge", &knowledge),
        ],
    );

    let mut outline: DiseaseOutline = gateway
        .ask(
            Purpose::Outline,
            vec![Message::user(prompt)],
            OUTLINE_MAX_PARSE_RETRIES,
            parse_embedded::<DiseaseOutline>,
        )
        .map_err(|e| match e {
            AskError::Gateway(g) => KbError::Gateway(g),
            AskError::Unparseable {
                attempts,
                last_error,
            } => KbError::OutlineParse {
                attempts,
                last_error,
            },
        })?;
    outline.department = entry.department.clone();
    outline.disease_name = entry.disease_name.clone();
    outline.validate()?;
    Ok(outline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Fixture;
    use crate::kb::{ingest_entry, DepartmentCatalog};
    use serde_json::json;

    fn entry() -> DiseaseEntry {
        ingest_entry(
            "## Symptoms\nAcute abdominal pain",
            "General Surgery",
            "Pancreatitis",
            &DepartmentCatalog::default(),
            "inline",
        )
        .unwrap()
    }

    fn outline_json(symptoms: serde_json::Value, levels: serde_json::Value) -> String {
        json!({
            "disease_name": "Pancreatitis",
            "department": "General Surgery",
            "demographic_context": {
                "gender_weights": {"Female": 0.5, "Male": 0.5},
                "age_groups": [
                    {"label": "adults", "min_age": 18, "max_age": 59, "weight": 0.6},
                    {"label": "elderly", "min_age": 60, "max_age": 85, "weight": 0.4}
                ]
            },
            "symptom_inventory": symptoms,
            "epidemiology_factors": ["alcohol use"],
            "exam_protocol": [
                {"name": "Routine Blood Test", "expected_finding": "amylase and lipase elevated", "reference_ranges": "amylase 30-110 U/L"},
                {"name": "Biochemical Test", "expected_finding": "WBC, liver enzymes", "reference_ranges": ""},
                {"name": "Imaging Tests", "expected_finding": "CT pancreatic edema", "reference_ranges": ""}
            ],
            "severity_levels": levels
        })
        .to_string()
    }

    fn pain() -> serde_json::Value {
        json!([{"name": "Abdominal pain", "severity_range": "moderate to severe", "onset_pattern": "sudden"}])
    }

    #[test]
    fn parses_fixture_outline() {
        let gw = Gateway::replay(Fixture::new().with(
            Purpose::Outline,
            format!(
                "```json\n{}\n```",
                outline_json(pain(), json!(["Mild", "Severe"]))
            ),
        ));
        let outline = build_outline(&entry(), &gw, &Prompts::builtin()).unwrap();
        let exams: Vec<_> = outline.exam_names().collect();
        assert_eq!(
            exams,
            ["Routine Blood Test", "Biochemical Test", "Imaging Tests"]
        );
        assert_eq!(outline.severity_levels.len(), 2);
    }

    #[test]
    fn empty_symptoms_violate_invariants() {
        let gw = Gateway::replay(
            Fixture::new().with(Purpose::Outline, outline_json(json!([]), json!(["Mild"]))),
        );
        let err = build_outline(&entry(), &gw, &Prompts::builtin()).unwrap_err();
        assert!(matches!(err, KbError::InvariantViolation(_)));
    }

    #[test]
    fn retries_then_gives_up_on_garbage() {
        let mut fixture = Fixture::new();
        for _ in 0..=OUTLINE_MAX_PARSE_RETRIES {
            fixture.push(Purpose::Outline, "I cannot do that");
        }
        let gw = Gateway::replay(fixture);
        let err = build_outline(&entry(), &gw, &Prompts::builtin()).unwrap_err();
        assert!(matches!(err, KbError::OutlineParse { attempts: 4, .. }));
        assert_eq!(gw.provider_calls(), 4);
    }

    #[test]
    fn recovers_after_one_bad_reply() {
        let gw = Gateway::replay(
            Fixture::new()
                .with(Purpose::Outline, "{ truncated")
                .with(Purpose::Outline, outline_json(pain(), json!(["Mild"]))),
        );
        assert!(build_outline(&entry(), &gw, &Prompts::builtin()).is_ok());
    }
}
