//! Regenerates the bundled pancreatitis fixture set from the reference case
//! and the hand decomposition.
//!
//! cargo run -p pz-core --example bundle_fixtures -- fixtures/pancreatitis

use std::collections::BTreeMap;
use std::path::PathBuf;

use pz_core::gateway::{Fixture, Purpose};
use pz_core::kb::OutlineCatalog;
use pz_core::samples::{pancreatitis_outline, pancreatitis_record};
use serde_json::json;

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "fixtures/pancreatitis".into()),
    );
    let outline = pancreatitis_outline();
    let record = pancreatitis_record();

    let kb_dir = dir.join("kb");
    let _ = std::fs::remove_dir_all(&kb_dir);
    let mut catalog = OutlineCatalog::open(&kb_dir).expect("open kb");
    catalog
        .add_approved(outline.clone())
        .expect("store outline");

    let hand: BTreeMap<String, Vec<String>> = serde_json::from_str(
        &std::fs::read_to_string(dir.join("hand_decomposition.json")).expect("read hand"),
    )
    .expect("parse hand");

    let mut fx = Fixture::new();
    fx.push(Purpose::Outline, serde_json::to_string(&outline).unwrap());
    fx.push(
        Purpose::Step2,
        json!({
            "basic_information": {
                "id": record.basic.patient_id,
                "name": record.basic.name,
                "gender": record.basic.gender.to_string(),
                "age": record.basic.age,
            },
            "epidemiology": {
                "medical_history": record.epidemiology.medical_history,
                "lifestyle_factor": record.epidemiology.lifestyle_factor,
                "vaccination_history": record.epidemiology.vaccination_history,
                "family_history": record.epidemiology.family_history,
            },
            "disease_information": {
                "disease": record.disease_info.disease,
                "level": record.disease_info.level,
                "symptoms": record.disease_info.symptoms,
                "duration": record.disease_info.duration,
            }
        })
        .to_string(),
    );
    for exam in &record.exams {
        fx.push(
            Purpose::Step3,
            json!({"exam_name": exam.exam_name, "finding": exam.finding}).to_string(),
        );
        fx.push(Purpose::Step3, "CONSISTENT");
    }
    for field in record.fields() {
        let statements = hand
            .get(&field.path)
            .unwrap_or_else(|| panic!("no hand facts for {}", field.path));
        fx.push(
            Purpose::Decompose,
            serde_json::to_string(statements).unwrap(),
        );
        fx.push(Purpose::Decompose, "ATOMIC");
    }
    let replay = dir.join("replay");
    std::fs::create_dir_all(&replay).expect("replay dir");
    fx.write_file(&replay.join("pancreatitis.jsonl"))
        .expect("write fixture");
    println!("{} entries", fx.len());
}
