//! Reference data: a severe pancreatitis case and the outline it belongs to.
//! Used by the bundled replay fixtures, demos and tests.

use crate::kb::{DemographicContext, DiseaseOutline, ExamDescriptor, Gender, SymptomDescriptor};
use crate::pipeline::{BasicInfo, DiseaseInfo, Epidemiology, ExamResult, PatientRecord};

pub fn pancreatitis_outline() -> DiseaseOutline {
    let symptom = |name: &str, severity: &str, onset: &str| SymptomDescriptor {
        name: name.into(),
        severity_range: severity.into(),
        onset_pattern: onset.into(),
    };
    let exam = |name: &str, finding: &str, ranges: &str| ExamDescriptor {
        name: name.into(),
        expected_finding: finding.into(),
        reference_ranges: ranges.into(),
    };
    DiseaseOutline {
        disease_name: "Pancreatitis".into(),
        department: "General Surgery".into(),
        demographic_context: DemographicContext::general([0.05, 0.6, 0.35]),
        symptom_inventory: vec![
            symptom("Acute abdominal pain", "moderate to severe", "sudden, often after a fatty meal or alcohol"),
            symptom("Nausea", "mild to severe", "accompanies pain"),
            symptom("Vomiting", "mild to severe", "accompanies pain"),
            symptom("Fever", "low to high grade", "within days of onset"),
            symptom("Dyspnea", "mild to severe", "in severe cases"),
            symptom("Hypotension", "moderate to severe", "in severe cases"),
            symptom("Upper abdominal distension", "mild to moderate", "progressive"),
            symptom("Elevated blood sugar", "mild to moderate", "with pancreatic damage"),
        ],
        epidemiology_factors: vec![
            "Gallstones".into(),
            "Alcohol consumption".into(),
            "High-fat diet and hypertriglyceridemia".into(),
            "Smoking".into(),
            "Family history of pancreatic disease".into(),
            "Hepatitis vaccination status".into(),
        ],
        exam_protocol: vec![
            exam(
                "Routine Blood Test",
                "Serum amylase and lipase elevated above three times the upper limit; blood glucose may be raised",
                "amylase 30-110 U/L; lipase 0-160 U/L; glucose 70-140 mg/dL",
            ),
            exam(
                "Biochemical Test",
                "White blood cell count raised; liver enzymes mildly elevated with biliary involvement",
                "WBC 4,500-11,000 cells/mm3; ALT 7-56 U/L; ALP 44-147 U/L",
            ),
            exam(
                "Imaging Tests",
                "CT or ultrasound shows pancreatic edema, fluid collections, pseudocysts or gallstones",
                "common bile duct under 6 mm",
            ),
        ],
        severity_levels: vec!["Mild".into(), "Moderate".into(), "Severe".into()],
    }
}

pub fn pancreatitis_record() -> PatientRecord {
    PatientRecord {
        record_id: "10024".into(),
        department: "General Surgery".into(),
        basic: BasicInfo {
            patient_id: "10024".into(),
            name: "Clara Gutierrez".into(),
            gender: Gender::Female,
            age: 47,
        },
        epidemiology: Epidemiology {
            medical_history: "Chronic pancreatitis diagnosed 5 years ago, history of gallstones, high cholesterol".into(),
            lifestyle_factor: "Moderate alcohol consumption (social drinker), high-fat diet, sedentary lifestyle, former smoker (quit 2 years ago)".into(),
            vaccination_history: "Not vaccinated for hepatitis A or B".into(),
            family_history: "Mother had gallbladder issues, father had pancreatitis and diabetes".into(),
        },
        disease_info: DiseaseInfo {
            disease: "Pancreatitis".into(),
            level: "Severe".into(),
            symptoms: [
                "Acute abdominal pain",
                "nausea",
                "vomiting",
                "fever",
                "dyspnea",
                "hypotension",
                "upper abdominal distension",
                "elevated blood sugar",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            duration: "Symptoms have been present for the last 10 days, worsening over the past 48 hours, with severe abdominal pain radiating to the back.".into(),
        },
        exams: vec![
            ExamResult {
                exam_name: "Routine Blood Test".into(),
                finding: "Serum amylase level is significantly elevated at 450 U/L (normal range: 30-110 U/L) and lipase at 900 U/L (normal range: 0-160 U/L). Blood glucose is also elevated at 220 mg/dL, indicating possible pancreatic damage affecting insulin secretion.".into(),
            },
            ExamResult {
                exam_name: "Biochemical Test".into(),
                finding: "The white blood cell count is elevated at 14,000 cells/mm³, suggesting an inflammatory response. Liver function tests show mild elevation in ALT at 60 U/L (normal range: 7-56 U/L) and alkaline phosphatase at 150 U/L (normal range: 44-147 U/L), indicating possible biliary involvement. Kidney function tests remain within normal limits.".into(),
            },
            ExamResult {
                exam_name: "Imaging Tests".into(),
                finding: "CT scan of the abdomen reveals significant pancreatic edema with peritoneal fluid collection and a 3 cm pseudocyst formation adjacent to the pancreas. No evidence of necrosis is noted. An abdominal ultrasound confirms the presence of gallstones in the gallbladder, with a dilated common bile duct measuring 10 mm.".into(),
            },
        ],
    }
}
