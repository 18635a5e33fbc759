use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DiseaseOutline, KbError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogListing {
    pub department: String,
    pub disease: String,
    pub status: ReviewStatus,
    pub path: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    outlines: Vec<CatalogListing>,
}

#[derive(Debug, Clone)]
struct Slot {
    outline: DiseaseOutline,
    status: ReviewStatus,
}

/// Reviewed disease outlines, keyed by (department, disease).
///
/// On disk: `<root>/<department>/<disease>.json` per outline plus
/// `<root>/index.json` with review states. Only approved outlines are
/// selectable.
#[derive(Debug, Clone, Default)]
pub struct OutlineCatalog {
    root: Option<PathBuf>,
    slots: BTreeMap<(String, String), Slot>,
}

fn relative_path(department: &str, disease: &str) -> String {
    format!("{}/{}.json", sanitize(department), sanitize(disease))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if matches!(c, '/' | '\\' | ':' | '\0') {
                '_'
            } else {
                c
            }
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KbError + '_ {
    move |source| KbError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl OutlineCatalog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) a catalog rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, KbError> {
        let root = root.into();
        let mut catalog = Self {
            root: Some(root.clone()),
            slots: BTreeMap::new(),
        };
        let index_path = root.join("index.json");
        if !index_path.exists() {
            return Ok(catalog);
        }
        let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
        let index: Index = serde_json::from_str(&text)
            .map_err(|e| KbError::Format(format!("{}: {e}", index_path.display())))?;
        for listing in index.outlines {
            let path = root.join(&listing.path);
            let body = fs::read_to_string(&path).map_err(io_err(&path))?;
            let outline: DiseaseOutline = serde_json::from_str(&body)
                .map_err(|e| KbError::Format(format!("{}: {e}", path.display())))?;
            outline.validate()?;
            catalog.slots.insert(
                (listing.department, listing.disease),
                Slot {
                    outline,
                    status: listing.status,
                },
            );
        }
        Ok(catalog)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Stores a validated outline awaiting review. Replaces any previous
    /// version of the same disease and resets it to pending.
    pub fn add_pending(&mut self, outline: DiseaseOutline) -> Result<(), KbError> {
        self.insert(outline, ReviewStatus::Pending)
    }

    /// Stores an outline that is already reviewed (test fixtures, imports).
    pub fn add_approved(&mut self, outline: DiseaseOutline) -> Result<(), KbError> {
        self.insert(outline, ReviewStatus::Approved)
    }

    fn insert(&mut self, outline: DiseaseOutline, status: ReviewStatus) -> Result<(), KbError> {
        outline.validate()?;
        let key = (outline.department.clone(), outline.disease_name.clone());
        if let Some(root) = &self.root {
            let path = root.join(relative_path(&key.0, &key.1));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            let body = serde_json::to_string_pretty(&outline)
                .map_err(|e| KbError::Format(e.to_string()))?;
            fs::write(&path, body + "\n").map_err(io_err(&path))?;
        }
        self.slots.insert(key, Slot { outline, status });
        self.save_index()
    }

    pub fn approve(&mut self, department: &str, disease: &str) -> Result<(), KbError> {
        self.set_status(department, disease, ReviewStatus::Approved)
    }

    pub fn reject(&mut self, department: &str, disease: &str) -> Result<(), KbError> {
        self.set_status(department, disease, ReviewStatus::Rejected)
    }

    fn set_status(
        &mut self,
        department: &str,
        disease: &str,
        status: ReviewStatus,
    ) -> Result<(), KbError> {
        let slot = self
            .slots
            .get_mut(&(department.to_string(), disease.to_string()))
            .ok_or_else(|| KbError::UnknownDisease {
                department: department.to_string(),
                disease: disease.to_string(),
            })?;
        slot.status = status;
        self.save_index()
    }

    fn save_index(&self) -> Result<(), KbError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        fs::create_dir_all(root).map_err(io_err(root))?;
        let index = Index {
            outlines: self.list(),
        };
        let path = root.join("index.json");
        let body =
            serde_json::to_string_pretty(&index).map_err(|e| KbError::Format(e.to_string()))?;
        fs::write(&path, body + "\n").map_err(io_err(&path))
    }

    pub fn list(&self) -> Vec<CatalogListing> {
        self.slots
            .iter()
            .map(|((department, disease), slot)| CatalogListing {
                department: department.clone(),
                disease: disease.clone(),
                status: slot.status,
                path: relative_path(department, disease),
            })
            .collect()
    }

    pub fn status(&self, department: &str, disease: &str) -> Option<ReviewStatus> {
        self.slots
            .get(&(department.to_string(), disease.to_string()))
            .map(|s| s.status)
    }

    fn approved(&self) -> impl Iterator<Item = (&str, &DiseaseOutline)> {
        self.slots
            .iter()
            .filter(|(_, slot)| slot.status == ReviewStatus::Approved)
            .map(|((dept, _), slot)| (dept.as_str(), &slot.outline))
    }

    /// Departments with at least one approved outline, sorted.
    pub fn approved_departments(&self) -> Vec<&str> {
        let mut depts: Vec<&str> = self.approved().map(|(d, _)| d).collect();
        depts.dedup();
        depts
    }

    /// Any outline regardless of review state.
    pub fn get(&self, department: &str, disease: &str) -> Option<&DiseaseOutline> {
        self.slots
            .get(&(department.to_string(), disease.to_string()))
            .map(|s| &s.outline)
    }

    /// Approved outline for a disease name, optionally restricted to a department.
    pub fn find_approved(
        &self,
        department: Option<&str>,
        disease: &str,
    ) -> Option<&DiseaseOutline> {
        self.approved()
            .find(|(d, o)| department.is_none_or(|want| want == *d) && o.disease_name == disease)
            .map(|(_, o)| o)
    }

    /// Two-step uniform choice: a department, then a disease inside it.
    ///
    /// With `department` given, only the second step runs.
    pub fn select_disease<R: Rng + ?Sized>(
        &self,
        department: Option<&str>,
        rng: &mut R,
    ) -> Result<&DiseaseOutline, KbError> {
        let departments = self.approved_departments();
        if departments.is_empty() {
            return Err(KbError::EmptyCatalog);
        }
        let chosen = match department {
            Some(d) if departments.contains(&d) => d,
            Some(d) => return Err(KbError::UnknownDepartment(d.to_string())),
            None => departments[rng.gen_range(0..departments.len())],
        };
        let diseases: Vec<&DiseaseOutline> = self
            .approved()
            .filter(|(d, _)| *d == chosen)
            .map(|(_, o)| o)
            .collect();
        Ok(diseases[rng.gen_range(0..diseases.len())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{DemographicContext, ExamDescriptor, SymptomDescriptor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn outline(dept: &str, disease: &str) -> DiseaseOutline {
        DiseaseOutline {
            disease_name: disease.into(),
            department: dept.into(),
            demographic_context: DemographicContext::general([0.2, 0.5, 0.3]),
            symptom_inventory: vec![SymptomDescriptor {
                name: "pain".into(),
                severity_range: "mild-severe".into(),
                onset_pattern: "acute".into(),
            }],
            epidemiology_factors: vec![],
            exam_protocol: vec![ExamDescriptor {
                name: "Exam".into(),
                expected_finding: "finding".into(),
                reference_ranges: String::new(),
            }],
            severity_levels: vec!["Mild".into()],
        }
    }

    #[test]
    fn singleton_catalog_always_selects_it() {
        let mut cat = OutlineCatalog::in_memory();
        cat.add_approved(outline("Urology", "Cystitis")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            assert_eq!(
                cat.select_disease(None, &mut rng).unwrap().disease_name,
                "Cystitis"
            );
        }
    }

    #[test]
    fn missing_department_is_unknown() {
        let mut cat = OutlineCatalog::in_memory();
        cat.add_approved(outline("Urology", "Cystitis")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            cat.select_disease(Some("Psychiatry"), &mut rng),
            Err(KbError::UnknownDepartment(_))
        ));
    }

    #[test]
    fn empty_catalog() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            OutlineCatalog::in_memory().select_disease(None, &mut rng),
            Err(KbError::EmptyCatalog)
        ));
    }

    #[test]
    fn review_gate() {
        let mut cat = OutlineCatalog::in_memory();
        cat.add_pending(outline("Urology", "Cystitis")).unwrap();
        cat.add_pending(outline("Urology", "Prostatitis")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            cat.select_disease(None, &mut rng),
            Err(KbError::EmptyCatalog)
        ));
        cat.approve("Urology", "Cystitis").unwrap();
        cat.reject("Urology", "Prostatitis").unwrap();
        for _ in 0..50 {
            assert_eq!(
                cat.select_disease(None, &mut rng).unwrap().disease_name,
                "Cystitis"
            );
        }
        assert!(cat.find_approved(None, "Prostatitis").is_none());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut cat = OutlineCatalog::in_memory();
        for d in ["A", "B", "C", "D"] {
            cat.add_approved(outline("Urology", d)).unwrap();
            cat.add_approved(outline("Psychiatry", d)).unwrap();
        }
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let o = cat.select_disease(None, &mut rng).unwrap();
            (o.department.clone(), o.disease_name.clone())
        };
        assert_eq!(pick(42), pick(42));
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut cat = OutlineCatalog::open(dir.path()).unwrap();
            cat.add_pending(outline("General Surgery", "Pancreatitis"))
                .unwrap();
            cat.approve("General Surgery", "Pancreatitis").unwrap();
        }
        assert!(dir
            .path()
            .join("General Surgery/Pancreatitis.json")
            .is_file());
        let cat = OutlineCatalog::open(dir.path()).unwrap();
        assert_eq!(
            cat.status("General Surgery", "Pancreatitis"),
            Some(ReviewStatus::Approved)
        );
        assert!(cat
            .find_approved(Some("General Surgery"), "Pancreatitis")
            .is_some());
    }

    #[test]
    fn invalid_outline_is_not_stored() {
        let mut cat = OutlineCatalog::in_memory();
        let mut bad = outline("Urology", "Cystitis");
        bad.exam_protocol.clear();
        assert!(cat.add_pending(bad).is_err());
        assert!(cat.list().is_empty());
    }
}
