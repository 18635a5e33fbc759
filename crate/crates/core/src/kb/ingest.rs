use super::{DepartmentCatalog, DiseaseEntry, KbError, Section};

const FALLBACK_HEADING: &str = "body";

/// Splits a raw knowledge document into sections on `##` heading lines.
///
/// Text before the first heading, or a document with no headings at all,
/// becomes a section titled `body`.
pub fn ingest_entry(
    raw: &str,
    department: &str,
    disease_name: &str,
    departments: &DepartmentCatalog,
    source_uri: &str,
) -> Result<DiseaseEntry, KbError> {
    if raw.trim().is_empty() {
        return Err(KbError::EmptyInput);
    }
    if !departments.contains(department) {
        return Err(KbError::UnknownDepartment(department.to_string()));
    }

    let mut sections = Vec::new();
    let mut heading: Option<String> = None;
    let mut body: Vec<&str> = Vec::new();

    for line in raw.lines() {
        if let Some(rest) = line.strip_prefix("##") {
            flush(&mut sections, heading.take(), &body);
            body.clear();
            heading = Some(rest.trim_start_matches('#').trim().to_string());
        } else {
            body.push(line);
        }
    }
    flush(&mut sections, heading, &body);

    Ok(DiseaseEntry {
        department: department.to_string(),
        disease_name: disease_name.trim().to_string(),
        raw_sections: sections,
        source_uri: source_uri.to_string(),
    })
}

fn flush(sections: &mut Vec<Section>, heading: Option<String>, body: &[&str]) {
    let text = body.join("\n").trim().to_string();
    match heading {
        Some(h) => sections.push(Section {
            heading: h,
            body: text,
        }),
        None if !text.is_empty() => sections.push(Section {
            heading: FALLBACK_HEADING.to_string(),
            body: text,
        }),
        None => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(raw: &str, dept: &str) -> Result<DiseaseEntry, KbError> {
        ingest_entry(
            raw,
            dept,
            "Pancreatitis",
            &DepartmentCatalog::default(),
            "inline",
        )
    }

    #[test]
    fn single_heading() {
        let entry = ingest(
            "## Symptoms\nacute abdominal pain radiating to the back",
            "General Surgery",
        )
        .unwrap();
        assert_eq!(entry.raw_sections.len(), 1);
        assert_eq!(entry.raw_sections[0].heading, "Symptoms");
        assert_eq!(
            entry.raw_sections[0].body,
            "acute abdominal pain radiating to the back"
        );
    }

    #[test]
    fn empty_input() {
        let err = ingest_entry(
            "  \n",
            "Urology",
            "Cystitis",
            &DepartmentCatalog::default(),
            "",
        )
        .unwrap_err();
        assert!(matches!(err, KbError::EmptyInput));
    }

    #[test]
    fn unknown_department() {
        assert!(matches!(
            ingest("text", "Cardiology"),
            Err(KbError::UnknownDepartment(_))
        ));
    }

    #[test]
    fn three_headings_keep_order_and_boundaries() {
        let doc = "## Overview\nInflammation of the pancreas.\n\n## Symptoms\nPain.\nNausea.\n## Examinations\nSerum amylase.";
        let entry = ingest(doc, "General Surgery").unwrap();
        // hand split of the document above
        let expected = [
            ("Overview", "Inflammation of the pancreas."),
            ("Symptoms", "Pain.\nNausea."),
            ("Examinations", "Serum amylase."),
        ];
        assert_eq!(entry.raw_sections.len(), 3);
        for (section, (h, b)) in entry.raw_sections.iter().zip(expected) {
            assert_eq!(section.heading, h);
            assert_eq!(section.body, b);
        }
    }

    #[test]
    fn headingless_text_is_one_body_section() {
        let entry = ingest("just some prose\nmore prose", "General Surgery").unwrap();
        assert_eq!(entry.raw_sections.len(), 1);
        assert_eq!(entry.raw_sections[0].heading, "body");
    }

    #[test]
    fn preamble_precedes_headings() {
        let entry = ingest("intro\n### Causes\ngallstones", "General Surgery").unwrap();
        assert_eq!(entry.raw_sections[0].heading, "body");
        assert_eq!(entry.raw_sections[1].heading, "Causes");
    }
}
