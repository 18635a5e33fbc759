//! Prompt templates. Built-in copies are compiled in from `prompts/`; any of
//! them can be overridden by a file of the same name in a prompts directory.

use std::fs;
use std::io;
use std::path::Path;

macro_rules! templates {
    ($($field:ident => $file:literal),+ $(,)?) => {
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct Prompts {
            $(pub $field: String,)+
        }

        impl Prompts {
            pub fn builtin() -> Self {
                Self {
                    $($field: include_str!(concat!("../prompts/", $file)).to_string(),)+
                }
            }

            /// Builtins, with each template replaced by `dir/<file>` when present.
            pub fn with_overrides(dir: &Path) -> io::Result<Self> {
                let mut prompts = Self::builtin();
                $(
                    let path = dir.join($file);
                    if path.is_file() {
                        prompts.$field = fs::read_to_string(&path)?;
                    }
                )+
                Ok(prompts)
            }
        }
    };
}

templates! {
    outline => "outline.tmpl",
    step2 => "step2.tmpl",
    step2_exemplar => "step2_exemplar.json",
    step3 => "step3.tmpl",
    step3_exemplar => "step3_exemplar.json",
    step3_check => "step3_check.tmpl",
    decompose => "decompose.tmpl",
    atomicity => "atomicity.tmpl",
    judge => "judge.tmpl",
    extract_new => "extract_new.tmpl",
    extract_all => "extract_all.tmpl",
    patient => "patient.tmpl",
    regenerate => "regenerate.tmpl",
    doctor => "doctor.tmpl",
    accuracy => "accuracy.tmpl",
    rubric_emotion => "rubric_emotion.tmpl",
    rubric_fluency => "rubric_fluency.tmpl",
    similarity => "similarity.tmpl",
    style_plain => "styles/plain.txt",
    style_upset => "styles/upset.txt",
    style_verbose => "styles/verbose.txt",
    style_reserved => "styles/reserved.txt",
    style_tangent => "styles/tangent.txt",
    style_pleasing => "styles/pleasing.txt",
}

impl Default for Prompts {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_templates_carry_placeholders() {
        let p = Prompts::builtin();
        for placeholder in ["{{outline}}", "{{demographics}}", "{{exemplar}}"] {
            assert!(p.step2.contains(placeholder), "step2 missing {placeholder}");
        }
        for placeholder in ["{{outline}}", "{{exemplar}}"] {
            assert!(p.step3.contains(placeholder), "step3 missing {placeholder}");
        }
    }

    #[test]
    fn override_replaces_single_template() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("doctor.tmpl"), "custom doctor").unwrap();
        let p = Prompts::with_overrides(dir.path()).unwrap();
        assert_eq!(p.doctor, "custom doctor");
        assert_eq!(p.judge, Prompts::builtin().judge);
    }
}
