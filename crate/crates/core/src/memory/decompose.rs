use crate::gateway::{AskError, Gateway, Message, Purpose};
use crate::llm_text::{fill_template, parse_embedded, single_line};
use crate::pipeline::{PatientRecord, RecordField};
use crate::prompts::Prompts;

use super::{AgentMemory, AtomicFact, MemoryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecomposeConfig {
    /// Extra attempts when a reply is not a JSON list of strings.
    pub max_parse_retries: u32,
    /// Re-decompositions of a field after the atomicity check flags statements.
    pub max_atomic_retries: u32,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            max_parse_retries: 3,
            max_atomic_retries: 3,
        }
    }
}

pub struct Decomposer<'a> {
    gateway: &'a Gateway,
    prompts: &'a Prompts,
    config: DecomposeConfig,
}

/// Decomposes with the default configuration.
pub fn decompose(
    record: &PatientRecord,
    gateway: &Gateway,
    prompts: &Prompts,
) -> Result<AgentMemory, MemoryError> {
    Decomposer::new(gateway, prompts, DecomposeConfig::default()).decompose(record)
}

fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        current.push(c);
        let boundary = matches!(c, '.' | '!' | '?')
            && chars.get(i + 1).is_some_and(|n| n.is_whitespace())
            && chars[i + 1..]
                .iter()
                .find(|n| !n.is_whitespace())
                .is_some_and(|n| n.is_uppercase() || n.is_ascii_digit());
        if boundary {
            out.push(current.trim().to_string());
            current.clear();
        }
    }
    if !current.trim().is_empty() {
        out.push(current.trim().to_string());
    }
    out
}

fn fallback_field(field: &RecordField) -> Vec<AtomicFact> {
    let pieces: Vec<String> = if field.path == "disease_information.symptoms" {
        field
            .value
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    } else {
        split_sentences(&field.value)
    };
    pieces
        .into_iter()
        .map(|p| AtomicFact::record(format!("{}: {}", field.label, p), &field.path))
        .collect()
}

/// Offline decomposition: one fact per sentence per field, one per item for
/// the symptom list. Deterministic.
pub fn fallback_decompose(record: &PatientRecord) -> AgentMemory {
    AgentMemory::from_facts(
        record
            .fields()
            .iter()
            .filter(|f| !f.value.trim().is_empty())
            .flat_map(fallback_field),
    )
}

/// Parses `ATOMIC` or `NON_ATOMIC: 2, 3` into zero-based indices of
/// non-atomic statements.
fn parse_atomicity(reply: &str, count: usize) -> Result<Vec<usize>, String> {
    let text = reply
        .trim()
        .trim_start_matches(|c: char| !c.is_alphanumeric());
    let upper = text.to_ascii_uppercase();
    if upper.starts_with("NON_ATOMIC")
        || upper.starts_with("NON-ATOMIC")
        || upper.starts_with("NOT ATOMIC")
    {
        let rest = &text[text.find(':').map_or(10, |i| i + 1)..];
        let mut bad = Vec::new();
        for part in rest
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
        {
            let n: usize = part
                .trim_matches(|c: char| !c.is_ascii_digit())
                .parse()
                .map_err(|_| format!("could not read statement number {part:?}"))?;
            if n == 0 || n > count {
                return Err(format!("statement number {n} is out of range 1..={count}"));
            }
            bad.push(n - 1);
        }
        if bad.is_empty() {
            return Err("NON_ATOMIC must list the statement numbers".into());
        }
        bad.sort_unstable();
        bad.dedup();
        Ok(bad)
    } else if upper.starts_with("ATOMIC") {
        Ok(Vec::new())
    } else {
        Err("expected ATOMIC or NON_ATOMIC: <numbers>".into())
    }
}

impl<'a> Decomposer<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a Prompts, config: DecomposeConfig) -> Self {
        Self {
            gateway,
            prompts,
            config,
        }
    }

    /// One decomposition call plus one atomicity check per non-empty field.
    /// A field whose first call finds no model output (offline, or no
    /// fixture entry) uses the deterministic fallback instead.
    pub fn decompose(&self, record: &PatientRecord) -> Result<AgentMemory, MemoryError> {
        let mut facts = Vec::new();
        for field in record
            .fields()
            .iter()
            .filter(|f| !f.value.trim().is_empty())
        {
            let field_facts = match self.decompose_field(field) {
                Err(MemoryError::Gateway(e)) if e.is_offline_miss() => {
                    tracing::debug!(field = %field.path, "no model output; using sentence fallback");
                    fallback_field(field)
                }
                other => other?,
            };
            if field_facts.is_empty() {
                return Err(MemoryError::DecompositionIncomplete {
                    field: field.path.clone(),
                });
            }
            facts.extend(field_facts);
        }
        Ok(AgentMemory::from_facts(facts))
    }

    fn decompose_field(&self, field: &RecordField) -> Result<Vec<AtomicFact>, MemoryError> {
        let mut feedback = String::new();
        for round in 0..=self.config.max_atomic_retries {
            let prompt = fill_template(
                &self.prompts.decompose,
                &[
                    ("field", &field.label),
                    ("value", &field.value),
                    ("feedback", &feedback),
                ],
            );
            let statements: Vec<String> = self
                .gateway
                .ask(
                    Purpose::Decompose,
                    vec![Message::user(prompt)],
                    self.config.max_parse_retries,
                    |reply| {
                        let list: Vec<String> = parse_embedded(reply)?;
                        let list: Vec<String> = list
                            .iter()
                            .map(|s| single_line(s))
                            .filter(|s| !s.is_empty())
                            .collect();
                        if list.is_empty() {
                            Err("the list is empty".into())
                        } else {
                            Ok(list)
                        }
                    },
                )
                .map_err(|e| self.ask_error(field, e))?;

            let numbered: String = statements
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{}. {s}\n", i + 1))
                .collect();
            let check = fill_template(
                &self.prompts.atomicity,
                &[("statements", numbered.trim_end())],
            );
            let n = statements.len();
            let bad = self
                .gateway
                .ask(
                    Purpose::Decompose,
                    vec![Message::user(check)],
                    self.config.max_parse_retries,
                    |reply| parse_atomicity(reply, n),
                )
                .map_err(|e| self.ask_error(field, e))?;

            if bad.is_empty() || round == self.config.max_atomic_retries {
                return Ok(statements
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !bad.contains(i))
                    .map(|(_, s)| AtomicFact::record(s, &field.path))
                    .collect());
            }
            let flagged: Vec<&str> = bad.iter().map(|i| statements[*i].as_str()).collect();
            feedback = format!(
                "\nA previous attempt produced statements that make more than one claim: {}. Split them further.\n",
                flagged.join(" | ")
            );
        }
        unreachable!("loop returns on the final round")
    }

    fn ask_error(&self, field: &RecordField, e: AskError) -> MemoryError {
        match e {
            AskError::Gateway(g) => MemoryError::Gateway(g),
            AskError::Unparseable {
                attempts,
                last_error,
            } => MemoryError::Parse {
                field: field.path.clone(),
                attempts,
                last_error,
            },
        }
    }
}
