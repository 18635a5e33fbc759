use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::pipeline::SECTION_HEADINGS;

use super::{AgentMemory, AtomicFact, FactOrigin};

const DIALOGUE_HEADING: &str = "Learned In Conversation";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryFormat {
    /// Keyed document grouped by record section and field.
    Structured,
    /// One clinical-note paragraph.
    Plain,
    /// One statement per line.
    #[default]
    Atomic,
}

impl fmt::Display for MemoryFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemoryFormat::Structured => "structured",
            MemoryFormat::Plain => "plain",
            MemoryFormat::Atomic => "atomic",
        })
    }
}

impl FromStr for MemoryFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "structured" | "json" => Ok(MemoryFormat::Structured),
            "plain" | "text" => Ok(MemoryFormat::Plain),
            "atomic" => Ok(MemoryFormat::Atomic),
            other => Err(format!(
                "unknown memory format {other:?} (structured, plain, atomic)"
            )),
        }
    }
}

fn section_of(fact: &AtomicFact) -> &'static str {
    if fact.origin == FactOrigin::Dialogue {
        return DIALOGUE_HEADING;
    }
    let root = fact
        .source_path
        .split(['.', '['])
        .next()
        .unwrap_or_default();
    match root {
        "basic_information" => SECTION_HEADINGS[0],
        "epidemiology" => SECTION_HEADINGS[1],
        "disease_information" => SECTION_HEADINGS[2],
        "examination_results" => SECTION_HEADINGS[3],
        _ => DIALOGUE_HEADING,
    }
}

fn field_key(fact: &AtomicFact) -> &str {
    match fact.source_path.split_once('.') {
        Some((_, field)) => field,
        None => &fact.source_path,
    }
}

fn grouped(memory: &AgentMemory) -> Vec<(&'static str, Vec<&AtomicFact>)> {
    let mut order: Vec<&'static str> = SECTION_HEADINGS.to_vec();
    order.push(DIALOGUE_HEADING);
    order
        .into_iter()
        .map(|h| {
            (
                h,
                memory
                    .facts()
                    .iter()
                    .filter(|f| section_of(f) == h)
                    .collect::<Vec<_>>(),
            )
        })
        .filter(|(_, facts)| !facts.is_empty())
        .collect()
}

fn sentence(statement: &str) -> String {
    let s = statement.trim();
    if s.ends_with(['.', '!', '?']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

pub fn render(memory: &AgentMemory, format: MemoryFormat) -> String {
    match format {
        MemoryFormat::Atomic => memory
            .facts()
            .iter()
            .map(|f| f.statement.as_str())
            .collect::<Vec<_>>()
            .join("\n"),
        MemoryFormat::Plain => grouped(memory)
            .into_iter()
            .map(|(heading, facts)| {
                let body: Vec<String> = facts.iter().map(|f| sentence(&f.statement)).collect();
                format!("{heading}: {}", body.join(" "))
            })
            .collect::<Vec<_>>()
            .join(" "),
        MemoryFormat::Structured => {
            if memory.is_empty() {
                return String::new();
            }
            let mut doc = Map::new();
            for (heading, facts) in grouped(memory) {
                let mut section = Map::new();
                for f in facts {
                    let entry = section
                        .entry(field_key(f).to_string())
                        .or_insert_with(|| Value::Array(Vec::new()));
                    if let Value::Array(items) = entry {
                        items.push(Value::String(f.statement.clone()));
                    }
                }
                doc.insert(heading.to_string(), Value::Object(section));
            }
            serde_json::to_string_pretty(&Value::Object(doc)).expect("memory document serializes")
        }
    }
}

/// Statements of an atomic-format rendering, one per non-blank line.
pub fn parse_atomic(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}
