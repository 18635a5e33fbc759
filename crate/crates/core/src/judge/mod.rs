//! Three-way Entail/Neutral/Contradict judging of a patient reply against
//! memory facts, and the per-response evaluation sweep.

mod llm;
mod scripted;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::memory::{AgentMemory, AtomicFact};

pub use llm::{LlmJudge, VerdictRecord, EXTRACT_MAX_PARSE_RETRIES, VERDICT_MAX_RETRIES};
pub use scripted::ScriptedJudge;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TripletLabel {
    Entail,
    Neutral,
    Contradict,
}

impl TripletLabel {
    pub const ALL: [TripletLabel; 3] = [
        TripletLabel::Entail,
        TripletLabel::Neutral,
        TripletLabel::Contradict,
    ];

    pub fn letter(self) -> char {
        match self {
            TripletLabel::Entail => 'E',
            TripletLabel::Neutral => 'N',
            TripletLabel::Contradict => 'C',
        }
    }
}

impl fmt::Display for TripletLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for TripletLabel {
    type Err = String;

    /// Accepts a single letter or the full word, ignoring case, surrounding
    /// punctuation and anything after the first word.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let word: String = s
            .trim()
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .chars()
            .take_while(|c| c.is_alphabetic())
            .collect::<String>()
            .to_ascii_uppercase();
        match word.as_str() {
            "E" | "ENTAIL" | "ENTAILS" | "ENTAILMENT" | "ENTAILED" => Ok(TripletLabel::Entail),
            "N" | "NEUTRAL" => Ok(TripletLabel::Neutral),
            "C" | "CONTRADICT" | "CONTRADICTS" | "CONTRADICTION" | "CONTRADICTED" => {
                Ok(TripletLabel::Contradict)
            }
            _ => Err(format!(
                "expected one of E, N, C but got {:?}",
                crate::llm_text::single_line(s)
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(#[from] GatewayError),
    #[error("malformed verdict after {attempts} attempts: {last_error}")]
    MalformedVerdict { attempts: u32, last_error: String },
    #[error("claim extraction unusable after {attempts} attempts: {last_error}")]
    Parse { attempts: u32, last_error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClaimMode {
    /// Claims the reply presents as new information.
    New,
    /// Every factual claim in the reply.
    All,
}

/// The evaluation function over (premise, fact).
///
/// `premise` is the text under test (a patient reply, or a fact statement
/// when checking insertion), `hypothesis` the fact it is judged against.
pub trait TripletJudge: Send + Sync {
    fn judge(
        &self,
        premise: &str,
        hypothesis: &AtomicFact,
        context: Option<&str>,
    ) -> Result<TripletLabel, JudgeError>;

    fn extract_claims(&self, response: &str, mode: ClaimMode) -> Result<Vec<String>, JudgeError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactVerdict {
    pub fact_id: String,
    pub label: TripletLabel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub entail: u32,
    pub neutral: u32,
    pub contradict: u32,
}

impl VerdictSummary {
    pub fn add(&mut self, label: TripletLabel) {
        match label {
            TripletLabel::Entail => self.entail += 1,
            TripletLabel::Neutral => self.neutral += 1,
            TripletLabel::Contradict => self.contradict += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.entail + self.neutral + self.contradict
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub verdicts: Vec<FactVerdict>,
    pub first_contradiction: Option<String>,
    pub neutral_novel_claims: Vec<String>,
}

impl EvaluationReport {
    pub fn summary(&self) -> VerdictSummary {
        let mut s = VerdictSummary::default();
        for v in &self.verdicts {
            s.add(v.label);
        }
        s
    }

    pub fn has_contradiction(&self) -> bool {
        self.first_contradiction.is_some()
    }
}

/// Judges `response` against every fact in memory order, stopping at the
/// first Contradict. When the sweep finishes without a contradiction and at
/// least one verdict was Neutral, new claims are extracted once.
pub fn evaluate_response(
    response: &str,
    memory: &AgentMemory,
    judge: &dyn TripletJudge,
    context: Option<&str>,
) -> Result<EvaluationReport, JudgeError> {
    let mut report = EvaluationReport::default();
    for fact in memory.facts() {
        let label = judge.judge(response, fact, context)?;
        report.verdicts.push(FactVerdict {
            fact_id: fact.fact_id.clone(),
            label,
        });
        if label == TripletLabel::Contradict {
            report.first_contradiction = Some(fact.fact_id.clone());
            return Ok(report);
        }
    }
    if report
        .verdicts
        .iter()
        .any(|v| v.label == TripletLabel::Neutral)
    {
        report.neutral_novel_claims = extract_new_facts(response, judge)?;
    }
    Ok(report)
}

/// Candidate statements the response frames as new information.
pub fn extract_new_facts(
    response: &str,
    judge: &dyn TripletJudge,
) -> Result<Vec<String>, JudgeError> {
    judge.extract_claims(response, ClaimMode::New)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::AtomicFact;

    fn memory(n: usize) -> AgentMemory {
        AgentMemory::from_facts(
            (0..n).map(|i| AtomicFact::record(format!("fact {i}"), "basic_information.name")),
        )
    }

    #[test]
    fn label_parsing() {
        assert_eq!("E".parse::<TripletLabel>().unwrap(), TripletLabel::Entail);
        assert_eq!(
            " n.".parse::<TripletLabel>().unwrap(),
            TripletLabel::Neutral
        );
        assert_eq!(
            "**Contradiction** because".parse::<TripletLabel>().unwrap(),
            TripletLabel::Contradict
        );
        assert!("maybe".parse::<TripletLabel>().is_err());
        assert!("".parse::<TripletLabel>().is_err());
    }

    #[test]
    fn empty_memory_report() {
        let judge = ScriptedJudge::constant(TripletLabel::Contradict);
        let report = evaluate_response("hello", &AgentMemory::default(), &judge, None).unwrap();
        assert!(report.verdicts.is_empty());
        assert!(report.first_contradiction.is_none());
        assert_eq!(judge.judge_calls(), 0);
    }

    #[test]
    fn short_circuits_on_second_fact() {
        let m = memory(4);
        let judge = ScriptedJudge::sequence([TripletLabel::Neutral, TripletLabel::Contradict]);
        let report = evaluate_response("reply", &m, &judge, None).unwrap();
        assert_eq!(report.verdicts.len(), 2);
        assert_eq!(
            report.first_contradiction.as_deref(),
            Some(m.facts()[1].fact_id.as_str())
        );
        assert!(report.neutral_novel_claims.is_empty());
        assert_eq!(judge.extract_calls(), 0);
    }

    #[test]
    fn all_entail_extracts_nothing() {
        let judge =
            ScriptedJudge::constant(TripletLabel::Entail).with_claims(|_, _| vec!["x".into()]);
        let report = evaluate_response("reply", &memory(3), &judge, None).unwrap();
        assert_eq!(report.summary().entail, 3);
        assert!(report.first_contradiction.is_none());
        assert!(report.neutral_novel_claims.is_empty());
        assert_eq!(judge.extract_calls(), 0);
    }

    #[test]
    fn neutral_extracts_once_per_response() {
        let judge = ScriptedJudge::constant(TripletLabel::Neutral)
            .with_claims(|_, _| vec!["Patient experiences headaches at night".into()]);
        let report =
            evaluate_response("I also get headaches at night.", &memory(5), &judge, None).unwrap();
        assert_eq!(
            report.neutral_novel_claims,
            ["Patient experiences headaches at night"]
        );
        assert_eq!(judge.extract_calls(), 1);
    }

    #[test]
    fn judge_calls_bounded_by_memory() {
        for n in 0..6 {
            let judge = ScriptedJudge::constant(TripletLabel::Entail);
            evaluate_response("r", &memory(n), &judge, None).unwrap();
            assert_eq!(judge.judge_calls(), n);
        }
    }
}
