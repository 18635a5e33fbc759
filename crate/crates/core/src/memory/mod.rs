//! Agent memory: the record decomposed into atomic facts, the insertion
//! rules for facts learned in conversation, and the three render formats.

mod decompose;
mod render;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::judge::{JudgeError, TripletJudge, TripletLabel};
use crate::llm_text::{sha256_hex, single_line};

pub use decompose::{decompose, fallback_decompose, DecomposeConfig, Decomposer};
pub use render::{parse_atomic, render, MemoryFormat};

pub const DIALOGUE_SOURCE: &str = "dialogue";
const FACT_ID_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("decomposition produced no facts for {field}")]
    DecompositionIncomplete { field: String },
    #[error("decomposition output for {field} unusable after {attempts} attempts: {last_error}")]
    Parse {
        field: String,
        attempts: u32,
        last_error: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("only dialogue facts go through insertion checks ({0})")]
    NotDialogueFact(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactOrigin {
    Record,
    Dialogue,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtomicFact {
    pub fact_id: String,
    pub statement: String,
    pub source_path: String,
    pub origin: FactOrigin,
    pub turn_index: u32,
}

pub fn fact_id(statement: &str, source_path: &str) -> String {
    sha256_hex(&[statement, source_path])[..FACT_ID_LEN].to_string()
}

impl AtomicFact {
    /// A fact taken from the record field at `source_path`. Whitespace is
    /// collapsed so every statement fits on one line.
    pub fn record(statement: impl AsRef<str>, source_path: &str) -> Self {
        let statement = single_line(statement.as_ref());
        Self {
            fact_id: fact_id(&statement, source_path),
            statement,
            source_path: source_path.to_string(),
            origin: FactOrigin::Record,
            turn_index: 0,
        }
    }

    pub fn dialogue(statement: impl AsRef<str>, turn_index: u32) -> Self {
        let statement = single_line(statement.as_ref());
        Self {
            fact_id: fact_id(&statement, DIALOGUE_SOURCE),
            statement,
            source_path: DIALOGUE_SOURCE.to_string(),
            origin: FactOrigin::Dialogue,
            turn_index,
        }
    }
}

/// Verdicts for one existing fact: candidate-as-premise, then
/// fact-as-premise (absent when the forward verdict already decided).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub fact_id: String,
    pub forward: TripletLabel,
    pub reverse: Option<TripletLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "fact_id", rename_all = "snake_case")]
pub enum InsertOutcome {
    Accepted,
    RejectedContradiction(String),
    RejectedNonNeutral(String),
}

impl InsertOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, InsertOutcome::Accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionRecord {
    pub fact_id: String,
    pub statement: String,
    pub verdicts: Vec<PairVerdict>,
    pub outcome: InsertOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMemory {
    facts: Vec<AtomicFact>,
    insertion_log: Vec<InsertionRecord>,
}

impl AgentMemory {
    /// Builds a memory from record facts, dropping repeated ids.
    pub fn from_facts(facts: impl IntoIterator<Item = AtomicFact>) -> Self {
        let mut seen = HashSet::new();
        let facts = facts
            .into_iter()
            .filter(|f| seen.insert(f.fact_id.clone()))
            .collect();
        Self {
            facts,
            insertion_log: Vec::new(),
        }
    }

    /// Restores a persisted memory without re-running insertion checks.
    pub fn restore(facts: Vec<AtomicFact>, insertion_log: Vec<InsertionRecord>) -> Self {
        Self {
            facts,
            insertion_log,
        }
    }

    pub fn facts(&self) -> &[AtomicFact] {
        &self.facts
    }

    pub fn insertion_log(&self) -> &[InsertionRecord] {
        &self.insertion_log
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn get(&self, fact_id: &str) -> Option<&AtomicFact> {
        self.facts.iter().find(|f| f.fact_id == fact_id)
    }

    /// Digest over every fact in order; equal memories hash equal.
    pub fn content_hash(&self) -> String {
        let mut parts: Vec<String> = Vec::with_capacity(self.facts.len() * 5);
        for f in &self.facts {
            parts.push(f.fact_id.clone());
            parts.push(f.statement.clone());
            parts.push(f.source_path.clone());
            parts.push(format!("{:?}", f.origin));
            parts.push(f.turn_index.to_string());
        }
        let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        sha256_hex(&refs)
    }

    /// Inserts `candidate` only if it is Neutral against every existing fact
    /// in both directions. Facts are judged in memory order; a Contradict
    /// stops the scan and names that fact, otherwise the first Entail is
    /// reported. The log gets an entry whatever the outcome.
    pub fn try_insert(
        &mut self,
        candidate: AtomicFact,
        judge: &dyn TripletJudge,
    ) -> Result<InsertOutcome, MemoryError> {
        if candidate.origin != FactOrigin::Dialogue {
            return Err(MemoryError::NotDialogueFact(candidate.fact_id));
        }
        let mut verdicts = Vec::new();
        let mut outcome = if self.get(&candidate.fact_id).is_some() {
            InsertOutcome::RejectedNonNeutral(candidate.fact_id.clone())
        } else {
            InsertOutcome::Accepted
        };

        if outcome.is_accepted() {
            for existing in &self.facts {
                let forward = judge.judge(&candidate.statement, existing, None)?;
                let reverse = if forward == TripletLabel::Neutral {
                    Some(judge.judge(&existing.statement, &candidate, None)?)
                } else {
                    None
                };
                verdicts.push(PairVerdict {
                    fact_id: existing.fact_id.clone(),
                    forward,
                    reverse,
                });
                let labels = [Some(forward), reverse];
                if labels.contains(&Some(TripletLabel::Contradict)) {
                    outcome = InsertOutcome::RejectedContradiction(existing.fact_id.clone());
                    break;
                }
                if labels.contains(&Some(TripletLabel::Entail)) && outcome.is_accepted() {
                    outcome = InsertOutcome::RejectedNonNeutral(existing.fact_id.clone());
                }
            }
        }

        self.insertion_log.push(InsertionRecord {
            fact_id: candidate.fact_id.clone(),
            statement: candidate.statement.clone(),
            verdicts,
            outcome: outcome.clone(),
        });
        if outcome.is_accepted() {
            self.facts.push(candidate);
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::ScriptedJudge;
    use proptest::prelude::*;

    fn smoker_memory() -> AgentMemory {
        AgentMemory::from_facts([
            AtomicFact::record("Patient is 47 years old", "basic_information.age"),
            AtomicFact::record(
                "Patient is a former smoker who quit 2 years ago",
                "epidemiology.lifestyle_factor",
            ),
        ])
    }

    #[test]
    fn empty_memory_accepts() {
        let mut m = AgentMemory::default();
        let judge = ScriptedJudge::constant(TripletLabel::Contradict);
        let out = m
            .try_insert(AtomicFact::dialogue("Patient has a cat", 1), &judge)
            .unwrap();
        assert_eq!(out, InsertOutcome::Accepted);
        assert_eq!(m.len(), 1);
        assert_eq!(m.insertion_log().len(), 1);
        assert_eq!(judge.judge_calls(), 0);
    }

    #[test]
    fn contradiction_names_the_fact() {
        let mut m = smoker_memory();
        let smoker_id = m.facts()[1].fact_id.clone();
        let judge = ScriptedJudge::new(|premise, fact, _| {
            if premise.contains("never smoked") && fact.statement.contains("smoker") {
                TripletLabel::Contradict
            } else {
                TripletLabel::Neutral
            }
        });
        let out = m
            .try_insert(AtomicFact::dialogue("Patient has never smoked", 1), &judge)
            .unwrap();
        assert_eq!(out, InsertOutcome::RejectedContradiction(smoker_id));
        assert_eq!(m.len(), 2);
        assert_eq!(m.insertion_log()[0].verdicts.len(), 2);
    }

    #[test]
    fn all_neutral_grows_by_one() {
        let mut m = AgentMemory::from_facts(
            (0..5).map(|i| AtomicFact::record(format!("fact {i}"), "epidemiology.medical_history")),
        );
        let judge = ScriptedJudge::constant(TripletLabel::Neutral);
        let out = m
            .try_insert(AtomicFact::dialogue("Patient sleeps poorly", 2), &judge)
            .unwrap();
        assert!(out.is_accepted());
        assert_eq!(m.len(), 6);
        assert_eq!(m.insertion_log().len(), 1);
        assert_eq!(m.insertion_log()[0].verdicts.len(), 5);
        assert_eq!(judge.judge_calls(), 10);
    }

    #[test]
    fn entailed_candidate_is_not_duplicated() {
        let mut m = smoker_memory();
        let judge = ScriptedJudge::new(|premise, _, _| {
            if premise.contains("47") {
                TripletLabel::Entail
            } else {
                TripletLabel::Neutral
            }
        });
        let out = m
            .try_insert(AtomicFact::dialogue("Patient is 47", 1), &judge)
            .unwrap();
        assert_eq!(
            out,
            InsertOutcome::RejectedNonNeutral(m.facts()[0].fact_id.clone())
        );
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn reverse_contradiction_rejects() {
        let mut m = smoker_memory();
        let judge = ScriptedJudge::new(|premise, _, _| {
            if premise.contains("former smoker") {
                TripletLabel::Contradict
            } else {
                TripletLabel::Neutral
            }
        });
        let out = m
            .try_insert(
                AtomicFact::dialogue("Patient smokes a pack a day", 3),
                &judge,
            )
            .unwrap();
        assert!(matches!(out, InsertOutcome::RejectedContradiction(_)));
    }

    #[test]
    fn repeated_dialogue_fact_is_rejected() {
        let mut m = AgentMemory::default();
        let judge = ScriptedJudge::constant(TripletLabel::Neutral);
        assert!(m
            .try_insert(AtomicFact::dialogue("Patient has a dog", 1), &judge)
            .unwrap()
            .is_accepted());
        let again = m
            .try_insert(AtomicFact::dialogue("Patient has a dog", 4), &judge)
            .unwrap();
        assert!(matches!(again, InsertOutcome::RejectedNonNeutral(_)));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn record_fact_is_refused() {
        let mut m = AgentMemory::default();
        let judge = ScriptedJudge::constant(TripletLabel::Neutral);
        let err = m
            .try_insert(AtomicFact::record("x", "basic_information.name"), &judge)
            .unwrap_err();
        assert!(matches!(err, MemoryError::NotDialogueFact(_)));
    }

    #[test]
    fn hash_tracks_content() {
        let a = smoker_memory();
        let mut b = smoker_memory();
        assert_eq!(a.content_hash(), b.content_hash());
        b.try_insert(
            AtomicFact::dialogue("Patient has a dog", 1),
            &ScriptedJudge::constant(TripletLabel::Neutral),
        )
        .unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
    }

    fn hashed_label(premise: &str, hypothesis: &str, salt: u64) -> TripletLabel {
        let h = sha256_hex(&[premise, hypothesis, &salt.to_string()]);
        match u8::from_str_radix(&h[..2], 16).unwrap() % 3 {
            0 => TripletLabel::Entail,
            1 => TripletLabel::Neutral,
            _ => TripletLabel::Contradict,
        }
    }

    proptest! {
        #[test]
        fn monotonic_and_pairwise_safe(
            salt in any::<u64>(),
            candidates in proptest::collection::vec("[a-e]{1,3}", 1..15),
        ) {
            let judge = ScriptedJudge::new(move |p, f, _| hashed_label(p, &f.statement, salt));
            let mut m = AgentMemory::from_facts(
                (0..4).map(|i| AtomicFact::record(format!("r{i}"), "epidemiology.medical_history")),
            );
            for (turn, c) in candidates.iter().enumerate() {
                let before: Vec<AtomicFact> = m.facts().to_vec();
                m.try_insert(AtomicFact::dialogue(c, turn as u32), &judge).unwrap();
                prop_assert!(m.len() >= before.len());
                prop_assert_eq!(&m.facts()[..before.len()], &before[..]);
            }
            for d in m.facts().iter().filter(|f| f.origin == FactOrigin::Dialogue) {
                for other in m.facts().iter().filter(|o| o.fact_id != d.fact_id) {
                    prop_assert_ne!(judge.judge(&d.statement, other, None).unwrap(), TripletLabel::Contradict);
                    prop_assert_ne!(judge.judge(&other.statement, d, None).unwrap(), TripletLabel::Contradict);
                }
            }
        }
    }
}
