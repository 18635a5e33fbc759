use serde::{Deserialize, Serialize};

use crate::dialogue::{ConversationStyle, DialogueTurn, Speaker};
use crate::gateway::{AskError, Gateway, Message, Purpose};
use crate::judge::{ClaimMode, TripletJudge, TripletLabel};
use crate::kb::DiseaseOutline;
use crate::llm_text::fill_template;
use crate::memory::{render, AgentMemory, AtomicFact, MemoryFormat};
use crate::pipeline::PatientRecord;
use crate::prompts::Prompts;

use super::{format_percent, MetricError};

pub const VERDICT_RETRIES: u32 = 2;
pub const RUBRIC_MIN: f64 = 1.0;
pub const RUBRIC_MAX: f64 = 7.0;

fn ask_err(e: AskError) -> MetricError {
    match e {
        AskError::Gateway(g) => MetricError::Gateway(g),
        AskError::Unparseable {
            attempts,
            last_error,
        } => MetricError::MalformedVerdict {
            attempts,
            last_error,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyVerdict {
    pub accurate: bool,
    pub rationale: String,
}

/// The verdict is the last ACCURATE/INACCURATE token in the reply.
fn parse_accuracy(reply: &str) -> Result<bool, String> {
    let upper = reply.to_ascii_uppercase();
    let words: Vec<&str> = upper
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .collect();
    match words
        .iter()
        .rev()
        .find(|w| **w == "ACCURATE" || **w == "INACCURATE")
    {
        Some(&"ACCURATE") => Ok(true),
        Some(_) => Ok(false),
        None => Err("the reply must end with ACCURATE or INACCURATE".into()),
    }
}

/// Stepwise judging of a record against its outline.
pub fn judge_record_accuracy(
    record: &PatientRecord,
    outline: &DiseaseOutline,
    gateway: &Gateway,
    prompts: &Prompts,
) -> Result<AccuracyVerdict, MetricError> {
    let outline_json = serde_json::to_string_pretty(outline).expect("outline serializes");
    let prompt = fill_template(
        &prompts.accuracy,
        &[("outline", &outline_json), ("record", &record.to_text())],
    );
    let mut rationale = String::new();
    let accurate = gateway
        .ask(
            Purpose::Evaluator,
            vec![Message::user(prompt)],
            VERDICT_RETRIES,
            |reply| {
                let v = parse_accuracy(reply)?;
                rationale = reply.trim().to_string();
                Ok(v)
            },
        )
        .map_err(ask_err)?;
    Ok(AccuracyVerdict {
        accurate,
        rationale,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub total: usize,
    pub accurate: usize,
}

impl AccuracySummary {
    pub fn from_verdicts<'a>(verdicts: impl IntoIterator<Item = &'a AccuracyVerdict>) -> Self {
        let mut s = Self::default();
        for v in verdicts {
            s.total += 1;
            s.accurate += usize::from(v.accurate);
        }
        s
    }

    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.accurate as f64 / self.total as f64
        }
    }

    pub fn percent(&self) -> String {
        format_percent(self.ratio())
    }
}

/// How fallback turns count toward dialogue consistency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackPolicy {
    /// Judge their claims like any other turn.
    #[default]
    Include,
    /// Leave them out entirely.
    Exclude,
    /// Count each as one claim that is not entailed.
    Penalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueScores {
    pub dialogue_consistency: f64,
    pub emotional_consistency: f64,
    pub conversational_fluency: f64,
    pub total_claims: usize,
    pub entailed_claims: usize,
    pub fallback_turns: usize,
}

impl DialogueScores {
    pub fn consistency_percent(&self) -> String {
        format_percent(self.dialogue_consistency)
    }
}

fn parse_score(reply: &str, min: f64, max: f64) -> Result<f64, String> {
    let upper = reply.to_ascii_uppercase();
    let idx = upper.rfind("SCORE").ok_or("expected SCORE: <number>")?;
    let rest =
        reply[idx + 5..].trim_start_matches(|c: char| c == ':' || c == '*' || c.is_whitespace());
    let num: String = rest
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    let value: f64 = num
        .trim_end_matches('.')
        .parse()
        .map_err(|_| format!("could not read a number after SCORE in {rest:?}"))?;
    if !(min..=max).contains(&value) {
        return Err(format!("score {value} outside {min}..={max}"));
    }
    Ok(value)
}

fn rubric(
    template: &str,
    style: ConversationStyle,
    transcript: &str,
    gateway: &Gateway,
) -> Result<f64, MetricError> {
    let prompt = fill_template(
        template,
        &[("style", style.as_str()), ("transcript", transcript)],
    );
    gateway
        .ask(
            Purpose::Evaluator,
            vec![Message::user(prompt)],
            VERDICT_RETRIES,
            |r| parse_score(r, RUBRIC_MIN, RUBRIC_MAX),
        )
        .map_err(ask_err)
}

/// Scores a transcript. Consistency is the fraction of the patient's
/// extracted claims that the initial memory entails; emotional consistency
/// and fluency come from 1-7 rubric prompts naming `style`.
pub fn judge_dialogue(
    transcript: &[DialogueTurn],
    initial_memory: &AgentMemory,
    style: ConversationStyle,
    judge: &dyn TripletJudge,
    gateway: &Gateway,
    prompts: &Prompts,
    policy: FallbackPolicy,
) -> Result<DialogueScores, MetricError> {
    if !transcript.iter().any(|t| t.role == Speaker::Patient) {
        return Err(MetricError::NoPatientTurns);
    }
    let premise = render(initial_memory, MemoryFormat::Atomic);
    let mut total = 0usize;
    let mut entailed = 0usize;
    let mut fallback_turns = 0usize;
    for turn in transcript.iter().filter(|t| t.role == Speaker::Patient) {
        if turn.fallback {
            fallback_turns += 1;
            match policy {
                FallbackPolicy::Exclude => continue,
                FallbackPolicy::Penalize => {
                    total += 1;
                    continue;
                }
                FallbackPolicy::Include => {}
            }
        }
        for claim in judge.extract_claims(&turn.text, ClaimMode::All)? {
            total += 1;
            let hypothesis = AtomicFact::dialogue(&claim, 0);
            if judge.judge(&premise, &hypothesis, None)? == TripletLabel::Entail {
                entailed += 1;
            }
        }
    }
    let dialogue_consistency = if total == 0 {
        1.0
    } else {
        entailed as f64 / total as f64
    };

    let text: String = transcript
        .iter()
        .map(|t| {
            format!(
                "{}: {}",
                if t.role == Speaker::Doctor {
                    "Doctor"
                } else {
                    "Patient"
                },
                t.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(DialogueScores {
        dialogue_consistency,
        emotional_consistency: rubric(&prompts.rubric_emotion, style, &text, gateway)?,
        conversational_fluency: rubric(&prompts.rubric_fluency, style, &text, gateway)?,
        total_claims: total,
        entailed_claims: entailed,
        fallback_turns,
    })
}

/// Model-rated similarity of two texts in [0, 1]. This is a judged score,
/// not an embedding metric.
pub fn semantic_similarity(
    a: &str,
    b: &str,
    gateway: &Gateway,
    prompts: &Prompts,
) -> Result<f64, MetricError> {
    let prompt = fill_template(&prompts.similarity, &[("a", a), ("b", b)]);
    gateway
        .ask(
            Purpose::Evaluator,
            vec![Message::user(prompt)],
            VERDICT_RETRIES,
            |r| parse_score(r, 0.0, 1.0),
        )
        .map_err(ask_err)
}
