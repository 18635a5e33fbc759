use crate::gateway::{AskError, Gateway, Message, Purpose};
use crate::llm_text::single_line;
use crate::prompts::Prompts;

use super::{DialogueError, DialogueTurn, Speaker};

pub const DOCTOR_MAX_RETRIES: u32 = 2;

/// Who asks the questions in a simulated interview.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DoctorAgent {
    /// Fixed questions, asked in order.
    Scripted(Vec<String>),
    /// A model doctor asking this many questions per round.
    Llm { questions: usize },
}

impl DoctorAgent {
    pub fn question_count(&self) -> usize {
        match self {
            DoctorAgent::Scripted(q) => q.len(),
            DoctorAgent::Llm { questions } => *questions,
        }
    }
}

/// Keeps the first question of a reply, up to and including its `?`.
fn first_question(reply: &str) -> Result<String, String> {
    let text = single_line(reply.trim().trim_matches('"'));
    let end = text
        .find('?')
        .ok_or("reply must be a single question ending in '?'")?;
    let start = text[..end].rfind(['.', '!', ':']).map_or(0, |i| i + 1);
    let question = text[start..=end].trim().to_string();
    if question.len() < 2 {
        return Err("question is empty".into());
    }
    Ok(question)
}

/// Asks the model doctor for the next question. The doctor sees only the
/// transcript: its own questions as assistant turns, patient replies as user
/// turns.
pub fn llm_doctor_next_question(
    history: &[DialogueTurn],
    gateway: &Gateway,
    prompts: &Prompts,
) -> Result<String, DialogueError> {
    let mut messages = vec![Message::system(prompts.doctor.trim())];
    if history.is_empty() {
        messages.push(Message::user(
            "The patient has just sat down. Ask your opening question.",
        ));
    }
    for turn in history {
        messages.push(match turn.role {
            Speaker::Doctor => Message::assistant(turn.text.clone()),
            Speaker::Patient => Message::user(turn.text.clone()),
        });
    }
    if history.last().is_some_and(|t| t.role == Speaker::Doctor) {
        messages.push(Message::user(
            "(The patient did not answer.) Ask your next question.",
        ));
    }
    gateway
        .ask(
            Purpose::Doctor,
            messages,
            DOCTOR_MAX_RETRIES,
            first_question,
        )
        .map_err(|e| match e {
            AskError::Gateway(g) => DialogueError::Gateway(g),
            AskError::Unparseable {
                attempts,
                last_error,
            } => DialogueError::DoctorOutput {
                attempts,
                last_error,
            },
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Fixture, LogScope, Role};
    use crate::judge::VerdictSummary;

    fn patient(text: &str) -> DialogueTurn {
        DialogueTurn {
            role: Speaker::Patient,
            text: text.into(),
            attempts_used: 1,
            verdict_summary: VerdictSummary::default(),
            inserted_fact_ids: vec![],
            fallback: false,
        }
    }

    #[test]
    fn opening_question() {
        let gw = Gateway::replay(Fixture::new().with(Purpose::Doctor, "What brings you in today?"));
        let q = llm_doctor_next_question(&[], &gw, &Prompts::builtin()).unwrap();
        assert_eq!(q, "What brings you in today?");
    }

    #[test]
    fn follow_up_is_one_question() {
        let gw = Gateway::replay(Fixture::new().with(
            Purpose::Doctor,
            "I see. How long has the pain lasted? Is it constant?",
        ));
        let history = [
            DialogueTurn::doctor("What brings you in?"),
            patient("My stomach hurts."),
        ];
        let q = llm_doctor_next_question(&history, &gw, &Prompts::builtin()).unwrap();
        assert_eq!(q, "How long has the pain lasted?");
        let req = &gw.request_log(LogScope::All)[0];
        assert_eq!(req.messages.last().unwrap().role, Role::User);
        assert_eq!(req.messages.last().unwrap().content, "My stomach hurts.");
    }

    #[test]
    fn gateway_down() {
        let err =
            llm_doctor_next_question(&[], &Gateway::offline(), &Prompts::builtin()).unwrap_err();
        assert!(matches!(err, DialogueError::Gateway(_)));
    }

    #[test]
    fn non_question_is_retried() {
        let gw = Gateway::replay(
            Fixture::new()
                .with(Purpose::Doctor, "Thank you.")
                .with(Purpose::Doctor, "Any fever?"),
        );
        assert_eq!(
            llm_doctor_next_question(&[], &gw, &Prompts::builtin()).unwrap(),
            "Any fever?"
        );
    }
}
