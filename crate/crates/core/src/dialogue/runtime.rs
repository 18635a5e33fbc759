use std::collections::HashSet;
use std::sync::Arc;

use crate::gateway::{ChatRequest, Gateway, Message, Purpose};
use crate::judge::{evaluate_response, TripletJudge, VerdictSummary};
use crate::llm_text::fill_template;
use crate::memory::{decompose, render, AgentMemory, AtomicFact, InsertionRecord};
use crate::metrics::tokenize;
use crate::pipeline::{validate_structure, PatientRecord};
use crate::prompts::Prompts;
use crate::store::{SessionStore, INSERTION_LOG_FILE, MEMORY_FILE, TRANSCRIPT_FILE};

use super::{
    llm_doctor_next_question, ConversationStyle, DialogueError, DialogueTurn, DoctorAgent, Session,
    SessionConfig, Speaker, Transcript, EMPTY_FALLBACK_TEXT,
};

const FALLBACK_FACTS: usize = 3;

/// Result of a multi-round run: one session per round, all sharing the
/// memory carried forward from the previous round.
#[derive(Debug, Clone)]
pub struct CrossDialogue {
    pub sessions: Vec<Session>,
    /// Memory hash at the start of each round.
    pub round_initial_hashes: Vec<String>,
}

impl CrossDialogue {
    pub fn transcripts(&self) -> Vec<&Transcript> {
        self.sessions.iter().map(|s| &s.transcript).collect()
    }

    pub fn patient_turns(&self) -> usize {
        self.sessions
            .iter()
            .map(|s| s.patient_turns().count())
            .sum()
    }

    pub fn final_memory(&self) -> Option<&AgentMemory> {
        self.sessions.last().map(|s| &s.memory)
    }
}

pub struct DialogueRuntime {
    gateway: Gateway,
    judge: Arc<dyn TripletJudge>,
    prompts: Arc<Prompts>,
    store: Option<SessionStore>,
}

enum Failure {
    Contradiction { reply: String, fact: String },
    Empty,
}

impl DialogueRuntime {
    pub fn new(gateway: Gateway, judge: Arc<dyn TripletJudge>, prompts: Arc<Prompts>) -> Self {
        Self {
            gateway,
            judge,
            prompts,
            store: None,
        }
    }

    /// Persists sessions, memory, transcripts and insertion logs under `store`.
    pub fn with_store(mut self, store: SessionStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn judge(&self) -> &dyn TripletJudge {
        self.judge.as_ref()
    }

    pub fn prompts(&self) -> &Prompts {
        &self.prompts
    }

    pub fn store(&self) -> Option<&SessionStore> {
        self.store.as_ref()
    }

    /// Validates the record, decomposes it into memory and starts a session.
    pub fn open_session(
        &self,
        record: &PatientRecord,
        style: ConversationStyle,
        config: SessionConfig,
    ) -> Result<Session, DialogueError> {
        let report = validate_structure(record);
        if !report.is_valid() {
            return Err(DialogueError::InvalidRecord(report));
        }
        let memory = decompose(record, &self.gateway, &self.prompts)?;
        self.open_with_memory(&record.record_id, memory, style, config)
    }

    /// Starts a session over an existing memory (later cross-dialogue rounds).
    pub fn open_with_memory(
        &self,
        record_ref: &str,
        memory: AgentMemory,
        style: ConversationStyle,
        config: SessionConfig,
    ) -> Result<Session, DialogueError> {
        let session = Session::new(record_ref, memory, style, config);
        if let Some(store) = &self.store {
            session.persist_new(store)?;
        }
        Ok(session)
    }

    pub fn close_session(&self, session: &mut Session) -> Result<(), DialogueError> {
        session.closed = true;
        if let Some(store) = &self.store {
            store.save_meta(&session.session_id, &session.meta())?;
        }
        Ok(())
    }

    fn push_turn(&self, session: &mut Session, turn: DialogueTurn) -> Result<(), DialogueError> {
        if let Some(store) = &self.store {
            store.append(&session.session_id, TRANSCRIPT_FILE, &turn)?;
        }
        session.transcript.push(turn);
        Ok(())
    }

    fn patient_messages(&self, session: &Session, failure: Option<&Failure>) -> Vec<Message> {
        let system = fill_template(
            &self.prompts.patient,
            &[
                (
                    "memory",
                    &render(&session.memory, session.config.memory_format),
                ),
                ("style", session.style.as_str()),
                (
                    "style_instructions",
                    session.style.instructions(&self.prompts).trim(),
                ),
            ],
        );
        let mut messages = vec![Message::system(system)];
        for turn in &session.transcript {
            messages.push(match turn.role {
                Speaker::Doctor => Message::user(turn.text.clone()),
                Speaker::Patient => Message::assistant(turn.text.clone()),
            });
        }
        match failure {
            Some(Failure::Contradiction { reply, fact }) => {
                messages.push(Message::assistant(reply.clone()));
                messages.push(Message::user(fill_template(
                    &self.prompts.regenerate,
                    &[("previous", reply), ("fact", fact)],
                )));
            }
            Some(Failure::Empty) => {
                messages.push(Message::user(
                    "Your reply was empty. Answer the doctor's question.",
                ));
            }
            None => {}
        }
        messages
    }

    /// Up to three memory facts sharing the most words with the question;
    /// the first fact when none overlap.
    fn fallback_text(memory: &AgentMemory, question: &str) -> String {
        let q: HashSet<String> = tokenize(question)
            .into_iter()
            .filter(|t| t.len() > 2)
            .collect();
        let mut scored: Vec<(usize, &AtomicFact)> = memory
            .facts()
            .iter()
            .map(|f| {
                (
                    tokenize(&f.statement)
                        .iter()
                        .filter(|t| q.contains(*t))
                        .count(),
                    f,
                )
            })
            .filter(|(score, _)| *score > 0)
            .collect();
        scored.sort_by_key(|s| std::cmp::Reverse(s.0));
        let mut chosen: Vec<&AtomicFact> = scored
            .into_iter()
            .take(FALLBACK_FACTS)
            .map(|(_, f)| f)
            .collect();
        if chosen.is_empty() {
            chosen.extend(memory.facts().first());
        }
        if chosen.is_empty() {
            return EMPTY_FALLBACK_TEXT.to_string();
        }
        chosen
            .iter()
            .map(|f| {
                let s = f.statement.trim();
                if s.ends_with(['.', '!', '?']) {
                    s.to_string()
                } else {
                    format!("{s}.")
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One doctor message and the validated patient reply.
    ///
    /// Candidates contradicting any memory fact are regenerated with the
    /// violated fact as feedback. After `max_attempts` failures the turn is a
    /// restatement of memory facts, marked `fallback`.
    pub fn patient_reply(
        &self,
        session: &mut Session,
        doctor_message: &str,
    ) -> Result<DialogueTurn, DialogueError> {
        if session.closed {
            return Err(DialogueError::SessionClosed(session.session_id.clone()));
        }
        let doctor_message = doctor_message.trim();
        if doctor_message.is_empty() {
            return Err(DialogueError::EmptyMessage);
        }
        self.push_turn(session, DialogueTurn::doctor(doctor_message))?;
        let turn_index = session.patient_turns().count() as u32 + 1;
        let max_attempts = session.config.max_attempts.max(1);

        let mut failure: Option<Failure> = None;
        for attempt in 1..=max_attempts {
            let request = ChatRequest::new(
                Purpose::Patient,
                self.patient_messages(session, failure.as_ref()),
            );
            let candidate = self.gateway.chat(request)?.trim().to_string();
            if candidate.is_empty() {
                failure = Some(Failure::Empty);
                continue;
            }
            let report = evaluate_response(
                &candidate,
                &session.memory,
                self.judge.as_ref(),
                Some(doctor_message),
            )?;
            if let Some(fact_id) = &report.first_contradiction {
                let fact = session
                    .memory
                    .get(fact_id)
                    .map(|f| f.statement.clone())
                    .unwrap_or_default();
                tracing::debug!(attempt, %fact_id, "patient reply contradicts memory; regenerating");
                failure = Some(Failure::Contradiction {
                    reply: candidate,
                    fact,
                });
                continue;
            }

            let mut inserted = Vec::new();
            if session.config.memory_update_enabled {
                for claim in &report.neutral_novel_claims {
                    let fact = AtomicFact::dialogue(claim, turn_index);
                    if fact.statement.is_empty() {
                        continue;
                    }
                    let outcome = session
                        .memory
                        .try_insert(fact.clone(), self.judge.as_ref())?;
                    if let Some(store) = &self.store {
                        let entry: &InsertionRecord = session
                            .memory
                            .insertion_log()
                            .last()
                            .expect("insert always logs");
                        store.append(&session.session_id, INSERTION_LOG_FILE, entry)?;
                        if outcome.is_accepted() {
                            store.append(&session.session_id, MEMORY_FILE, &fact)?;
                        }
                    }
                    if outcome.is_accepted() {
                        inserted.push(fact.fact_id);
                    }
                }
            }

            let turn = DialogueTurn {
                role: Speaker::Patient,
                text: candidate,
                attempts_used: attempt,
                verdict_summary: report.summary(),
                inserted_fact_ids: inserted,
                fallback: false,
            };
            self.push_turn(session, turn.clone())?;
            return Ok(turn);
        }

        let turn = DialogueTurn {
            role: Speaker::Patient,
            text: Self::fallback_text(&session.memory, doctor_message),
            attempts_used: max_attempts,
            verdict_summary: VerdictSummary::default(),
            inserted_fact_ids: Vec::new(),
            fallback: true,
        };
        self.push_turn(session, turn.clone())?;
        Ok(turn)
    }

    /// Asks each question in order. On failure the turns so far stay in the
    /// session (and on disk) and the error is returned.
    pub fn run_scripted_interview(
        &self,
        session: &mut Session,
        questions: &[String],
    ) -> Result<Transcript, DialogueError> {
        if questions.is_empty() {
            return Err(DialogueError::NoQuestions);
        }
        for q in questions {
            self.patient_reply(session, q)?;
        }
        Ok(session.transcript.clone())
    }

    pub fn run_interview(
        &self,
        session: &mut Session,
        doctor: &DoctorAgent,
    ) -> Result<Transcript, DialogueError> {
        match doctor {
            DoctorAgent::Scripted(questions) => self.run_scripted_interview(session, questions),
            DoctorAgent::Llm { questions } => {
                if *questions == 0 {
                    return Err(DialogueError::NoQuestions);
                }
                for _ in 0..*questions {
                    let q = llm_doctor_next_question(
                        &session.transcript,
                        &self.gateway,
                        &self.prompts,
                    )?;
                    self.patient_reply(session, &q)?;
                }
                Ok(session.transcript.clone())
            }
        }
    }

    /// `rounds` interviews of the same patient. Round 1 starts from the
    /// decomposed record; each later round is a fresh session starting from
    /// the memory the previous round ended with. `rounds = 1` is a single
    /// dialogue.
    pub fn run_cross_dialogue(
        &self,
        record: &PatientRecord,
        style: ConversationStyle,
        rounds: usize,
        doctor: &DoctorAgent,
        config: SessionConfig,
    ) -> Result<CrossDialogue, DialogueError> {
        if rounds == 0 {
            return Err(DialogueError::NoRounds);
        }
        let mut result = CrossDialogue {
            sessions: Vec::new(),
            round_initial_hashes: Vec::new(),
        };
        let mut session = self.open_session(record, style, config)?;
        for round in 0..rounds {
            if round > 0 {
                let carried = session.memory.clone();
                session = self.open_with_memory(&record.record_id, carried, style, config)?;
            }
            result
                .round_initial_hashes
                .push(session.memory.content_hash());
            self.run_interview(&mut session, doctor)?;
            result.sessions.push(session.clone());
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Fixture, LogScope};
    use crate::judge::{ScriptedJudge, TripletLabel};
    use crate::memory::fallback_decompose;
    use crate::samples::pancreatitis_record;

    /// Patient replies are "Fine."; decomposition falls back offline.
    fn fine() -> Gateway {
        Gateway::scripted(|req| match req.purpose {
            Purpose::Patient => Ok("Fine.".into()),
            purpose => Err(crate::gateway::GatewayError::FixtureMiss { purpose }),
        })
    }

    fn runtime(gateway: Gateway, judge: ScriptedJudge) -> DialogueRuntime {
        DialogueRuntime::new(gateway, Arc::new(judge), Arc::new(Prompts::builtin()))
    }

    fn session(rt: &DialogueRuntime, config: SessionConfig) -> Session {
        let record = pancreatitis_record();
        rt.open_with_memory(
            &record.record_id,
            fallback_decompose(&record),
            ConversationStyle::Plain,
            config,
        )
        .unwrap()
    }

    #[test]
    fn open_session_from_record() {
        let rt = runtime(
            Gateway::offline(),
            ScriptedJudge::constant(TripletLabel::Entail),
        );
        let a = rt
            .open_session(
                &pancreatitis_record(),
                ConversationStyle::Reserved,
                SessionConfig::default(),
            )
            .unwrap();
        let b = rt
            .open_session(
                &pancreatitis_record(),
                ConversationStyle::Reserved,
                SessionConfig::default(),
            )
            .unwrap();
        assert!(!a.memory.is_empty());
        assert!(a.transcript.is_empty());
        assert_ne!(a.session_id, b.session_id);
        assert_eq!(a.memory, b.memory);
    }

    #[test]
    fn invalid_record_is_refused() {
        let rt = runtime(
            Gateway::offline(),
            ScriptedJudge::constant(TripletLabel::Entail),
        );
        let mut record = pancreatitis_record();
        record.epidemiology.family_history = String::new();
        let err = rt
            .open_session(&record, ConversationStyle::Plain, SessionConfig::default())
            .unwrap_err();
        assert!(matches!(err, DialogueError::InvalidRecord(_)));
    }

    #[test]
    fn second_attempt_passes() {
        let gw = Gateway::replay(
            Fixture::new()
                .with(Purpose::Patient, "I have never had stomach pain.")
                .with(Purpose::Patient, "The pain started ten days ago."),
        );
        let judge = ScriptedJudge::new(|premise, fact, _| {
            if premise.contains("never") && fact.source_path == "disease_information.symptoms" {
                TripletLabel::Contradict
            } else {
                TripletLabel::Entail
            }
        });
        let rt = runtime(gw.clone(), judge);
        let mut s = session(&rt, SessionConfig::default());
        let turn = rt
            .patient_reply(&mut s, "When did the pain start?")
            .unwrap();
        assert_eq!(turn.attempts_used, 2);
        assert!(turn.inserted_fact_ids.is_empty());
        assert_eq!(turn.verdict_summary.contradict, 0);
        let log = gw.request_log(LogScope::All);
        assert_eq!(
            log.iter().filter(|r| r.purpose == Purpose::Patient).count(),
            2
        );
        assert!(log[1]
            .full_text()
            .contains("It contradicts this fact about you: \"Symptoms: Acute abdominal pain\""));
    }

    #[test]
    fn neutral_claim_is_inserted() {
        let gw = Gateway::replay(
            Fixture::new().with(Purpose::Patient, "I also get headaches at night."),
        );
        let judge = ScriptedJudge::constant(TripletLabel::Neutral)
            .with_claims(|_, _| vec!["Patient experiences headaches at night".into()]);
        let rt = runtime(gw, judge);
        let mut s = session(&rt, SessionConfig::default());
        let before = s.memory.len();
        let turn = rt.patient_reply(&mut s, "Anything else?").unwrap();
        assert_eq!(turn.inserted_fact_ids.len(), 1);
        assert_eq!(s.memory.len(), before + 1);
        assert_eq!(s.memory.facts().last().unwrap().turn_index, 1);
    }

    #[test]
    fn disabled_updates_keep_memory() {
        let gw = Gateway::scripted(|_| Ok("I also get headaches at night.".into()));
        let judge = ScriptedJudge::constant(TripletLabel::Neutral)
            .with_claims(|_, _| vec!["Patient has headaches".into()]);
        let rt = runtime(gw, judge);
        let mut s = session(
            &rt,
            SessionConfig {
                memory_update_enabled: false,
                ..SessionConfig::default()
            },
        );
        let hash = s.memory.content_hash();
        rt.run_scripted_interview(&mut s, &crate::dialogue::default_question_bank())
            .unwrap();
        assert_eq!(s.memory.content_hash(), hash);
    }

    #[test]
    fn always_contradict_falls_back() {
        let gw = Gateway::scripted(|_| Ok("I have never been ill.".into()));
        let rt = runtime(gw, ScriptedJudge::constant(TripletLabel::Contradict));
        let mut s = session(
            &rt,
            SessionConfig {
                max_attempts: 4,
                ..SessionConfig::default()
            },
        );
        let before = s.memory.len();
        let turn = rt
            .patient_reply(&mut s, "What is your medical history?")
            .unwrap();
        assert!(turn.fallback);
        assert_eq!(turn.attempts_used, 4);
        assert!(turn.inserted_fact_ids.is_empty());
        assert_eq!(s.memory.len(), before);
        assert!(turn.text.contains("Medical History:"));
        assert!(s
            .transcript
            .iter()
            .all(|t| t.verdict_summary.contradict == 0));
    }

    #[test]
    fn empty_memory_fallback_text() {
        assert_eq!(
            DialogueRuntime::fallback_text(&AgentMemory::default(), "How are you?"),
            EMPTY_FALLBACK_TEXT
        );
    }

    #[test]
    fn style_is_in_every_patient_prompt() {
        let gw = Gateway::scripted(|_| Ok("Fine.".into()));
        let rt = runtime(
            gw.clone(),
            ScriptedJudge::sequence([TripletLabel::Contradict]),
        );
        let record = pancreatitis_record();
        for style in ConversationStyle::ALL {
            let mut s = rt
                .open_with_memory(
                    &record.record_id,
                    fallback_decompose(&record),
                    style,
                    SessionConfig::default(),
                )
                .unwrap();
            rt.patient_reply(&mut s, "How are you?").unwrap();
            let scope = gw.request_log(LogScope::All);
            let last_patient = scope
                .iter()
                .rev()
                .find(|r| r.purpose == Purpose::Patient)
                .unwrap();
            assert!(last_patient
                .full_text()
                .contains(&format!("Conversational style: {style}")));
        }
        for r in gw
            .request_log(LogScope::All)
            .iter()
            .filter(|r| r.purpose == Purpose::Patient)
        {
            assert!(r.full_text().contains("Conversational style: "));
        }
    }

    #[test]
    fn closed_session_refuses() {
        let rt = runtime(
            Gateway::offline(),
            ScriptedJudge::constant(TripletLabel::Entail),
        );
        let mut s = session(&rt, SessionConfig::default());
        rt.close_session(&mut s).unwrap();
        assert!(matches!(
            rt.patient_reply(&mut s, "Hi?"),
            Err(DialogueError::SessionClosed(_))
        ));
        assert!(matches!(
            rt.patient_reply(&mut session(&rt, SessionConfig::default()), "  "),
            Err(DialogueError::EmptyMessage)
        ));
    }

    #[test]
    fn one_question_two_turns() {
        let rt = runtime(
            Gateway::scripted(|_| Ok("Fine.".into())),
            ScriptedJudge::constant(TripletLabel::Entail),
        );
        let mut s = session(&rt, SessionConfig::default());
        let t = rt
            .run_scripted_interview(&mut s, &["How are you?".to_string()])
            .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].role, Speaker::Doctor);
        assert_eq!(t[0].attempts_used, 0);
        assert!(matches!(
            rt.run_scripted_interview(&mut s, &[]),
            Err(DialogueError::NoQuestions)
        ));
    }

    #[test]
    fn failure_preserves_partial_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path());
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let gw = Gateway::scripted(move |_| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 6 {
                Err(crate::gateway::GatewayError::Provider("injected".into()))
            } else {
                Ok("Fine.".into())
            }
        });
        let rt =
            runtime(gw, ScriptedJudge::constant(TripletLabel::Entail)).with_store(store.clone());
        let mut s = session(&rt, SessionConfig::default());
        let err = rt
            .run_scripted_interview(&mut s, &crate::dialogue::default_question_bank())
            .unwrap_err();
        assert!(matches!(err, DialogueError::Gateway(_)));
        assert_eq!(s.transcript.len(), 13);
        let loaded = Session::load(&store, &s.session_id).unwrap();
        assert_eq!(loaded.transcript.len(), 13);
        assert_eq!(
            loaded
                .transcript
                .iter()
                .filter(|t| t.role == Speaker::Doctor)
                .count(),
            7
        );
        assert_eq!(loaded.memory, s.memory);
    }

    #[test]
    fn cross_dialogue_shape() {
        let rt = runtime(
            fine(),
            ScriptedJudge::constant(TripletLabel::Neutral)
                .with_claims(|r, _| vec![format!("Patient said {}", r.len())]),
        );
        let bank = crate::dialogue::default_question_bank();
        let on = rt
            .run_cross_dialogue(
                &pancreatitis_record(),
                ConversationStyle::Plain,
                2,
                &DoctorAgent::Scripted(bank.clone()),
                SessionConfig::default(),
            )
            .unwrap();
        assert_eq!(on.sessions.len(), 2);
        assert_eq!(on.patient_turns(), 26);
        assert_ne!(on.sessions[0].session_id, on.sessions[1].session_id);
        assert_eq!(on.sessions[1].memory.len(), on.sessions[0].memory.len());

        let off = rt
            .run_cross_dialogue(
                &pancreatitis_record(),
                ConversationStyle::Plain,
                2,
                &DoctorAgent::Scripted(bank),
                SessionConfig {
                    memory_update_enabled: false,
                    ..SessionConfig::default()
                },
            )
            .unwrap();
        assert_eq!(off.round_initial_hashes[0], off.round_initial_hashes[1]);
        assert!(matches!(
            rt.run_cross_dialogue(
                &pancreatitis_record(),
                ConversationStyle::Plain,
                0,
                &DoctorAgent::Llm { questions: 1 },
                SessionConfig::default()
            ),
            Err(DialogueError::NoRounds)
        ));
    }

    #[test]
    fn round_two_starts_with_inserted_facts() {
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let judge = ScriptedJudge::constant(TripletLabel::Neutral).with_claims(move |_, _| {
            let n = counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if n < 2 {
                vec![format!("Patient has new detail {n}")]
            } else {
                Vec::new()
            }
        });
        let rt = runtime(fine(), judge);
        let bank = crate::dialogue::default_question_bank();
        let run = rt
            .run_cross_dialogue(
                &pancreatitis_record(),
                ConversationStyle::Plain,
                2,
                &DoctorAgent::Scripted(bank),
                SessionConfig::default(),
            )
            .unwrap();
        let initial = fallback_decompose(&pancreatitis_record()).len();
        let round2 = &run.sessions[1];
        let round2_start = round2.memory.len()
            - round2
                .patient_turns()
                .map(|t| t.inserted_fact_ids.len())
                .sum::<usize>();
        assert_eq!(round2_start, initial + 2);
        assert_ne!(run.round_initial_hashes[0], run.round_initial_hashes[1]);
    }

    #[test]
    fn doctor_never_sees_memory() {
        let gw = Gateway::scripted(|req| {
            Ok(match req.purpose {
                Purpose::Doctor => "How are you feeling today?".into(),
                _ => "I feel tired.".into(),
            })
        });
        let rt = runtime(gw.clone(), ScriptedJudge::constant(TripletLabel::Entail));
        let mut s = session(&rt, SessionConfig::default());
        rt.run_interview(&mut s, &DoctorAgent::Llm { questions: 4 })
            .unwrap();
        let spoken: String = s
            .transcript
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        for req in gw
            .request_log(LogScope::All)
            .iter()
            .filter(|r| r.purpose == Purpose::Doctor)
        {
            let text = req.full_text();
            for fact in s.memory.facts() {
                if !spoken.contains(&fact.statement) {
                    assert!(
                        !text.contains(&fact.statement),
                        "doctor prompt leaked {:?}",
                        fact.statement
                    );
                }
            }
        }
    }
}
