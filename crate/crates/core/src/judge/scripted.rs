use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::memory::AtomicFact;

use super::{ClaimMode, JudgeError, TripletJudge, TripletLabel};

type VerdictFn =
    dyn Fn(&str, &AtomicFact, Option<&str>) -> Result<TripletLabel, JudgeError> + Send + Sync;
type ClaimFn = dyn Fn(&str, ClaimMode) -> Vec<String> + Send + Sync;

/// Deterministic judge driven by closures. Counts its calls.
pub struct ScriptedJudge {
    verdict: Box<VerdictFn>,
    claims: Box<ClaimFn>,
    judge_calls: AtomicUsize,
    extract_calls: AtomicUsize,
}

impl ScriptedJudge {
    pub fn new(
        verdict: impl Fn(&str, &AtomicFact, Option<&str>) -> TripletLabel + Send + Sync + 'static,
    ) -> Self {
        Self::fallible(move |p, f, c| Ok(verdict(p, f, c)))
    }

    pub fn fallible(
        verdict: impl Fn(&str, &AtomicFact, Option<&str>) -> Result<TripletLabel, JudgeError>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        Self {
            verdict: Box::new(verdict),
            claims: Box::new(|_, _| Vec::new()),
            judge_calls: AtomicUsize::new(0),
            extract_calls: AtomicUsize::new(0),
        }
    }

    pub fn constant(label: TripletLabel) -> Self {
        Self::new(move |_, _, _| label)
    }

    /// Returns the labels in order, then Neutral once exhausted.
    pub fn sequence(labels: impl IntoIterator<Item = TripletLabel>) -> Self {
        let queue = Mutex::new(labels.into_iter().collect::<VecDeque<_>>());
        Self::new(move |_, _, _| {
            queue
                .lock()
                .expect("sequence poisoned")
                .pop_front()
                .unwrap_or(TripletLabel::Neutral)
        })
    }

    pub fn with_claims(
        mut self,
        claims: impl Fn(&str, ClaimMode) -> Vec<String> + Send + Sync + 'static,
    ) -> Self {
        self.claims = Box::new(claims);
        self
    }

    pub fn judge_calls(&self) -> usize {
        self.judge_calls.load(Ordering::SeqCst)
    }

    pub fn extract_calls(&self) -> usize {
        self.extract_calls.load(Ordering::SeqCst)
    }
}

impl TripletJudge for ScriptedJudge {
    fn judge(
        &self,
        premise: &str,
        hypothesis: &AtomicFact,
        context: Option<&str>,
    ) -> Result<TripletLabel, JudgeError> {
        self.judge_calls.fetch_add(1, Ordering::SeqCst);
        (self.verdict)(premise, hypothesis, context)
    }

    fn extract_claims(&self, response: &str, mode: ClaimMode) -> Result<Vec<String>, JudgeError> {
        self.extract_calls.fetch_add(1, Ordering::SeqCst);
        Ok((self.claims)(response, mode))
    }
}
