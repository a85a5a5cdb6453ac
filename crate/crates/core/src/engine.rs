//! The adaptive session loop and the full-bank baseline administration.
//!
//! Each cycle is answer, re-estimate, check the stopping rule, then select;
//! the SE the rule sees is always the SE of the reported estimate.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::estimation::{AbilityEstimate, EstimationError, LikelihoodTable, LogLikelihood, QuadratureGrid};
use crate::item::ItemBank;
use crate::respond::{AnswerOutcome, Respondent, RespondentError};
use crate::selection::{first_item, select_next, Administered, InfoIndex, SelectionStrategy};
use crate::stopping::{should_stop, RuleError, StopDecision, StopReason, StoppingRule};

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub strategy: SelectionStrategy,
    pub rule: StoppingRule,
    pub grid: QuadratureGrid,
    pub seed: u64,
}

/// One administered item with everything the respondent reported.
#[derive(Debug, Clone, PartialEq)]
pub struct AdministeredItem {
    pub bank_index: usize,
    pub item_id: String,
    pub outcome: AnswerOutcome,
}

impl AdministeredItem {
    pub fn correct(&self) -> bool {
        self.outcome.correct
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub final_estimate: AbilityEstimate,
    pub administered: Vec<AdministeredItem>,
    /// Estimate after each response, in administration order.
    pub trace: Vec<AbilityEstimate>,
    pub stop_reason: StopReason,
    pub converged: bool,
    pub accuracy: f64,
    pub tokens_prompt: u64,
    pub tokens_completion: u64,
    /// Sum of per-item respondent latencies, seconds.
    pub time_total: f64,
}

impl SessionResult {
    pub fn length(&self) -> usize {
        self.administered.len()
    }

    pub fn tokens_total(&self) -> u64 {
        self.tokens_prompt + self.tokens_completion
    }

    pub fn n_correct(&self) -> usize {
        self.administered.iter().filter(|a| a.correct()).count()
    }
}

/// What a session had done when it failed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartialTranscript {
    pub administered: Vec<AdministeredItem>,
    pub trace: Vec<AbilityEstimate>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("respondent failed after {} items: {source}", .partial.administered.len())]
    Respondent {
        source: RespondentError,
        partial: Box<PartialTranscript>,
    },
    #[error("estimation failed after {} items: {source}", .partial.administered.len())]
    Estimation {
        source: EstimationError,
        partial: Box<PartialTranscript>,
    },
    #[error("session observer failed: {0}")]
    Observer(String),
}

impl SessionError {
    pub fn partial(&self) -> Option<&PartialTranscript> {
        match self {
            SessionError::Respondent { partial, .. } | SessionError::Estimation { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Per-item hook, e.g. for append-only session logs.
pub trait SessionObserver {
    fn on_response(&mut self, seq: usize, item: &AdministeredItem, estimate: &AbilityEstimate) -> Result<(), String>;
}

/// Observer that records nothing.
pub struct NoObserver;

impl SessionObserver for NoObserver {
    fn on_response(&mut self, _: usize, _: &AdministeredItem, _: &AbilityEstimate) -> Result<(), String> {
        Ok(())
    }
}

/// A bank prepared for repeated sessions on one grid.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    bank: &'a ItemBank,
    grid: QuadratureGrid,
    table: LikelihoodTable,
    info: InfoIndex,
}

struct Transcript {
    ll: LogLikelihood,
    used: Administered,
    administered: Vec<AdministeredItem>,
    trace: Vec<AbilityEstimate>,
}

impl Transcript {
    fn partial(&self) -> Box<PartialTranscript> {
        Box::new(PartialTranscript {
            administered: self.administered.clone(),
            trace: self.trace.clone(),
        })
    }
}

impl<'a> Engine<'a> {
    pub fn new(bank: &'a ItemBank, grid: QuadratureGrid) -> Self {
        let table = LikelihoodTable::new(bank.items(), &grid);
        let info = InfoIndex::new(bank);
        Self {
            bank,
            grid,
            table,
            info,
        }
    }

    pub fn bank(&self) -> &'a ItemBank {
        self.bank
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    fn start(&self) -> Transcript {
        Transcript {
            ll: LogLikelihood::new(&self.grid),
            used: Administered::new(self.bank.len()),
            administered: Vec::new(),
            trace: Vec::new(),
        }
    }

    /// Asks one item and folds the response into the transcript.
    fn ask<R: Respondent + ?Sized, O: SessionObserver + ?Sized>(
        &self,
        t: &mut Transcript,
        index: usize,
        respondent: &mut R,
        observer: &mut O,
        estimate_now: bool,
    ) -> Result<(), SessionError> {
        let item = self.bank.get(index);
        let outcome = respondent.answer(item).map_err(|source| SessionError::Respondent {
            source,
            partial: t.partial(),
        })?;
        t.used.insert(index);
        t.ll.add_from_table(&self.table, index, outcome.correct);
        t.administered.push(AdministeredItem {
            bank_index: index,
            item_id: item.id.clone(),
            outcome,
        });
        if estimate_now {
            let est = t.ll.estimate(&self.grid).map_err(|source| SessionError::Estimation {
                source,
                partial: t.partial(),
            })?;
            t.trace.push(est);
            let seq = t.administered.len();
            observer
                .on_response(seq, &t.administered[seq - 1], &est)
                .map_err(SessionError::Observer)?;
        }
        Ok(())
    }

    pub fn run_cat_session<R: Respondent + ?Sized>(
        &self,
        respondent: &mut R,
        strategy: SelectionStrategy,
        rule: &StoppingRule,
        seed: u64,
    ) -> Result<SessionResult, SessionError> {
        self.run_cat_session_observed(respondent, strategy, rule, seed, &mut NoObserver)
    }

    pub fn run_cat_session_observed<R: Respondent + ?Sized, O: SessionObserver + ?Sized>(
        &self,
        respondent: &mut R,
        strategy: SelectionStrategy,
        rule: &StoppingRule,
        seed: u64,
        observer: &mut O,
    ) -> Result<SessionResult, SessionError> {
        rule.check_feasible(self.bank.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = self.start();
        let mut next = first_item(self.bank, &mut rng).expect("bank is non-empty");
        let reason = loop {
            self.ask(&mut t, next, respondent, observer, true)?;
            let est = *t.trace.last().expect("estimate recorded");
            if let StopDecision::Stop(reason) = should_stop(t.administered.len(), est.se, rule) {
                break reason;
            }
            if t.used.remaining() == 0 {
                break StopReason::BankExhausted;
            }
            next = match strategy {
                SelectionStrategy::MaxInfo => self.info.argmax(&t.used, est.theta()),
                SelectionStrategy::Random => select_next(self.bank, &t.used, est.theta(), strategy, &mut rng).ok(),
            }
            .expect("pool has unused items");
        };
        let converged = matches!(reason, StopReason::FixedLength | StopReason::Precision);
        Ok(finish(t, reason, converged))
    }

    /// Every item in bank order, then one estimate over the full response vector.
    pub fn run_full_bank<R: Respondent + ?Sized>(&self, respondent: &mut R) -> Result<SessionResult, SessionError> {
        self.run_full_bank_observed(respondent, &mut NoObserver)
    }

    /// Like [`Engine::run_full_bank`], but also records the running estimate
    /// after every item and reports each one to `observer`.
    pub fn run_full_bank_observed<R: Respondent + ?Sized, O: SessionObserver + ?Sized>(
        &self,
        respondent: &mut R,
        observer: &mut O,
    ) -> Result<SessionResult, SessionError> {
        let mut t = self.start();
        for index in 0..self.bank.len() {
            self.ask(&mut t, index, respondent, observer, true)?;
        }
        Ok(finish(t, StopReason::FixedLength, true))
    }

    /// Full-bank administration without the per-item trace; only the final
    /// estimate is computed. Used by the simulation study.
    pub fn full_bank_estimate<R: Respondent + ?Sized>(
        &self,
        respondent: &mut R,
    ) -> Result<(AbilityEstimate, usize), SessionError> {
        let mut t = self.start();
        for index in 0..self.bank.len() {
            self.ask(&mut t, index, respondent, &mut NoObserver, false)?;
        }
        let est = t.ll.estimate(&self.grid).map_err(|source| SessionError::Estimation {
            source,
            partial: t.partial(),
        })?;
        let correct = t.administered.iter().filter(|a| a.correct()).count();
        Ok((est, correct))
    }
}

fn finish(t: Transcript, stop_reason: StopReason, converged: bool) -> SessionResult {
    let n = t.administered.len();
    let final_estimate = *t.trace.last().expect("at least one item administered");
    let correct = t.administered.iter().filter(|a| a.correct()).count();
    let (mut tp, mut tc, mut time) = (0u64, 0u64, 0.0f64);
    for a in &t.administered {
        tp += a.outcome.tokens_prompt;
        tc += a.outcome.tokens_completion;
        time += a.outcome.latency_s;
    }
    SessionResult {
        final_estimate,
        administered: t.administered,
        trace: t.trace,
        stop_reason,
        converged,
        accuracy: correct as f64 / n as f64,
        tokens_prompt: tp,
        tokens_completion: tc,
        time_total: time,
    }
}

/// One-shot adaptive session; prefer [`Engine`] when running many.
pub fn run_cat_session<R: Respondent + ?Sized>(
    bank: &ItemBank,
    respondent: &mut R,
    config: &SessionConfig,
) -> Result<SessionResult, SessionError> {
    Engine::new(bank, config.grid.clone()).run_cat_session(respondent, config.strategy, &config.rule, config.seed)
}

/// One-shot full-bank administration.
pub fn run_full_bank<R: Respondent + ?Sized>(
    bank: &ItemBank,
    respondent: &mut R,
    grid: &QuadratureGrid,
) -> Result<SessionResult, SessionError> {
    Engine::new(bank, grid.clone()).run_full_bank(respondent)
}
