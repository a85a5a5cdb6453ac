//! Two-parameter logistic computerized adaptive testing kernel.
//!
//! Everything here is allocation-only `no_std`: item banks and synthetic
//! generation, EAP estimation on a fixed quadrature grid, item selection,
//! stopping rules, the session engine, recovery metrics and the Monte Carlo
//! study. File formats, HTTP respondents and the CLI live in the `catlab`
//! crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod engine;
pub mod estimation;
pub mod irt;
pub mod item;
pub mod metrics;
pub mod respond;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod stopping;

pub use engine::{
    run_cat_session, run_full_bank, AdministeredItem, Engine, NoObserver, PartialTranscript, SessionConfig,
    SessionError, SessionObserver, SessionResult,
};
pub use estimation::{default_grid, eap_estimate, AbilityEstimate, EstimationError, QuadratureGrid, ResponseRecord};
pub use irt::{item_information, prob_correct, test_information, Theta};
pub use item::{generate_synthetic_bank, BankError, BankMetadata, BankSpec, ItemBank, ItemParameters, ParamDist};
pub use respond::{AnswerOutcome, Respondent, RespondentError, ScriptedRespondent, SimulatedRespondent};
pub use selection::{select_next, SelectionStrategy};
pub use simulation::{run_study, Condition, ResponseMode, SimuleeGrid, StudyDesign, StudyPlan, StudyReport};
pub use stopping::{should_stop, StopReason, StoppingRule};
