//! Monte Carlo recovery study: simulees on an ability grid, a matrix of
//! (stopping rule x selection strategy) conditions, and an optional
//! full-bank baseline, aggregated into bias/RMSE/correlation/length tables.
//!
//! Work is split into independent cells (one condition, one simulee) whose
//! random streams are derived from the master seed and the cell's
//! coordinates only, so any executor that runs [`StudyPlan::run_cell`] for
//! every index and hands the rows back in index order produces the same
//! report.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::engine::{Engine, SessionError};
use crate::estimation::QuadratureGrid;
use crate::irt::{prob_correct, Theta};
use crate::item::{ItemBank, ItemParameters};
use crate::metrics::{self, MetricError, PairedVector};
use crate::respond::{AnswerOutcome, Respondent, RespondentError, SimulatedRespondent};
use crate::rng::{derive_seed, stream};
use crate::selection::SelectionStrategy;
use crate::stopping::{paper_conditions, StopReason, StoppingRule};

/// Label of the full-bank baseline in reports.
pub const BASELINE_LABEL: &str = "FullBank";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error("simulee grid: {0}")]
    InvalidGrid(&'static str),
    #[error("duplicate condition label `{0}`")]
    DuplicateLabel(String),
    #[error("study has no conditions")]
    NoConditions,
    #[error("condition `{condition}` failed for simulee {simulee}: {source}")]
    Session {
        condition: String,
        simulee: usize,
        source: SessionError,
    },
    #[error("report has no full-bank baseline")]
    MissingBaseline,
    #[error("metric for `{condition}`: {source}")]
    Metric { condition: String, source: MetricError },
    #[error("expected {expected} cell rows, got {got}")]
    RowCount { expected: usize, got: usize },
}

/// Equally spaced true abilities, each replicated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimuleeGrid {
    pub theta_min: f64,
    pub theta_max: f64,
    pub step: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimuleeGrid {
    /// 36 levels from -3.5 to 3.5 in steps of 0.2, 100 replications each.
    pub fn paper(seed: u64) -> Self {
        Self {
            theta_min: -3.5,
            theta_max: 3.5,
            step: 0.2,
            replications: 100,
            seed,
        }
    }

    pub fn levels(&self) -> Result<usize, StudyError> {
        if !(self.theta_min.is_finite() && self.theta_max.is_finite() && self.step.is_finite()) {
            return Err(StudyError::InvalidGrid("non-finite bound or step"));
        }
        if !(self.step > 0.0) {
            return Err(StudyError::InvalidGrid("step must be positive"));
        }
        if self.replications == 0 {
            return Err(StudyError::InvalidGrid("replications must be positive"));
        }
        if self.theta_max < self.theta_min {
            return Err(StudyError::InvalidGrid("theta_max below theta_min"));
        }
        let span = (self.theta_max - self.theta_min) / self.step;
        let rounded = libm::round(span);
        if libm::fabs(span - rounded) > 1e-9 * rounded.max(1.0) {
            return Err(StudyError::InvalidGrid("range is not a whole number of steps"));
        }
        Ok(rounded as usize + 1)
    }

    pub fn theta_at(&self, level: usize, levels: usize) -> f64 {
        if levels == 1 {
            return self.theta_min;
        }
        let t = self.theta_min + (self.theta_max - self.theta_min) * level as f64 / (levels - 1) as f64;
        // keep printed levels clean (e.g. 0.1 rather than 0.09999999999999964)
        libm::round(t * 1e9) / 1e9
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simulee {
    pub id: usize,
    pub theta_true: f64,
    pub seed: u64,
}

/// Level-major list of simulees with per-simulee derived seeds.
pub fn build_simulees(grid: &SimuleeGrid) -> Result<Vec<Simulee>, StudyError> {
    let levels = grid.levels()?;
    let mut out = Vec::with_capacity(levels * grid.replications);
    for level in 0..levels {
        let theta_true = grid.theta_at(level, levels);
        for _ in 0..grid.replications {
            let id = out.len();
            out.push(Simulee {
                id,
                theta_true,
                seed: derive_seed(grid.seed, id as u64),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub rule: StoppingRule,
    pub strategy: SelectionStrategy,
}

impl Condition {
    pub fn new(rule: StoppingRule, strategy: SelectionStrategy) -> Self {
        Self {
            label: format!("{}:{}", strategy.label(), rule.label()),
            rule,
            strategy,
        }
    }
}

/// The eleven recoverable rules under both strategies, MFI first.
pub fn paper_condition_matrix() -> Vec<Condition> {
    [SelectionStrategy::MaxInfo, SelectionStrategy::Random]
        .into_iter()
        .flat_map(|s| paper_conditions().into_iter().map(move |(_, r)| Condition::new(r, s)))
        .collect()
}

/// How simulated answers relate across conditions for one simulee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponseMode {
    /// Each (condition, simulee) cell draws its own answers.
    #[default]
    Fresh,
    /// One answer per bank item per simulee, reused by every condition and
    /// by the baseline.
    Shared,
}

#[derive(Debug, Clone)]
pub struct StudyDesign<'a> {
    pub bank: &'a ItemBank,
    pub grid: SimuleeGrid,
    pub conditions: Vec<Condition>,
    pub include_full_bank_baseline: bool,
    pub response_mode: ResponseMode,
    pub quadrature: QuadratureGrid,
}

impl<'a> StudyDesign<'a> {
    pub fn new(bank: &'a ItemBank, grid: SimuleeGrid, conditions: Vec<Condition>) -> Self {
        Self {
            bank,
            grid,
            conditions,
            include_full_bank_baseline: true,
            response_mode: ResponseMode::Fresh,
            quadrature: QuadratureGrid::default(),
        }
    }

    fn validate(&self) -> Result<(), StudyError> {
        if self.conditions.is_empty() && !self.include_full_bank_baseline {
            return Err(StudyError::NoConditions);
        }
        let mut labels: Vec<&str> = self.conditions.iter().map(|c| c.label.as_str()).collect();
        labels.push(BASELINE_LABEL);
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(StudyError::DuplicateLabel(w[0].into()));
        }
        for c in &self.conditions {
            c.rule
                .check_feasible(self.bank.len())
                .map_err(|e| StudyError::Session {
                    condition: c.label.clone(),
                    simulee: 0,
                    source: e.into(),
                })?;
        }
        Ok(())
    }
}

/// One simulee's outcome under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub simulee: usize,
    pub theta_true: f64,
    pub theta_hat: f64,
    pub se: f64,
    pub length: usize,
    pub stop_reason: StopReason,
}

/// Answers from a per-item response vector drawn up front.
struct SharedResponses<'b> {
    bank: &'b ItemBank,
    scores: Vec<bool>,
}

impl<'b> SharedResponses<'b> {
    fn draw(bank: &'b ItemBank, theta: Theta, seed: u64) -> Self {
        let mut rng = stream(seed);
        let scores = bank
            .items()
            .iter()
            .map(|it| rng.random::<f64>() < prob_correct(it, theta))
            .collect();
        Self { bank, scores }
    }
}

impl Respondent for SharedResponses<'_> {
    fn answer(&mut self, item: &ItemParameters) -> Result<AnswerOutcome, RespondentError> {
        let idx = self
            .bank
            .index_of(&item.id)
            .ok_or_else(|| RespondentError::Unscripted {
                item_id: item.id.clone(),
            })?;
        Ok(AnswerOutcome::scored(self.scores[idx]))
    }
}

/// A validated design with its simulees and prepared engine.
pub struct StudyPlan<'a> {
    design: StudyDesign<'a>,
    simulees: Vec<Simulee>,
    engine: Engine<'a>,
}

impl<'a> StudyPlan<'a> {
    pub fn new(design: StudyDesign<'a>) -> Result<Self, StudyError> {
        design.validate()?;
        let simulees = build_simulees(&design.grid)?;
        let engine = Engine::new(design.bank, design.quadrature.clone());
        Ok(Self {
            design,
            simulees,
            engine,
        })
    }

    pub fn design(&self) -> &StudyDesign<'a> {
        &self.design
    }

    pub fn simulees(&self) -> &[Simulee] {
        &self.simulees
    }

    fn block_count(&self) -> usize {
        self.design.conditions.len() + self.design.include_full_bank_baseline as usize
    }

    /// Cells are condition-major; the baseline block, if any, comes last.
    pub fn cell_count(&self) -> usize {
        self.block_count() * self.simulees.len()
    }

    pub fn block_label(&self, block: usize) -> &str {
        self.design
            .conditions
            .get(block)
            .map(|c| c.label.as_str())
            .unwrap_or(BASELINE_LABEL)
    }

    pub fn run_cell(&self, cell: usize) -> Result<CellRow, StudyError> {
        let n = self.simulees.len();
        let (block, s) = (cell / n, cell % n);
        let sim = &self.simulees[s];
        let theta = Theta(sim.theta_true);
        let wrap = |source: SessionError| StudyError::Session {
            condition: String::from(self.block_label(block)),
            simulee: sim.id,
            source,
        };
        let shared = self.design.response_mode == ResponseMode::Shared;

        let Some(cond) = self.design.conditions.get(block) else {
            // baseline: the simulee's own stream
            let (est, _) = if shared {
                let mut r = SharedResponses::draw(self.design.bank, theta, sim.seed);
                self.engine.full_bank_estimate(&mut r)
            } else {
                let mut r = SimulatedRespondent::new(theta, sim.seed);
                self.engine.full_bank_estimate(&mut r)
            }
            .map_err(wrap)?;
            return Ok(CellRow {
                simulee: sim.id,
                theta_true: sim.theta_true,
                theta_hat: est.theta_hat,
                se: est.se,
                length: self.design.bank.len(),
                stop_reason: StopReason::FixedLength,
            });
        };

        let cell_seed = derive_seed(sim.seed, block as u64 + 1);
        let selection_seed = derive_seed(cell_seed, 0);
        let result = if shared {
            let mut r = SharedResponses::draw(self.design.bank, theta, sim.seed);
            self.engine
                .run_cat_session(&mut r, cond.strategy, &cond.rule, selection_seed)
        } else {
            let mut r = SimulatedRespondent::new(theta, derive_seed(cell_seed, 1));
            self.engine
                .run_cat_session(&mut r, cond.strategy, &cond.rule, selection_seed)
        }
        .map_err(wrap)?;
        Ok(CellRow {
            simulee: sim.id,
            theta_true: sim.theta_true,
            theta_hat: result.final_estimate.theta_hat,
            se: result.final_estimate.se,
            length: result.length(),
            stop_reason: result.stop_reason,
        })
    }

    /// Folds rows (in cell order) into the report.
    pub fn assemble(&self, rows: Vec<CellRow>) -> Result<StudyReport, StudyError> {
        if rows.len() != self.cell_count() {
            return Err(StudyError::RowCount {
                expected: self.cell_count(),
                got: rows.len(),
            });
        }
        let n = self.simulees.len();
        let mut blocks: Vec<Vec<CellRow>> = Vec::with_capacity(self.block_count());
        let mut it = rows.into_iter();
        for _ in 0..self.block_count() {
            blocks.push(it.by_ref().take(n).collect());
        }
        let baseline = if self.design.include_full_bank_baseline {
            let rows = blocks.pop().expect("baseline block");
            Some(ConditionResult::from_rows(BASELINE_LABEL.into(), None, rows)?)
        } else {
            None
        };
        let mut conditions = Vec::with_capacity(self.design.conditions.len());
        for (cond, rows) in self.design.conditions.iter().zip(blocks) {
            conditions.push(ConditionResult::from_rows(
                cond.label.clone(),
                Some((cond.rule, cond.strategy)),
                rows,
            )?);
        }
        let mut report = StudyReport {
            ttl: self.design.bank.len(),
            conditions,
            baseline,
        };
        report.fill_relatives();
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Relatives {
    pub tlr: Option<f64>,
    pub bir: Option<f64>,
    pub rir: Option<f64>,
    pub clr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub label: String,
    /// `None` for the full-bank baseline.
    pub setting: Option<(StoppingRule, SelectionStrategy)>,
    pub rows: Vec<CellRow>,
    pub bias: f64,
    pub rmse: f64,
    /// `None` when undefined (constant estimates or truths).
    pub cor: Option<f64>,
    pub atl: f64,
    pub relatives: Relatives,
}

impl ConditionResult {
    fn from_rows(
        label: String,
        setting: Option<(StoppingRule, SelectionStrategy)>,
        rows: Vec<CellRow>,
    ) -> Result<Self, StudyError> {
        let metric_err = |source| StudyError::Metric {
            condition: label.clone(),
            source,
        };
        let est: Vec<f64> = rows.iter().map(|r| r.theta_hat).collect();
        let truth: Vec<f64> = rows.iter().map(|r| r.theta_true).collect();
        let lengths: Vec<usize> = rows.iter().map(|r| r.length).collect();
        let pv = PairedVector::new(&est, &truth).map_err(metric_err)?;
        let bias = metrics::bias(&pv);
        let rmse = metrics::rmse(&pv);
        let cor = metrics::pearson(&pv).ok();
        let atl = metrics::atl(&lengths).map_err(metric_err)?;
        Ok(Self {
            label,
            setting,
            rows,
            bias,
            rmse,
            cor,
            atl,
            relatives: Relatives::default(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    /// Full test length (bank size).
    pub ttl: usize,
    pub conditions: Vec<ConditionResult>,
    pub baseline: Option<ConditionResult>,
}

impl StudyReport {
    fn fill_relatives(&mut self) {
        let ttl = self.ttl;
        let base = self.baseline.as_ref().map(|b| (b.bias, b.rmse, b.cor));
        let compute = |c: &ConditionResult| Relatives {
            tlr: metrics::tlr(c.atl, ttl).ok(),
            bir: base.and_then(|(b, _, _)| metrics::bir(c.bias, b).ok()),
            rir: base.and_then(|(_, r, _)| metrics::rir(c.rmse, r).ok()),
            clr: base.and_then(|(_, _, k)| metrics::clr(c.cor?, k?).ok()),
        };
        for c in &mut self.conditions {
            c.relatives = compute(c);
        }
        if let Some(b) = self.baseline.as_mut() {
            b.relatives = compute(b);
        }
    }

    pub fn condition(&self, label: &str) -> Option<&ConditionResult> {
        self.conditions
            .iter()
            .chain(self.baseline.as_ref())
            .find(|c| c.label == label)
    }

    /// Baseline first, then conditions in design order.
    pub fn all(&self) -> impl Iterator<Item = &ConditionResult> {
        self.baseline.iter().chain(self.conditions.iter())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub label: String,
    pub tlr: Option<f64>,
    pub bir: Option<f64>,
    pub rir: Option<f64>,
    pub clr: Option<f64>,
}

/// Length reduction against each precision loss, one row per non-baseline condition.
pub fn tradeoff_table(report: &StudyReport) -> Result<Vec<TradeoffRow>, StudyError> {
    if report.baseline.is_none() {
        return Err(StudyError::MissingBaseline);
    }
    Ok(report
        .conditions
        .iter()
        .map(|c| TradeoffRow {
            label: c.label.clone(),
            tlr: c.relatives.tlr,
            bir: c.relatives.bir,
            rir: c.relatives.rir,
            clr: c.relatives.clr,
        })
        .collect())
}

/// Runs every cell in order on the calling thread.
pub fn run_study(design: StudyDesign<'_>) -> Result<StudyReport, StudyError> {
    let plan = StudyPlan::new(design)?;
    let rows = (0..plan.cell_count())
        .map(|i| plan.run_cell(i))
        .collect::<Result<Vec<_>, _>>()?;
    plan.assemble(rows)
}
