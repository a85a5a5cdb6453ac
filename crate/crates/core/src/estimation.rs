//! Expected-a-posteriori ability estimation on a fixed quadrature grid.
//!
//! Log-likelihoods are accumulated per grid point in 64.64 fixed point
//! (`i128`). Integer addition is associative, so the posterior, and with it
//! the estimate, is bit-identical for any ordering of the responses and
//! for incremental versus batch accumulation.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::irt::{log_prob_pair, Theta};
use crate::item::ItemParameters;

const FIXED_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

#[inline]
fn to_fixed(x: f64) -> i128 {
    (x * FIXED_SCALE) as i128
}

#[inline]
fn from_fixed(x: i128) -> f64 {
    x as f64 / FIXED_SCALE
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("quadrature grid: {0}")]
    InvalidGrid(&'static str),
    #[error("posterior has no finite positive mass")]
    DegeneratePosterior,
    #[error("reliability must lie in [0, 1), got {0}")]
    ReliabilityOutOfRange(f64),
}

/// Discretized prior: strictly increasing nodes with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(points: Vec<f64>, prior_weights: Vec<f64>) -> Result<Self, EstimationError> {
        if points.is_empty() {
            return Err(EstimationError::InvalidGrid("no points"));
        }
        if points.len() != prior_weights.len() {
            return Err(EstimationError::InvalidGrid("weight count differs from point count"));
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EstimationError::InvalidGrid(
                "points must be finite and strictly increasing",
            ));
        }
        if prior_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(EstimationError::InvalidGrid("weights must be positive"));
        }
        let total: f64 = prior_weights.iter().sum();
        let weights: Vec<f64> = prior_weights.iter().map(|w| w / total).collect();
        let log_weights = weights.iter().map(|w| libm::log(*w)).collect();
        Ok(Self {
            points,
            weights,
            log_weights,
        })
    }

    /// `n` equally spaced nodes on `[-half_width, half_width]` weighted by the
    /// standard normal density.
    pub fn standard_normal(n: usize, half_width: f64) -> Result<Self, EstimationError> {
        if n < 2 || !(half_width > 0.0) {
            return Err(EstimationError::InvalidGrid("need n >= 2 and a positive width"));
        }
        let mid = (n - 1) as f64 / 2.0;
        let step = 2.0 * half_width / (n - 1) as f64;
        // Centered indexing keeps the grid exactly symmetric about zero.
        let points: Vec<f64> = (0..n).map(|k| (k as f64 - mid) * step).collect();
        let weights = points.iter().map(|x| libm::exp(-0.5 * x * x)).collect();
        Self::new(points, weights)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn prior_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        default_grid()
    }
}

/// 121 equally spaced nodes on [-4, 4] with a standard normal prior.
pub fn default_grid() -> QuadratureGrid {
    QuadratureGrid::standard_normal(121, 4.0).expect("static grid parameters are valid")
}

/// One scored answer.
#[derive(Debug, Clone, Copy)]
pub struct ResponseRecord<'a> {
    pub item: &'a ItemParameters,
    pub correct: bool,
}

impl<'a> ResponseRecord<'a> {
    pub fn new(item: &'a ItemParameters, correct: bool) -> Self {
        Self { item, correct }
    }

    pub fn score(&self) -> u8 {
        self.correct as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbilityEstimate {
    pub theta_hat: f64,
    /// Posterior standard deviation.
    pub se: f64,
    pub n_items: usize,
}

impl AbilityEstimate {
    pub fn theta(&self) -> Theta {
        Theta(self.theta_hat)
    }

    pub fn reliability(&self) -> f64 {
        reliability_from_se(self.se)
    }
}

/// Fixed-point log-likelihood contributions of every item at every node,
/// laid out `[item][node][incorrect, correct]`.
#[derive(Debug, Clone)]
pub struct LikelihoodTable {
    nodes: usize,
    terms: Vec<i128>,
}

impl LikelihoodTable {
    pub fn new(items: &[ItemParameters], grid: &QuadratureGrid) -> Self {
        let nodes = grid.len();
        let mut terms = Vec::with_capacity(items.len() * nodes * 2);
        for item in items {
            for &x in grid.points() {
                let (lp, lq) = log_prob_pair(item, Theta(x));
                terms.push(to_fixed(lq));
                terms.push(to_fixed(lp));
            }
        }
        Self { nodes, terms }
    }

    #[inline]
    fn row(&self, item_index: usize) -> &[i128] {
        let start = item_index * self.nodes * 2;
        &self.terms[start..start + self.nodes * 2]
    }
}

/// Running log-likelihood over the grid nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogLikelihood {
    acc: Vec<i128>,
    n_items: usize,
}

impl LogLikelihood {
    pub fn new(grid: &QuadratureGrid) -> Self {
        Self {
            acc: vec![0; grid.len()],
            n_items: 0,
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn add(&mut self, response: &ResponseRecord<'_>, grid: &QuadratureGrid) {
        debug_assert_eq!(self.acc.len(), grid.len());
        for (slot, &x) in self.acc.iter_mut().zip(grid.points()) {
            let (lp, lq) = log_prob_pair(response.item, Theta(x));
            *slot += to_fixed(if response.correct { lp } else { lq });
        }
        self.n_items += 1;
    }

    /// Same contribution as [`LogLikelihood::add`], read from a precomputed table.
    pub fn add_from_table(&mut self, table: &LikelihoodTable, item_index: usize, correct: bool) {
        debug_assert_eq!(self.acc.len(), table.nodes);
        let row = table.row(item_index);
        let offset = correct as usize;
        for (k, slot) in self.acc.iter_mut().enumerate() {
            *slot += row[2 * k + offset];
        }
        self.n_items += 1;
    }

    pub fn posterior(&self, grid: &QuadratureGrid) -> Result<Vec<f64>, EstimationError> {
        if self.n_items == 0 {
            return Ok(grid.weights.clone());
        }
        let logs: Vec<f64> = self
            .acc
            .iter()
            .zip(&grid.log_weights)
            .map(|(ll, lw)| from_fixed(*ll) + lw)
            .collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(EstimationError::DegeneratePosterior);
        }
        let mut post: Vec<f64> = logs.iter().map(|l| libm::exp(l - peak)).collect();
        let total: f64 = post.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(EstimationError::DegeneratePosterior);
        }
        for p in &mut post {
            *p /= total;
        }
        Ok(post)
    }

    pub fn estimate(&self, grid: &QuadratureGrid) -> Result<AbilityEstimate, EstimationError> {
        let post = self.posterior(grid)?;
        Ok(moments(grid, &post, self.n_items))
    }
}

fn moments(grid: &QuadratureGrid, post: &[f64], n_items: usize) -> AbilityEstimate {
    let mean: f64 = grid.points().iter().zip(post).map(|(x, p)| x * p).sum();
    let var: f64 = grid
        .points()
        .iter()
        .zip(post)
        .map(|(x, p)| (x - mean) * (x - mean) * p)
        .sum();
    AbilityEstimate {
        theta_hat: mean.clamp(grid.min(), grid.max()),
        se: libm::sqrt(var),
        n_items,
    }
}

fn accumulate(responses: &[ResponseRecord<'_>], grid: &QuadratureGrid) -> LogLikelihood {
    let mut ll = LogLikelihood::new(grid);
    for r in responses {
        ll.add(r, grid);
    }
    ll
}

/// Normalized posterior over the grid nodes.
pub fn posterior(responses: &[ResponseRecord<'_>], grid: &QuadratureGrid) -> Result<Vec<f64>, EstimationError> {
    accumulate(responses, grid).posterior(grid)
}

/// Posterior mean and standard deviation of theta.
pub fn eap_estimate(
    responses: &[ResponseRecord<'_>],
    grid: &QuadratureGrid,
) -> Result<AbilityEstimate, EstimationError> {
    accumulate(responses, grid).estimate(grid)
}

/// `1 - se^2`.
pub fn reliability_from_se(se: f64) -> f64 {
    1.0 - se * se
}

/// `sqrt(1 - r)`, the standard error that attains reliability `r`.
pub fn se_for_reliability(r: f64) -> Result<f64, EstimationError> {
    if !(0.0..1.0).contains(&r) {
        return Err(EstimationError::ReliabilityOutOfRange(r));
    }
    Ok(libm::sqrt(1.0 - r))
}
