//! Next-item selection: maximum Fisher information and random selection.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::irt::{information, item_information, Theta};
use crate::item::ItemBank;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("item pool is exhausted")]
    PoolExhausted,
    #[error("unknown selection strategy `{0}` (expected mfi or rs)")]
    UnknownStrategy(alloc::string::String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionStrategy {
    /// Unused item with the largest information at the current estimate.
    MaxInfo,
    /// Uniform draw over unused items.
    Random,
}

impl SelectionStrategy {
    pub fn label(self) -> &'static str {
        match self {
            SelectionStrategy::MaxInfo => "MFI",
            SelectionStrategy::Random => "RS",
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SelectionStrategy {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mfi" | "maxinfo" => Ok(SelectionStrategy::MaxInfo),
            "rs" | "random" => Ok(SelectionStrategy::Random),
            _ => Err(SelectionError::UnknownStrategy(s.into())),
        }
    }
}

/// Bank indices already administered in a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Administered {
    used: Vec<bool>,
    count: usize,
}

impl Administered {
    pub fn new(bank_len: usize) -> Self {
        Self {
            used: vec![false; bank_len],
            count: 0,
        }
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.used[index]
    }

    /// Returns false if the item was already marked.
    pub fn insert(&mut self, index: usize) -> bool {
        if self.used[index] {
            return false;
        }
        self.used[index] = true;
        self.count += 1;
        true
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn remaining(&self) -> usize {
        self.used.len() - self.count
    }
}

/// Uniform draw over the whole bank.
pub fn first_item<R: Rng + ?Sized>(bank: &ItemBank, rng: &mut R) -> Result<usize, SelectionError> {
    if bank.is_empty() {
        return Err(SelectionError::PoolExhausted);
    }
    Ok(rng.random_range(0..bank.len()))
}

pub fn select_next<R: Rng + ?Sized>(
    bank: &ItemBank,
    administered: &Administered,
    theta_hat: Theta,
    strategy: SelectionStrategy,
    rng: &mut R,
) -> Result<usize, SelectionError> {
    if administered.remaining() == 0 {
        return Err(SelectionError::PoolExhausted);
    }
    match strategy {
        SelectionStrategy::MaxInfo => Ok(max_info(bank, administered, theta_hat)),
        SelectionStrategy::Random => {
            let k = rng.random_range(0..administered.remaining());
            Ok((0..bank.len())
                .filter(|&i| !administered.contains(i))
                .nth(k)
                .expect("k is below the number of unused items"))
        }
    }
}

/// Full scan; strict comparison keeps the lowest index among ties.
fn max_info(bank: &ItemBank, administered: &Administered, theta: Theta) -> usize {
    let mut best = usize::MAX;
    let mut best_info = f64::NEG_INFINITY;
    for (i, item) in bank.items().iter().enumerate() {
        if administered.contains(i) {
            continue;
        }
        let info = item_information(item, theta);
        if info > best_info {
            best = i;
            best_info = info;
        }
    }
    best
}

/// Bank parameters laid out for repeated max-information queries. Returns
/// exactly what the full scan in [`select_next`] returns, but skips the
/// `exp` for items whose information provably cannot reach the best value:
/// `a^2 p (1 - p) = a^2 / (2 + 2 cosh x)` with `x = a (theta - b)`, and the
/// cosh series truncated after `x^6` bounds it from above.
#[derive(Debug, Clone)]
pub struct InfoIndex {
    params: Vec<(f64, f64)>,
    /// Bank indices sorted by difficulty.
    by_b: Vec<usize>,
}

/// Beyond this |x| the series bound is not used.
const BOUND_X_MAX: f64 = 30.0;
/// Items nearest in difficulty that seed the pruning threshold.
const SEED_WINDOW: usize = 8;

/// True when the item's information is certainly below `floor`.
#[inline]
fn below(a: f64, b: f64, theta: f64, floor: f64) -> bool {
    let x = a * (theta - b);
    if libm::fabs(x) > BOUND_X_MAX {
        return false;
    }
    let x2 = x * x;
    let denom = 4.0 + x2 * (1.0 + x2 * (1.0 / 12.0 + x2 / 360.0));
    // slack covers rounding here and in the exact product
    a * a * (1.0 + 1e-9) < floor * denom
}

impl InfoIndex {
    pub fn new(bank: &ItemBank) -> Self {
        let params: Vec<_> = bank
            .items()
            .iter()
            .map(|it| (it.discrimination, it.difficulty))
            .collect();
        let mut by_b: Vec<usize> = (0..params.len()).collect();
        by_b.sort_by(|&i, &j| params[i].1.total_cmp(&params[j].1).then(i.cmp(&j)));
        Self { params, by_b }
    }

    pub fn argmax(&self, administered: &Administered, theta: Theta) -> Option<usize> {
        let t = theta.0;
        // unused items closest in difficulty give a good starting threshold
        let mid = self.by_b.partition_point(|&i| self.params[i].1 < t);
        let mut floor = f64::NEG_INFINITY;
        let mut taken = 0;
        for &i in self.by_b[mid..].iter().chain(self.by_b[..mid].iter().rev()) {
            if taken == SEED_WINDOW {
                break;
            }
            if !administered.contains(i) {
                let (a, b) = self.params[i];
                floor = floor.max(information(a, b, t));
                taken += 1;
            }
        }
        let mut best: Option<usize> = None;
        let mut best_info = f64::NEG_INFINITY;
        for (i, &(a, b)) in self.params.iter().enumerate() {
            if administered.contains(i) || below(a, b, t, floor) {
                continue;
            }
            let info = information(a, b, t);
            if info > best_info {
                best = Some(i);
                best_info = info;
                floor = floor.max(info);
            }
        }
        best
    }
}
