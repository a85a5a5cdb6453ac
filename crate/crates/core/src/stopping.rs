//! Session termination: fixed length or standard-error threshold.
//!
//! Rules parse from and print as `length:<n>` or `se:<x>[,min=<m>][,max=<M>]`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("cannot parse stopping rule `{0}`: expected length:<n> or se:<x>[,min=<m>][,max=<M>]")]
    Syntax(String),
    #[error("invalid stopping rule `{rule}`: {reason}")]
    Invalid { rule: String, reason: &'static str },
    #[error("rule `{rule}` needs {needed} items but the bank has {bank}")]
    Infeasible { rule: String, needed: usize, bank: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    FixedLength(usize),
    SeThreshold {
        se_max: f64,
        min_items: usize,
        /// `None` means the bank size.
        max_items: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    FixedLength,
    Precision,
    Cap,
    BankExhausted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::FixedLength => "fixed_length",
            StopReason::Precision => "precision",
            StopReason::Cap => "cap",
            StopReason::BankExhausted => "bank_exhausted",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StopReason {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "fixed_length" => StopReason::FixedLength,
            "precision" => StopReason::Precision,
            "cap" => StopReason::Cap,
            "bank_exhausted" => StopReason::BankExhausted,
            other => return Err(RuleError::Syntax(other.into())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

impl StoppingRule {
    pub fn se(se_max: f64) -> Self {
        StoppingRule::SeThreshold {
            se_max,
            min_items: 0,
            max_items: None,
        }
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        let invalid = |reason| RuleError::Invalid {
            rule: self.to_string(),
            reason,
        };
        match *self {
            StoppingRule::FixedLength(0) => Err(invalid("length must be at least 1")),
            StoppingRule::FixedLength(_) => Ok(()),
            StoppingRule::SeThreshold {
                se_max,
                min_items,
                max_items,
            } => {
                if !(se_max > 0.0 && se_max < 1.0) {
                    return Err(invalid("se threshold must lie in (0, 1)"));
                }
                match max_items {
                    Some(0) => Err(invalid("max must be at least 1")),
                    Some(max) if min_items > max => Err(invalid("min exceeds max")),
                    _ => Ok(()),
                }
            }
        }
    }

    /// Validates against a concrete bank size.
    pub fn check_feasible(&self, bank_len: usize) -> Result<(), RuleError> {
        self.validate()?;
        let needed = match *self {
            StoppingRule::FixedLength(n) => n,
            StoppingRule::SeThreshold { min_items, .. } => min_items,
        };
        if needed > bank_len {
            return Err(RuleError::Infeasible {
                rule: self.to_string(),
                needed,
                bank: bank_len,
            });
        }
        Ok(())
    }

    /// Item cap with the bank-size default resolved.
    pub fn max_items(&self, bank_len: usize) -> usize {
        match *self {
            StoppingRule::FixedLength(n) => n,
            StoppingRule::SeThreshold { max_items, .. } => max_items.unwrap_or(bank_len),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            StoppingRule::FixedLength(n) => format!("Length_{n}"),
            StoppingRule::SeThreshold { se_max, .. } => format!("SE_{se_max:.3}"),
        }
    }
}

/// Called after each response with the estimate that response produced.
pub fn should_stop(n_administered: usize, current_se: f64, rule: &StoppingRule) -> StopDecision {
    match *rule {
        StoppingRule::FixedLength(n) => {
            if n_administered >= n {
                StopDecision::Stop(StopReason::FixedLength)
            } else {
                StopDecision::Continue
            }
        }
        StoppingRule::SeThreshold {
            se_max,
            min_items,
            max_items,
        } => {
            if n_administered >= min_items && current_se <= se_max {
                StopDecision::Stop(StopReason::Precision)
            } else if max_items.is_some_and(|m| n_administered >= m) {
                StopDecision::Stop(StopReason::Cap)
            } else {
                StopDecision::Continue
            }
        }
    }
}

/// The six enumerated fixed lengths and five SE thresholds.
pub fn paper_conditions() -> Vec<(String, StoppingRule)> {
    let lengths = [50, 100, 150, 200, 300, 500].map(StoppingRule::FixedLength);
    let thresholds = [0.500, 0.447, 0.387, 0.316, 0.224].map(StoppingRule::se);
    lengths
        .into_iter()
        .chain(thresholds)
        .map(|rule| (rule.label(), rule))
        .collect()
}

impl fmt::Display for StoppingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StoppingRule::FixedLength(n) => write!(f, "length:{n}"),
            StoppingRule::SeThreshold {
                se_max,
                min_items,
                max_items,
            } => {
                write!(f, "se:{se_max}")?;
                if min_items > 0 {
                    write!(f, ",min={min_items}")?;
                }
                if let Some(max) = max_items {
                    write!(f, ",max={max}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for StoppingRule {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || RuleError::Syntax(s.into());
        let (kind, rest) = s.trim().split_once(':').ok_or_else(syntax)?;
        let rule = match kind.trim() {
            "length" => StoppingRule::FixedLength(rest.trim().parse().map_err(|_| syntax())?),
            "se" => {
                let mut parts = rest.split(',');
                let se_max: f64 = parts.next().and_then(|v| v.trim().parse().ok()).ok_or_else(syntax)?;
                let (mut min_items, mut max_items) = (0, None);
                for part in parts {
                    let (key, value) = part.split_once('=').ok_or_else(syntax)?;
                    let value: usize = value.trim().parse().map_err(|_| syntax())?;
                    match key.trim() {
                        "min" => min_items = value,
                        "max" => max_items = Some(value),
                        _ => return Err(syntax()),
                    }
                }
                StoppingRule::SeThreshold {
                    se_max,
                    min_items,
                    max_items,
                }
            }
            _ => return Err(syntax()),
        };
        rule.validate()?;
        Ok(rule)
    }
}
