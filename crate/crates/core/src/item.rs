//! Calibrated items, item banks, and the synthetic bank generator.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Option letters an item may carry, in order.
pub const OPTION_LETTERS: [char; 5] = ['A', 'B', 'C', 'D', 'E'];

/// Draw budget per truncated-normal value before the window is declared infeasible.
const MAX_RESAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BankError {
    #[error("item bank is empty")]
    Empty,
    #[error("duplicate item id `{0}`")]
    DuplicateId(String),
    #[error("item `{id}`: discrimination must be positive and finite, got {value}")]
    NonPositiveDiscrimination { id: String, value: f64 },
    #[error("item `{id}`: difficulty must be finite, got {value}")]
    NonFiniteDifficulty { id: String, value: f64 },
    #[error("item `{id}`: empty id")]
    EmptyId { id: String },
    #[error("item `{id}`: answer key `{key}` is not a letter in A..E")]
    InvalidKey { id: String, key: char },
    #[error("item `{id}`: options present but no answer key")]
    MissingAnswerKey { id: String },
    #[error("item `{id}`: answer key `{key}` is not among the option letters")]
    KeyNotInOptions { id: String, key: char },
    #[error("item `{id}`: option letters must run A, B, C, ... without gaps or repeats")]
    BadOptionLetters { id: String },
    #[error("invalid bank spec: {0}")]
    InvalidSpec(String),
    #[error("{param}: truncation window [{min}, {max}] is infeasible for mean {mean}, sd {sd}")]
    InfeasibleTruncation {
        param: &'static str,
        mean: f64,
        sd: f64,
        min: f64,
        max: f64,
    },
}

/// One calibrated dichotomous item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemParameters {
    pub id: String,
    /// Logistic slope (alpha), strictly positive.
    pub discrimination: f64,
    /// Location of the 50% point (beta) on the theta scale.
    pub difficulty: f64,
    pub answer_key: Option<char>,
    pub stem: Option<String>,
    /// Lettered options; empty for content-free items.
    pub options: Vec<(char, String)>,
}

impl ItemParameters {
    /// Content-free item, as used by simulation-only banks.
    pub fn new(id: impl Into<String>, discrimination: f64, difficulty: f64) -> Self {
        Self {
            id: id.into(),
            discrimination,
            difficulty,
            answer_key: None,
            stem: None,
            options: Vec::new(),
        }
    }

    pub fn with_content(mut self, stem: impl Into<String>, options: Vec<(char, String)>, answer_key: char) -> Self {
        self.stem = Some(stem.into());
        self.options = options;
        self.answer_key = Some(answer_key);
        self
    }

    /// True when the item can be shown to a content respondent.
    pub fn has_content(&self) -> bool {
        self.stem.is_some() && !self.options.is_empty() && self.answer_key.is_some()
    }

    pub fn validate(&self) -> Result<(), BankError> {
        let id = || self.id.clone();
        if self.id.trim().is_empty() {
            return Err(BankError::EmptyId { id: id() });
        }
        if !(self.discrimination > 0.0) || !self.discrimination.is_finite() {
            return Err(BankError::NonPositiveDiscrimination {
                id: id(),
                value: self.discrimination,
            });
        }
        if !self.difficulty.is_finite() {
            return Err(BankError::NonFiniteDifficulty {
                id: id(),
                value: self.difficulty,
            });
        }
        if let Some(key) = self.answer_key {
            if !OPTION_LETTERS.contains(&key) {
                return Err(BankError::InvalidKey { id: id(), key });
            }
        }
        if !self.options.is_empty() {
            let contiguous = self.options.len() <= OPTION_LETTERS.len()
                && self
                    .options
                    .iter()
                    .zip(OPTION_LETTERS)
                    .all(|((letter, _), expected)| *letter == expected);
            if !contiguous {
                return Err(BankError::BadOptionLetters { id: id() });
            }
            match self.answer_key {
                None => return Err(BankError::MissingAnswerKey { id: id() }),
                Some(key) if !self.options.iter().any(|(l, _)| *l == key) => {
                    return Err(BankError::KeyNotInOptions { id: id(), key })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankMetadata {
    pub name: String,
    pub source: String,
    pub calibration: String,
}

/// Validated, immutable pool of items sharing one theta scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemBank {
    items: Vec<ItemParameters>,
    metadata: BankMetadata,
}

impl ItemBank {
    pub fn new(items: Vec<ItemParameters>, metadata: BankMetadata) -> Result<Self, BankError> {
        if items.is_empty() {
            return Err(BankError::Empty);
        }
        let mut ids: Vec<&str> = items.iter().map(|it| it.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(BankError::DuplicateId(w[0].to_string()));
        }
        for item in &items {
            item.validate()?;
        }
        Ok(Self { items, metadata })
    }

    #[inline]
    pub fn items(&self) -> &[ItemParameters] {
        &self.items
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Always false for a constructed bank; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> &ItemParameters {
        &self.items[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    pub fn metadata(&self) -> &BankMetadata {
        &self.metadata
    }

    pub fn into_parts(self) -> (Vec<ItemParameters>, BankMetadata) {
        (self.items, self.metadata)
    }
}

/// Moments and bounds of one truncated-normal parameter distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDist {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl ParamDist {
    pub const fn new(mean: f64, sd: f64, min: f64, max: f64) -> Self {
        Self { mean, sd, min, max }
    }

    fn check(&self, name: &'static str) -> Result<(), BankError> {
        let all_finite = [self.mean, self.sd, self.min, self.max].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(BankError::InvalidSpec(format!("{name}: non-finite value")));
        }
        if self.sd < 0.0 {
            return Err(BankError::InvalidSpec(format!("{name}: negative sd")));
        }
        if self.min > self.max {
            return Err(BankError::InvalidSpec(format!("{name}: min > max")));
        }
        // A mean far outside the window leaves almost no mass to resample from.
        if self.mean < self.min - 6.0 * self.sd || self.mean > self.max + 6.0 * self.sd {
            return Err(self.infeasible(name));
        }
        if self.mean < self.min || self.mean > self.max {
            return Err(BankError::InvalidSpec(format!(
                "{name}: mean must lie within [min, max]"
            )));
        }
        Ok(())
    }

    fn infeasible(&self, param: &'static str) -> BankError {
        BankError::InfeasibleTruncation {
            param,
            mean: self.mean,
            sd: self.sd,
            min: self.min,
            max: self.max,
        }
    }

    fn draw<R: Rng>(&self, param: &'static str, rng: &mut R) -> Result<f64, BankError> {
        if self.sd == 0.0 {
            return Ok(self.mean);
        }
        for _ in 0..MAX_RESAMPLES {
            let z: f64 = StandardNormal.sample(rng);
            let v = self.mean + self.sd * z;
            if v >= self.min && v <= self.max {
                return Ok(v);
            }
        }
        Err(self.infeasible(param))
    }
}

/// Recipe for a synthetic bank: parameter moments plus a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankSpec {
    pub n_items: usize,
    pub alpha: ParamDist,
    pub beta: ParamDist,
    pub seed: u64,
}

impl BankSpec {
    /// Discrimination and difficulty moments of the 2,815-item licensure bank.
    pub const fn paper_moments(seed: u64) -> Self {
        Self {
            n_items: 2815,
            alpha: ParamDist::new(1.01, 0.08, 0.44, 1.52),
            beta: ParamDist::new(-0.01, 0.20, -1.11, 1.44),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), BankError> {
        if self.n_items == 0 {
            return Err(BankError::InvalidSpec("n_items must be positive".into()));
        }
        self.alpha.check("alpha")?;
        self.beta.check("beta")?;
        if !(self.alpha.min > 0.0) {
            return Err(BankError::InvalidSpec("alpha min must be positive".into()));
        }
        Ok(())
    }
}

/// Draws a bank whose parameters follow normals truncated (by resampling)
/// to the spec's windows. A pure function of `spec`.
pub fn generate_synthetic_bank(spec: &BankSpec) -> Result<ItemBank, BankError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut items = Vec::with_capacity(spec.n_items);
    for i in 0..spec.n_items {
        let a = spec.alpha.draw("alpha", &mut rng)?;
        let b = spec.beta.draw("beta", &mut rng)?;
        items.push(ItemParameters::new(format!("syn-{:04}", i + 1), a, b));
    }
    let metadata = BankMetadata {
        name: "synthetic".into(),
        source: format!("generated, seed {}", spec.seed),
        calibration: format!(
            "alpha ~ N({}, {}) in [{}, {}]; beta ~ N({}, {}) in [{}, {}]",
            spec.alpha.mean,
            spec.alpha.sd,
            spec.alpha.min,
            spec.alpha.max,
            spec.beta.mean,
            spec.beta.sd,
            spec.beta.min,
            spec.beta.max
        ),
    };
    ItemBank::new(items, metadata)
}
