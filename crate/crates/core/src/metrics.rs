//! Recovery metrics (bias, RMSE, correlations), test length, and the
//! efficiency/precision ratios against a full-bank baseline.
//!
//! Relative metrics are percentages carried as plain `f64` (97.9 means 97.9%).

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("paired vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite entry")]
    NonFinite,
    #[error("correlation needs at least two pairs")]
    TooShort,
    #[error("correlation is undefined for a constant vector")]
    ConstantVector,
    #[error("baseline value is zero; ratio undefined")]
    UndefinedRatio,
    #[error("average test length {atl} outside (0, {ttl}]")]
    LengthOutOfRange { atl: f64, ttl: usize },
}

/// Estimates paired with the values they estimate.
#[derive(Debug, Clone, Copy)]
pub struct PairedVector<'a> {
    estimates: &'a [f64],
    truths: &'a [f64],
}

impl<'a> PairedVector<'a> {
    pub fn new(estimates: &'a [f64], truths: &'a [f64]) -> Result<Self, MetricError> {
        if estimates.len() != truths.len() {
            return Err(MetricError::LengthMismatch(estimates.len(), truths.len()));
        }
        if estimates.is_empty() {
            return Err(MetricError::Empty);
        }
        if estimates.iter().chain(truths).any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        Ok(Self { estimates, truths })
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn estimates(&self) -> &'a [f64] {
        self.estimates
    }

    pub fn truths(&self) -> &'a [f64] {
        self.truths
    }

    fn diffs(&self) -> impl Iterator<Item = f64> + 'a {
        self.estimates.iter().zip(self.truths).map(|(e, t)| e - t)
    }
}

pub fn bias(v: &PairedVector<'_>) -> f64 {
    v.diffs().sum::<f64>() / v.len() as f64
}

pub fn rmse(v: &PairedVector<'_>) -> f64 {
    libm::sqrt(v.diffs().map(|d| d * d).sum::<f64>() / v.len() as f64)
}

/// Product-moment correlation via streaming co-moments.
pub fn pearson(v: &PairedVector<'_>) -> Result<f64, MetricError> {
    if v.len() < 2 {
        return Err(MetricError::TooShort);
    }
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, (&x, &y)) in v.estimates.iter().zip(v.truths).enumerate() {
        let n = (k + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(MetricError::ConstantVector);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks in ascending order; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Rank correlation with average ranks for ties.
pub fn spearman(v: &PairedVector<'_>) -> Result<f64, MetricError> {
    let re = average_ranks(v.estimates);
    let rt = average_ranks(v.truths);
    pearson(&PairedVector::new(&re, &rt)?)
}

/// Leaderboard positions (1 = highest value). Ties are broken by `tiebreak`,
/// lower first; `tiebreak` defaults to input order when `None`.
pub fn leaderboard_ranks(values: &[f64], tiebreak: Option<&[f64]>) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b].total_cmp(&values[a]).then_with(|| match tiebreak {
            Some(t) => t[a].total_cmp(&t[b]),
            None => a.cmp(&b),
        })
    });
    let mut ranks = vec![0.0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = (pos + 1) as f64;
    }
    ranks
}

/// Agreement of two leaderboards. The reference ranks break ties by input
/// order; the comparison ranks break ties by the reference position, so the
/// result is 1 exactly when no pair of entries is strictly reversed.
pub fn leaderboard_rho(reference: &[f64], other: &[f64]) -> Result<f64, MetricError> {
    PairedVector::new(reference, other)?;
    let r_ref = leaderboard_ranks(reference, None);
    let r_other = leaderboard_ranks(other, Some(&r_ref));
    pearson(&PairedVector::new(&r_ref, &r_other)?)
}

pub fn atl(lengths: &[usize]) -> Result<f64, MetricError> {
    if lengths.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(lengths.iter().sum::<usize>() as f64 / lengths.len() as f64)
}

/// Test length reduction: `(1 - atl/ttl) * 100`.
pub fn tlr(atl: f64, ttl: usize) -> Result<f64, MetricError> {
    if !(atl > 0.0) || atl > ttl as f64 {
        return Err(MetricError::LengthOutOfRange { atl, ttl });
    }
    Ok((1.0 - atl / ttl as f64) * 100.0)
}

fn relative(condition: f64, full: f64) -> Result<f64, MetricError> {
    if full == 0.0 {
        return Err(MetricError::UndefinedRatio);
    }
    if !condition.is_finite() || !full.is_finite() {
        return Err(MetricError::NonFinite);
    }
    Ok((1.0 - libm::fabs(condition / full)) * 100.0)
}

/// Bias increase rate; positive means smaller absolute bias than the baseline.
pub fn bir(bias_condition: f64, bias_full: f64) -> Result<f64, MetricError> {
    relative(bias_condition, bias_full)
}

/// RMSE increase rate; positive means smaller RMSE than the baseline.
pub fn rir(rmse_condition: f64, rmse_full: f64) -> Result<f64, MetricError> {
    relative(rmse_condition, rmse_full)
}

/// Correlation loss rate; lower is better.
pub fn clr(cor_condition: f64, cor_full: f64) -> Result<f64, MetricError> {
    relative(cor_condition, cor_full)
}

/// Percentage reduction of a total, `(1 - reduced/full) * 100`.
pub fn reduction(reduced: f64, full: f64) -> Result<f64, MetricError> {
    relative(reduced, full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv<'a>(e: &'a [f64], t: &'a [f64]) -> PairedVector<'a> {
        PairedVector::new(e, t).unwrap()
    }

    #[test]
    fn bias_and_rmse_examples() {
        assert_eq!(bias(&pv(&[0.1, -0.1], &[0.0, 0.0])), 0.0);
        assert_eq!(bias(&pv(&[0.3, 0.7], &[0.3, 0.7])), 0.0);
        assert!((bias(&pv(&[1.2], &[1.0])) - 0.2).abs() < 1e-15);
        assert!((rmse(&pv(&[0.1, -0.1], &[0.0, 0.0])) - 0.1).abs() < 1e-15);
        assert_eq!(rmse(&pv(&[0.3, 0.7], &[0.3, 0.7])), 0.0);
        assert!((rmse(&pv(&[1.0, 0.0], &[0.0, 0.0])) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn input_validation() {
        assert_eq!(PairedVector::new(&[], &[]).unwrap_err(), MetricError::Empty);
        assert!(matches!(
            PairedVector::new(&[1.0], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch(1, 2))
        ));
        assert_eq!(
            PairedVector::new(&[f64::NAN], &[1.0]).unwrap_err(),
            MetricError::NonFinite
        );
        assert_eq!(pearson(&pv(&[1.0], &[2.0])).unwrap_err(), MetricError::TooShort);
        assert_eq!(
            pearson(&pv(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0])).unwrap_err(),
            MetricError::ConstantVector
        );
        assert_eq!(
            spearman(&pv(&[1.0, 2.0], &[5.0, 5.0])).unwrap_err(),
            MetricError::ConstantVector
        );
        assert_eq!(atl(&[]).unwrap_err(), MetricError::Empty);
    }

    #[test]
    fn correlation_extremes() {
        let t = [0.3, -1.2, 2.0, 0.7, 1.1];
        let neg: Vec<f64> = t.iter().map(|x| -x).collect();
        assert!((pearson(&pv(&t, &t)).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&pv(&neg, &t)).unwrap() + 1.0).abs() < 1e-15);
        let cubed: Vec<f64> = t.iter().map(|x| x * x * x + 3.0).collect();
        assert_eq!(spearman(&pv(&cubed, &t)).unwrap(), 1.0);
        assert_eq!(spearman(&pv(&neg, &t)).unwrap(), -1.0);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(
            leaderboard_ranks(&[10.0, 20.0, 20.0, 5.0], None),
            vec![3.0, 1.0, 2.0, 4.0]
        );
        assert_eq!(
            leaderboard_ranks(&[10.0, 20.0, 20.0, 5.0], Some(&[1.0, 3.0, 2.0, 4.0])),
            vec![3.0, 2.0, 1.0, 4.0]
        );
    }

    #[test]
    fn leaderboard_rho_counts_only_reversals() {
        let full = [2.0, 1.5, 1.5, 1.0, 0.5];
        let tied_cat = [2.4, 1.4, 1.4, 1.4, 0.2];
        assert_eq!(leaderboard_rho(&full, &tied_cat).unwrap(), 1.0);
        assert!(spearman(&pv(&full, &tied_cat)).unwrap() < 1.0);
        let swapped = [2.4, 1.3, 1.4, 1.2, 0.2];
        assert!(leaderboard_rho(&full, &swapped).unwrap() < 1.0);
    }

    #[test]
    fn test_length_metrics() {
        assert_eq!(atl(&[50, 50]).unwrap(), 50.0);
        assert_eq!(atl(&[1]).unwrap(), 1.0);
        assert_eq!(alloc::format!("{:.1}", tlr(58.3, 2815).unwrap()), "97.9");
        assert_eq!(alloc::format!("{:.1}", tlr(37.0, 2815).unwrap()), "98.7");
        assert_eq!(tlr(2815.0, 2815).unwrap(), 0.0);
        assert!(tlr(2816.0, 2815).is_err());
        assert!(tlr(0.0, 2815).is_err());
    }

    #[test]
    fn relative_metric_examples() {
        assert!((bir(0.0007, -0.0014).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(bir(-0.0014, -0.0014).unwrap(), 0.0);
        assert!((bir(-0.0028, -0.0014).unwrap() + 100.0).abs() < 1e-9);
        assert_eq!(bir(0.01, 0.0).unwrap_err(), MetricError::UndefinedRatio);
        assert_eq!(rir(0.1, 0.1).unwrap(), 0.0);
        assert!((rir(0.2, 0.1).unwrap() + 100.0).abs() < 1e-9);
        assert!((rir(0.05, 0.1).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(rir(0.05, 0.0).unwrap_err(), MetricError::UndefinedRatio);
        assert_eq!(clr(0.9995, 0.9995).unwrap(), 0.0);
        // (1 - 0.96 / 0.9995) * 100
        assert!((clr(0.96, 0.9995).unwrap() - 3.951_975_987_994_005).abs() < 1e-9);
        assert!((clr(0.5, 1.0).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(clr(0.5, 0.0).unwrap_err(), MetricError::UndefinedRatio);
    }

    fn two_pass_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    proptest! {
        #[test]
        fn pearson_matches_two_pass(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1000)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.0 * 0.7 + p.1).collect();
            let got = pearson(&pv(&x, &y)).unwrap();
            prop_assert!((got - two_pass_pearson(&x, &y)).abs() < 1e-12);
        }

        #[test]
        fn rmse_dominates_bias(pairs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..60)) {
            let e: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let t: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let v = pv(&e, &t);
            prop_assert!(rmse(&v) + 1e-12 >= bias(&v).abs());
        }

        #[test]
        fn bias_rmse_permutation_invariant(pairs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..40), rot in 0usize..40) {
            let e: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let t: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let k = rot % e.len();
            let mut e2 = e.clone(); e2.rotate_left(k);
            let mut t2 = t.clone(); t2.rotate_left(k);
            prop_assert!((bias(&pv(&e, &t)) - bias(&pv(&e2, &t2))).abs() < 1e-12);
            prop_assert!((rmse(&pv(&e, &t)) - rmse(&pv(&e2, &t2))).abs() < 1e-12);
        }

        #[test]
        fn correlation_transform_invariance(pairs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3..50), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
            let v = pv(&x, &y);
            if let Ok(r) = pearson(&v) {
                let xa: Vec<f64> = x.iter().map(|a| a * scale + shift).collect();
                prop_assert!((pearson(&pv(&xa, &y)).unwrap() - r).abs() < 1e-9);
                let rho = spearman(&v).unwrap();
                let xm: Vec<f64> = x.iter().map(|a| a.exp()).collect();
                prop_assert!((spearman(&pv(&xm, &y)).unwrap() - rho).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spearman_with_ties_matches_brute_force() {
        let x = [1.0, 2.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.5, 1.0, 3.0, 3.0, 5.0, 4.0];
        // brute force: rank by counting smaller and equal entries
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let eq = v.iter().filter(|b| *b == a).count() as f64;
                    less + (eq + 1.0) / 2.0
                })
                .collect()
        };
        let oracle = two_pass_pearson(&rank(&x), &rank(&y));
        assert!((spearman(&pv(&x, &y)).unwrap() - oracle).abs() < 1e-12);
        // frozen from an independent numpy evaluation: 55/68
        assert!((oracle - 55.0 / 68.0).abs() < 1e-12, "{oracle}");
    }
}
