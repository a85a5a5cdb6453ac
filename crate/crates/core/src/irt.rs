//! Two-parameter logistic response model and its Fisher information.

use crate::item::ItemParameters;

/// Probabilities fed into log-likelihoods are kept inside `[P_FLOOR, 1 - P_FLOOR]`.
pub const P_FLOOR: f64 = 1e-15;

/// Latent proficiency on the calibrated scale.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Theta(pub f64);

impl Theta {
    pub const ZERO: Theta = Theta(0.0);

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for Theta {
    fn from(v: f64) -> Self {
        Theta(v)
    }
}

/// Logistic function in the sign-split form, so `exp` only ever sees a
/// non-positive argument.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `P(correct | theta) = exp(a(theta - b)) / (1 + exp(a(theta - b)))`.
#[inline]
pub fn prob_correct(item: &ItemParameters, theta: Theta) -> f64 {
    logistic(item.discrimination * (theta.0 - item.difficulty))
}

/// Fisher information `a^2 p (1 - p)` of one item at `theta`.
#[inline]
pub fn item_information(item: &ItemParameters, theta: Theta) -> f64 {
    information(item.discrimination, item.difficulty, theta.0)
}

/// [`item_information`] on bare parameters; bit-identical to it.
#[inline]
pub fn information(a: f64, b: f64, theta: f64) -> f64 {
    let p = logistic(a * (theta - b));
    a * a * p * (1.0 - p)
}

/// Sum of item informations; zero for an empty test.
pub fn test_information<'a, I>(items: I, theta: Theta) -> f64
where
    I: IntoIterator<Item = &'a ItemParameters>,
{
    items.into_iter().map(|item| item_information(item, theta)).sum()
}

/// Log-probabilities `(ln p, ln(1 - p))` with `p` clamped away from 0 and 1.
#[inline]
pub fn log_prob_pair(item: &ItemParameters, theta: Theta) -> (f64, f64) {
    let p = prob_correct(item, theta).clamp(P_FLOOR, 1.0 - P_FLOOR);
    (libm::log(p), libm::log1p(-p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn item(a: f64, b: f64) -> ItemParameters {
        ItemParameters::new("t", a, b)
    }

    #[test]
    fn midpoint_is_one_half() {
        assert_eq!(prob_correct(&item(1.0, 0.0), Theta(0.0)), 0.5);
        assert_eq!(prob_correct(&item(2.5, 0.7), Theta(0.7)), 0.5);
    }

    #[test]
    fn one_logit_above_difficulty() {
        // e / (1 + e)
        let p = prob_correct(&item(1.0, 0.0), Theta(1.0));
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-6);
    }

    #[test]
    fn information_at_peak() {
        assert_eq!(item_information(&item(1.0, 0.0), Theta(0.0)), 0.25);
        assert_eq!(item_information(&item(2.0, 1.0), Theta(1.0)), 1.0);
    }

    #[test]
    fn information_off_peak_matches_direct_formula() {
        // Oracle: p = 1 / (1 + exp(-a (theta - b))) evaluated term by term.
        let (a, b, t) = (1.01_f64, -0.01_f64, 2.0_f64);
        let z = a * (t - b);
        let p = 1.0 / (1.0 + (-z).exp());
        let oracle = a * a * p * (1.0 - p);
        let got = item_information(&item(a, b), Theta(t));
        assert!((got - oracle).abs() < 1e-15, "{got} vs {oracle}");
        // frozen from a 40-digit evaluation of the same formula
        assert!((got - 0.104_666_754_193_883_5).abs() < 1e-13, "{got}");
    }

    #[test]
    fn test_information_is_additive() {
        let one = item(1.3, -0.2);
        assert_eq!(test_information(core::iter::empty(), Theta(0.3)), 0.0);
        assert_eq!(test_information([&one], Theta(0.3)), item_information(&one, Theta(0.3)));
        let many: Vec<_> = (0..7).map(|_| one.clone()).collect();
        let sum = test_information(&many, Theta(0.3));
        assert!((sum - 7.0 * item_information(&one, Theta(0.3))).abs() < 1e-14);
    }

    #[test]
    fn saturated_logits_stay_finite() {
        for z in [-50.0, -30.0, 30.0, 50.0, 800.0, -800.0] {
            let p = prob_correct(&item(1.0, 0.0), Theta(z));
            assert!(p.is_finite() && (0.0..=1.0).contains(&p), "{z} -> {p}");
            let (lp, lq) = log_prob_pair(&item(1.0, 0.0), Theta(z));
            assert!(lp.is_finite() && lq.is_finite());
        }
    }

    proptest! {
        #[test]
        fn monotone_in_theta(a in 0.05f64..4.0, b in -3.0f64..3.0, t1 in -4.0f64..4.0, d in 1e-3f64..4.0) {
            let it = item(a, b);
            prop_assert!(prob_correct(&it, Theta(t1)) < prob_correct(&it, Theta(t1 + d)));
        }

        #[test]
        fn logistic_symmetry(a in 0.05f64..4.0, b in -3.0f64..3.0, d in -10.0f64..10.0) {
            let it = item(a, b);
            let s = prob_correct(&it, Theta(b + d)) + prob_correct(&it, Theta(b - d));
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn information_peaks_at_difficulty(a in 0.2f64..3.0, b in -3.0f64..3.0) {
            let it = item(a, b);
            let step = 1e-3;
            let (mut best_t, mut best_i) = (0.0, f64::NEG_INFINITY);
            let mut k = 0;
            loop {
                let t = -4.0 + step * k as f64;
                if t > 4.0 { break; }
                let i = item_information(&it, Theta(t));
                if i > best_i { best_i = i; best_t = t; }
                k += 1;
            }
            prop_assert!((best_t - b).abs() <= step + 1e-12);
            prop_assert!((item_information(&it, Theta(b)) - a * a / 4.0).abs() < 1e-9);
            prop_assert!(best_i <= a * a / 4.0 + 1e-12);
        }
    }
}
