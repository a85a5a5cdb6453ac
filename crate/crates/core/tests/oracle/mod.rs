//! Independent posterior integration: composite Simpson on 10,001 nodes,
//! likelihood evaluated directly with `exp`, no shared code with the crate.
#![allow(dead_code)]

pub const NODES: usize = 10_001;

/// (theta_hat, se) for `(a, b, correct)` responses under a N(0, 1) prior
/// truncated to `[lo, hi]`.
pub fn eap(responses: &[(f64, f64, bool)], lo: f64, hi: f64) -> (f64, f64) {
    let h = (hi - lo) / (NODES - 1) as f64;
    let logs: Vec<f64> = (0..NODES)
        .map(|k| {
            let t = lo + h * k as f64;
            let mut l = -0.5 * t * t;
            for &(a, b, u) in responses {
                let p = 1.0 / (1.0 + (-a * (t - b)).exp());
                let p = p.clamp(1e-15, 1.0 - 1e-15);
                l += if u { p.ln() } else { (1.0 - p).ln() };
            }
            l
        })
        .collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (k, l) in logs.iter().enumerate() {
        let w = if k == 0 || k == NODES - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let t = lo + h * k as f64;
        let d = w * (l - peak).exp();
        m0 += d;
        m1 += d * t;
        m2 += d * t * t;
    }
    let mean = m1 / m0;
    let var = (m2 / m0 - mean * mean).max(0.0);
    (mean, var.sqrt())
}
