//! Leaderboard summary rows and the full-bank vs CAT comparison.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use catlab_core::metrics::{self, PairedVector};
use serde::{Deserialize, Serialize};

pub const SUMMARY_HEADER: &str = "model,theta,accuracy,length,tokens,time_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub theta: f64,
    /// Fraction in [0, 1].
    pub accuracy: f64,
    pub length: usize,
    pub tokens: u64,
    pub time_s: f64,
}

impl SummaryRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.4},{:.4},{},{},{:.3}",
            self.model, self.theta, self.accuracy, self.length, self.tokens, self.time_s
        )
    }
}

#[derive(Deserialize)]
struct RawRow {
    model: String,
    theta: f64,
    accuracy: String,
    length: usize,
    tokens: u64,
    time_s: f64,
}

/// Accepts `0.9069` or `90.69%`.
fn parse_accuracy(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.strip_suffix('%') {
        Some(p) => p.trim().parse::<f64>()? / 100.0,
        None => s.parse::<f64>()?,
    };
    if !(0.0..=1.0).contains(&v) {
        bail!("accuracy {s} outside [0, 1]");
    }
    Ok(v)
}

pub fn read_summaries(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_summaries(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_summaries(text: &str) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<RawRow>().enumerate() {
        let raw = rec.with_context(|| format!("summary row {}", i + 1))?;
        rows.push(SummaryRow {
            accuracy: parse_accuracy(&raw.accuracy).with_context(|| format!("model `{}`", raw.model))?,
            model: raw.model,
            theta: raw.theta,
            length: raw.length,
            tokens: raw.tokens,
            time_s: raw.time_s,
        });
    }
    Ok(rows)
}

pub fn render_summaries(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// One respondent present in both summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRow {
    pub model: String,
    pub reference: SummaryRow,
    pub other: SummaryRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub pairs: Vec<PairedRow>,
    pub pearson_theta: f64,
    /// Spearman on average ranks.
    pub spearman_theta: f64,
    /// Spearman with leaderboard ranks: ties in the reference broken by row
    /// order, ties in the other column broken by reference rank.
    pub leaderboard_rho: f64,
    pub pearson_accuracy: f64,
    /// Reductions as ratios of the means, in percent. `None` when the
    /// reference spent nothing (simulated or scripted respondents).
    pub token_reduction: Option<f64>,
    pub time_reduction: Option<f64>,
    pub length_reduction: f64,
    pub mean_length_reference: f64,
    pub mean_length_other: f64,
}

/// Pairs rows by model name, keeping the reference file's order.
pub fn compare(reference: &[SummaryRow], other: &[SummaryRow]) -> Result<Comparison> {
    let by_model: HashMap<&str, &SummaryRow> = other.iter().map(|r| (r.model.as_str(), r)).collect();
    let pairs: Vec<PairedRow> = reference
        .iter()
        .filter_map(|r| {
            by_model.get(r.model.as_str()).map(|o| PairedRow {
                model: r.model.clone(),
                reference: r.clone(),
                other: (*o).clone(),
            })
        })
        .collect();
    if pairs.is_empty() {
        bail!("the summaries share no respondents");
    }
    if pairs.len() < 2 {
        bail!("need at least two shared respondents to correlate, found 1");
    }
    let col = |f: &dyn Fn(&SummaryRow) -> f64, side: bool| -> Vec<f64> {
        pairs
            .iter()
            .map(|p| f(if side { &p.reference } else { &p.other }))
            .collect()
    };
    let (t_ref, t_oth) = (col(&|r| r.theta, true), col(&|r| r.theta, false));
    let (a_ref, a_oth) = (col(&|r| r.accuracy, true), col(&|r| r.accuracy, false));
    let theta_pv = PairedVector::new(&t_oth, &t_ref)?;
    let acc_pv = PairedVector::new(&a_oth, &a_ref)?;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let tok = (
        mean(col(&|r| r.tokens as f64, true)),
        mean(col(&|r| r.tokens as f64, false)),
    );
    let time = (mean(col(&|r| r.time_s, true)), mean(col(&|r| r.time_s, false)));
    let len = (
        mean(col(&|r| r.length as f64, true)),
        mean(col(&|r| r.length as f64, false)),
    );
    Ok(Comparison {
        pearson_theta: metrics::pearson(&theta_pv)?,
        spearman_theta: metrics::spearman(&theta_pv)?,
        leaderboard_rho: metrics::leaderboard_rho(&t_ref, &t_oth)?,
        pearson_accuracy: metrics::pearson(&acc_pv)?,
        token_reduction: (tok.0 != 0.0).then(|| metrics::reduction(tok.1, tok.0)).transpose()?,
        time_reduction: (time.0 != 0.0)
            .then(|| metrics::reduction(time.1, time.0))
            .transpose()?,
        length_reduction: metrics::reduction(len.1, len.0)?,
        mean_length_reference: len.0,
        mean_length_other: len.1,
        pairs,
    })
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut out = String::from(
            "model,theta_ref,theta_other,accuracy_ref,accuracy_other,length_ref,length_other,tokens_ref,tokens_other,time_ref,time_other\n",
        );
        for p in &self.pairs {
            let (r, o) = (&p.reference, &p.other);
            let _ = writeln!(
                out,
                "{},{:.4},{:.4},{:.4},{:.4},{},{},{},{},{:.3},{:.3}",
                p.model,
                r.theta,
                o.theta,
                r.accuracy,
                o.accuracy,
                r.length,
                o.length,
                r.tokens,
                o.tokens,
                r.time_s,
                o.time_s
            );
        }
        let _ = writeln!(out, "\nstatistic,value");
        let _ = writeln!(out, "respondents,{}", self.pairs.len());
        let _ = writeln!(out, "pearson_theta,{:.4}", self.pearson_theta);
        let _ = writeln!(out, "spearman_theta,{:.4}", self.spearman_theta);
        let _ = writeln!(out, "leaderboard_rho,{:.4}", self.leaderboard_rho);
        let _ = writeln!(out, "pearson_accuracy,{:.4}", self.pearson_accuracy);
        let _ = writeln!(out, "mean_length_ref,{:.2}", self.mean_length_reference);
        let _ = writeln!(out, "mean_length_other,{:.2}", self.mean_length_other);
        let _ = writeln!(out, "length_reduction_pct,{:.1}", self.length_reduction);
        let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.1}"));
        let _ = writeln!(out, "token_reduction_pct,{}", pct(self.token_reduction));
        let _ = writeln!(out, "time_reduction_pct,{}", pct(self.time_reduction));
        out
    }
}
