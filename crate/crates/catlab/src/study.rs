//! Parallel study execution and the study's CSV artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use catlab_core::simulation::{tradeoff_table, CellRow, ResponseMode, StudyDesign, StudyError, StudyPlan, StudyReport};
use rayon::prelude::*;

use crate::digest::{sha256_hex, RunManifest};

/// Runs every cell on `parallelism` threads. Rows are gathered by cell
/// index, so the report does not depend on the thread count; on failure the
/// lowest-indexed failing cell is reported.
pub fn run_study_parallel(design: StudyDesign<'_>, parallelism: usize) -> Result<StudyReport, StudyError> {
    let plan = StudyPlan::new(design)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<CellRow, StudyError>> = pool.install(|| {
        (0..plan.cell_count())
            .into_par_iter()
            .map(|i| plan.run_cell(i))
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    plan.assemble(rows)
}

/// Canonical text of everything that determines a study's output.
/// Thread count is left out on purpose.
pub fn design_config(design: &StudyDesign<'_>, bank_digest: &str) -> String {
    let g = &design.grid;
    let mut s = String::new();
    let _ = writeln!(s, "bank_digest = \"{bank_digest}\"");
    let _ = writeln!(
        s,
        "grid = \"{}:{}:{}x{}\"",
        g.theta_min, g.theta_max, g.step, g.replications
    );
    let _ = writeln!(s, "seed = {}", g.seed);
    let _ = writeln!(s, "baseline = {}", design.include_full_bank_baseline);
    let mode = match design.response_mode {
        ResponseMode::Fresh => "fresh",
        ResponseMode::Shared => "shared",
    };
    let _ = writeln!(s, "responses = \"{mode}\"");
    let q = &design.quadrature;
    let _ = writeln!(s, "quadrature = \"{} points on [{}, {}]\"", q.len(), q.min(), q.max());
    let conds: Vec<String> = design
        .conditions
        .iter()
        .map(|c| format!("\"{}={}/{}\"", c.label, c.strategy, c.rule))
        .collect();
    let _ = writeln!(s, "conditions = [{}]", conds.join(", "));
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn render_cells(report: &StudyReport) -> String {
    let mut out = String::from("condition,simulee,theta_true,theta_hat,se,length\n");
    for c in report.all() {
        for r in &c.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.label, r.simulee, r.theta_true, r.theta_hat, r.se, r.length
            );
        }
    }
    out
}

pub fn render_aggregate(report: &StudyReport) -> String {
    let mut out = String::from("condition,bias,rmse,cor,atl,tlr,bir,rir,clr\n");
    for c in report.all() {
        let r = &c.relatives;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.label,
            c.bias,
            c.rmse,
            opt(c.cor),
            c.atl,
            opt(r.tlr),
            opt(r.bir),
            opt(r.rir),
            opt(r.clr)
        );
    }
    out
}

pub fn render_tradeoff(report: &StudyReport) -> Result<String, StudyError> {
    let mut out = String::from("condition,tlr,bir,rir,clr\n");
    for row in tradeoff_table(report)? {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.label,
            opt(row.tlr),
            opt(row.bir),
            opt(row.rir),
            opt(row.clr)
        );
    }
    Ok(out)
}

/// Rounded, aligned aggregate table for the terminal.
pub fn pretty_aggregate(report: &StudyReport) -> String {
    let pct = |v: Option<f64>| v.map_or_else(|| "N/A".into(), |x| format!("{x:.1}%"));
    let mut out = format!(
        "{:<16} {:>8} {:>7} {:>7} {:>8} {:>7} {:>9} {:>9} {:>7}\n",
        "condition", "bias", "rmse", "cor", "atl", "tlr", "bir", "rir", "clr"
    );
    for c in report.all() {
        let r = &c.relatives;
        let _ = writeln!(
            out,
            "{:<16} {:>8.4} {:>7.4} {:>7} {:>8.1} {:>7} {:>9} {:>9} {:>7}",
            c.label,
            c.bias,
            c.rmse,
            c.cor.map_or_else(|| "N/A".into(), |x| format!("{x:.4}")),
            c.atl,
            pct(r.tlr),
            pct(r.bir),
            pct(r.rir),
            pct(r.clr)
        );
    }
    out
}

/// Paths and combined digest of a written study.
#[derive(Debug, Clone)]
pub struct StudyArtifacts {
    pub cells: PathBuf,
    pub aggregate: PathBuf,
    pub tradeoff: Option<PathBuf>,
    pub manifest: PathBuf,
    /// Digest over the artifact bytes, in the order above.
    pub report_digest: String,
}

pub fn write_study(dir: &Path, report: &StudyReport, manifest: &RunManifest) -> Result<StudyArtifacts> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let header = manifest.header_line();
    let mut all = Vec::new();
    let mut put = |name: &str, body: String| -> Result<PathBuf> {
        let path = dir.join(name);
        let bytes = format!("{header}{body}");
        std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        all.extend_from_slice(bytes.as_bytes());
        Ok(path)
    };
    let cells = put("cells.csv", render_cells(report))?;
    let aggregate = put("aggregate.csv", render_aggregate(report))?;
    let tradeoff = match render_tradeoff(report) {
        Ok(t) => Some(put("tradeoff.csv", t)?),
        Err(StudyError::MissingBaseline) => None,
        Err(e) => return Err(e.into()),
    };
    let manifest_path = dir.join("manifest.toml");
    let manifest_text = manifest.to_toml();
    std::fs::write(&manifest_path, &manifest_text).with_context(|| format!("writing {}", manifest_path.display()))?;
    all.extend_from_slice(manifest_text.as_bytes());
    Ok(StudyArtifacts {
        cells,
        aggregate,
        tradeoff,
        manifest: manifest_path,
        report_digest: sha256_hex(&all),
    })
}
