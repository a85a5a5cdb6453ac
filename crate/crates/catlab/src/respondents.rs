//! `--respondent` values and scripted answer files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use catlab_core::respond::ScriptedRespondent;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub enum RespondentSpec {
    /// `sim:<theta>`
    Simulated(f64),
    /// `script:<answers.csv>`
    Script(PathBuf),
    /// `llm`, configured by the endpoint flags.
    Llm,
}

impl FromStr for RespondentSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("llm") {
            return Ok(Self::Llm);
        }
        match s.split_once(':') {
            Some(("sim", t)) => {
                let theta: f64 = t.trim().parse().map_err(|e| anyhow!("sim theta `{t}`: {e}"))?;
                if !theta.is_finite() {
                    bail!("sim theta must be finite");
                }
                Ok(Self::Simulated(theta))
            }
            Some(("script", p)) if !p.is_empty() => Ok(Self::Script(p.into())),
            _ => bail!("unknown respondent `{s}` (expected sim:<theta>, script:<file> or llm)"),
        }
    }
}

impl RespondentSpec {
    /// Default label in summaries and logs.
    pub fn default_name(&self, model: Option<&str>) -> String {
        match self {
            Self::Simulated(t) => format!("sim:{t}"),
            Self::Script(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "script".into()),
            Self::Llm => model.unwrap_or("llm").to_string(),
        }
    }
}

#[derive(Deserialize)]
struct ScriptRow {
    item_id: String,
    score: u8,
}

/// Reads `item_id,score` rows (score 0 or 1).
pub fn load_script(path: &Path) -> Result<ScriptedRespondent> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut script = ScriptedRespondent::new();
    for (i, row) in reader.deserialize::<ScriptRow>().enumerate() {
        let row = row.with_context(|| format!("{}, row {}", path.display(), i + 2))?;
        if row.score > 1 {
            bail!("{}, row {}: score must be 0 or 1", path.display(), i + 2);
        }
        script.insert(row.item_id, row.score == 1);
    }
    Ok(script)
}
