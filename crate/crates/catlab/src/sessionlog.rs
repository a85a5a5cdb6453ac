//! Append-only JSONL session logs and resuming from them.
//!
//! A log is a header line, one line per administered item (flushed as soon
//! as the item is scored), and a footer carrying the summary row. Resuming
//! replays the recorded answers in order and only asks the live respondent
//! once the recording runs out.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use catlab_core::engine::{AdministeredItem, SessionObserver, SessionResult};
use catlab_core::estimation::AbilityEstimate;
use catlab_core::item::ItemParameters;
use catlab_core::respond::{AnswerOutcome, Respondent, RespondentError};
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::summary::SummaryRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub tool_version: String,
    /// `cat` or `full`.
    pub mode: String,
    pub model: String,
    pub bank_digest: String,
    pub rule: Option<String>,
    pub strategy: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogItem {
    pub seq: usize,
    pub item_id: String,
    pub score: u8,
    pub theta_hat: f64,
    pub se: f64,
    pub tokens_prompt: u64,
    pub tokens_completion: u64,
    pub latency_s: f64,
    pub raw_text_digest: Option<String>,
    #[serde(default)]
    pub chosen_letter: Option<char>,
    #[serde(default = "yes")]
    pub parse_ok: bool,
    #[serde(default)]
    pub usage_missing: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFooter {
    #[serde(flatten)]
    pub summary: SummaryRow,
    pub se: f64,
    pub stop_reason: String,
    pub converged: bool,
    pub tokens_prompt: u64,
    pub tokens_completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Header(LogHeader),
    Item(LogItem),
    Footer(LogFooter),
}

impl LogItem {
    pub fn new(seq: usize, a: &AdministeredItem, est: &AbilityEstimate) -> Self {
        let o = &a.outcome;
        Self {
            seq,
            item_id: a.item_id.clone(),
            score: o.score(),
            theta_hat: est.theta_hat,
            se: est.se,
            tokens_prompt: o.tokens_prompt,
            tokens_completion: o.tokens_completion,
            latency_s: o.latency_s,
            raw_text_digest: o.raw_text.as_deref().map(|t| sha256_hex(t.as_bytes())),
            chosen_letter: o.chosen_letter,
            parse_ok: o.parse_ok,
            usage_missing: o.usage_missing,
        }
    }

    /// The outcome as recorded; the raw text itself is not kept.
    pub fn outcome(&self) -> AnswerOutcome {
        AnswerOutcome {
            correct: self.score == 1,
            raw_text: None,
            chosen_letter: self.chosen_letter,
            parse_ok: self.parse_ok,
            tokens_prompt: self.tokens_prompt,
            tokens_completion: self.tokens_completion,
            latency_s: self.latency_s,
            usage_missing: self.usage_missing,
        }
    }
}

pub fn footer(model: &str, result: &SessionResult) -> LogFooter {
    LogFooter {
        summary: summary_row(model, result),
        se: result.final_estimate.se,
        stop_reason: result.stop_reason.to_string(),
        converged: result.converged,
        tokens_prompt: result.tokens_prompt,
        tokens_completion: result.tokens_completion,
    }
}

pub fn summary_row(model: &str, result: &SessionResult) -> SummaryRow {
    SummaryRow {
        model: model.into(),
        theta: result.final_estimate.theta_hat,
        accuracy: result.accuracy,
        length: result.length(),
        tokens: result.tokens_total(),
        time_s: result.time_total,
    }
}

/// Writes item lines as the engine reports them, flushing each one.
pub struct SessionLogWriter {
    file: File,
    /// Items up to this sequence number are already in the file.
    skip_through: usize,
    /// Set by the observer when the respondent flagged missing usage.
    pub usage_warnings: usize,
}

impl SessionLogWriter {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = Self {
            file,
            skip_through: 0,
            usage_warnings: 0,
        };
        w.write(&LogRecord::Header(header.clone()))?;
        Ok(w)
    }

    /// Continues a log whose first `recorded` items are already present.
    /// Any torn final line is cut off first.
    pub fn append(path: &Path, recorded: usize, valid_len: u64) -> Result<Self> {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        file.set_len(valid_len)?;
        let mut file = file;
        std::io::Seek::seek(&mut file, std::io::SeekFrom::End(0))?;
        Ok(Self {
            file,
            skip_through: recorded,
            usage_warnings: 0,
        })
    }

    /// Marks the first `n` items as present so the observer skips them.
    pub fn already_written(mut self, n: usize) -> Self {
        self.skip_through = n;
        self
    }

    pub fn write(&mut self, record: &LogRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }

    pub fn finish(mut self, footer: LogFooter) -> Result<()> {
        self.write(&LogRecord::Footer(footer))?;
        self.file.sync_all()?;
        Ok(())
    }
}

impl SessionObserver for SessionLogWriter {
    fn on_response(&mut self, seq: usize, item: &AdministeredItem, estimate: &AbilityEstimate) -> Result<(), String> {
        if item.outcome.usage_missing {
            self.usage_warnings += 1;
        }
        if seq <= self.skip_through {
            return Ok(());
        }
        self.write(&LogRecord::Item(LogItem::new(seq, item, estimate)))
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub header: LogHeader,
    pub items: Vec<LogItem>,
    pub footer: Option<LogFooter>,
    /// Byte length of the complete lines.
    pub valid_len: u64,
}

/// Reads a log, tolerating a torn (unterminated, unparsable) last line.
pub fn read_log(path: &Path) -> Result<ParsedLog> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(f);
    let mut header = None;
    let mut items = Vec::new();
    let mut footer = None;
    let mut valid_len = 0u64;
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        let record: LogRecord = match serde_json::from_str(line.trim_end()) {
            Ok(r) => r,
            Err(_) if !complete => break,
            Err(e) => bail!("{} line {lineno}: {e}", path.display()),
        };
        valid_len += n as u64;
        match record {
            LogRecord::Header(h) if lineno == 1 => header = Some(h),
            LogRecord::Header(_) => bail!("{} line {lineno}: unexpected second header", path.display()),
            LogRecord::Item(it) => {
                if footer.is_some() {
                    bail!("{} line {lineno}: item after footer", path.display());
                }
                if it.seq != items.len() + 1 {
                    bail!(
                        "{} line {lineno}: expected seq {}, found {}",
                        path.display(),
                        items.len() + 1,
                        it.seq
                    );
                }
                items.push(it);
            }
            LogRecord::Footer(f) => footer = Some(f),
        }
    }
    let header = header.with_context(|| format!("{}: missing header line", path.display()))?;
    Ok(ParsedLog {
        header,
        items,
        footer,
        valid_len,
    })
}

/// Replays recorded outcomes in order, then defers to `live`.
pub struct ReplayRespondent<R> {
    recorded: Vec<LogItem>,
    next: usize,
    live: Option<R>,
}

impl<R> ReplayRespondent<R> {
    pub fn new(recorded: Vec<LogItem>, live: Option<R>) -> Self {
        Self {
            recorded,
            next: 0,
            live,
        }
    }

    pub fn replayed(&self) -> usize {
        self.next.min(self.recorded.len())
    }
}

impl<R: Respondent> Respondent for ReplayRespondent<R> {
    fn answer(&mut self, item: &ItemParameters) -> Result<AnswerOutcome, RespondentError> {
        if let Some(rec) = self.recorded.get(self.next) {
            if rec.item_id != item.id {
                return Err(RespondentError::Configuration {
                    item_id: item.id.clone(),
                    message: format!(
                        "resume log has `{}` at seq {}; the session diverged from the recording",
                        rec.item_id, rec.seq
                    ),
                });
            }
            self.next += 1;
            return Ok(rec.outcome());
        }
        self.next += 1;
        match self.live.as_mut() {
            Some(live) => live.answer(item),
            None => Err(RespondentError::Unscripted {
                item_id: item.id.clone(),
            }),
        }
    }
}
