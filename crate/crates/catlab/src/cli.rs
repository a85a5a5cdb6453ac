//! Command-line front end.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use catlab_core::engine::{Engine, SessionResult};
use catlab_core::estimation::QuadratureGrid;
use catlab_core::item::{generate_synthetic_bank, BankSpec, ParamDist};
use catlab_core::respond::{Respondent, SimulatedRespondent};
use catlab_core::rng::derive_seed;
use catlab_core::selection::SelectionStrategy;
use catlab_core::simulation::{paper_condition_matrix, Condition, ResponseMode, SimuleeGrid, StudyDesign};
use catlab_core::stopping::StoppingRule;
use catlab_core::Theta;
use clap::{Args, Parser, Subcommand};

use crate::bankio::{bank_digest, load_bank, write_bank};
use crate::digest::{sha256_u64, RunManifest};
use crate::llm::{LlmEndpointConfig, LlmRespondent, DEFAULT_KEY_ENV};
use crate::respondents::{load_script, RespondentSpec};
use crate::sessionlog::{self, LogHeader, ParsedLog, ReplayRespondent, SessionLogWriter};
use crate::study::{design_config, pretty_aggregate, run_study_parallel, write_study};
use crate::summary::{compare, read_summaries, SUMMARY_HEADER};

#[derive(Parser, Debug)]
#[command(
    name = "catlab",
    version,
    about = "2PL computerized adaptive testing: banks, simulation studies, LLM sessions"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a synthetic bank from parameter moments.
    Genbank(GenbankArgs),
    /// Run a Monte Carlo recovery study.
    Simulate(SimulateArgs),
    /// Administer one CAT or full-bank session.
    Run(RunArgs),
    /// Compare two or more summary files (the first is the reference).
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct GenbankArgs {
    /// Number of items.
    #[arg(long)]
    pub n: usize,
    /// Discrimination mean,sd,min,max.
    #[arg(long, default_value = "1.01,0.08,0.44,1.52", allow_hyphen_values = true)]
    pub alpha: String,
    /// Difficulty mean,sd,min,max.
    #[arg(long, default_value = "-0.01,0.20,-1.11,1.44", allow_hyphen_values = true)]
    pub beta: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
    /// TOML file whose keys mirror these flags; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// min:max:step x replications.
    #[arg(long, default_value = "-3.5:3.5:0.2x100", allow_hyphen_values = true)]
    pub grid: String,
    /// `paper`, or `;`-separated conditions `[mfi/|rs/]<rule>` with rules
    /// `length:<n>` or `se:<x>[,min=<m>][,max=<M>]`.
    #[arg(long, default_value = "paper")]
    pub conditions: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Reuse one response per item per simulee across conditions.
    #[arg(long)]
    pub shared_responses: bool,
    /// Skip the full-bank baseline (relative metrics become N/A).
    #[arg(long)]
    pub no_baseline: bool,
    #[arg(short, long, default_value = "study-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// sim:<theta>, script:<answers.csv> or llm.
    #[arg(long)]
    pub respondent: String,
    #[arg(long, default_value = "se:0.316")]
    pub rule: String,
    #[arg(long, default_value = "mfi")]
    pub strategy: String,
    /// Administer every item in bank order instead of a CAT.
    #[arg(long)]
    pub full_bank: bool,
    /// Session seed; defaults to one derived from the respondent name.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Label used in the summary row and log.
    #[arg(long)]
    pub name: Option<String>,
    /// Session log to write.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue the session recorded in this log.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Append the summary row to this CSV (header written if new).
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = DEFAULT_KEY_ENV)]
    pub api_key_env: String,
    /// Per-request timeout, seconds.
    #[arg(long, default_value_t = 120.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    /// Seconds; multiplied by the attempt number.
    #[arg(long, default_value_t = 0.5)]
    pub retry_backoff: f64,
    /// Permit non-default sampling settings.
    #[arg(long)]
    pub allow_sampling_override: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Reference summary (e.g. full-bank) followed by one or more others.
    #[arg(required = true, num_args = 2..)]
    pub summaries: Vec<PathBuf>,
    /// Also write the comparison here.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Splices `--config` file entries in front of the explicit flags.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let pos = args.iter().position(|a| a == "--config");
    let Some(pos) = pos else {
        if let Some(i) = args.iter().position(|a| a.to_string_lossy().starts_with("--config=")) {
            let mut args = args;
            let path = args[i].to_string_lossy()["--config=".len()..].to_string();
            args[i] = "--config".into();
            args.insert(i + 1, path.into());
            return expand_config(args);
        }
        return Ok(args);
    };
    let path = args
        .get(pos + 1)
        .ok_or_else(|| anyhow!("--config needs a file"))?
        .clone();
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.to_string_lossy()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.to_string_lossy()))?;
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &toml::Value| -> Result<String> {
            Ok(match v {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                other => bail!("config key `{key}`: unsupported value {other}"),
            })
        };
        match &value {
            toml::Value::Boolean(true) => injected.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for v in items {
                    injected.push(format!("{flag}={}", scalar(v)?).into());
                }
            }
            v => injected.push(format!("{flag}={}", scalar(v)?).into()),
        }
    }
    // args[0] is the binary, args[1] the subcommand
    let mut out: Vec<OsString> = args[..2.min(args.len())].to_vec();
    out.extend(injected);
    out.extend(args[2.min(args.len())..].iter().enumerate().filter_map(|(i, a)| {
        let abs = i + 2;
        (abs != pos && abs != pos + 1).then(|| a.clone())
    }));
    Ok(out)
}

/// Parses and runs; returns the process exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

/// Bad flag values noticed after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Genbank(a) => cmd_genbank(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

fn parse_dist(name: &str, s: &str) -> Result<ParamDist> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--{name} `{s}`: {e}")))?;
    match v[..] {
        [mean, sd, min, max] => Ok(ParamDist::new(mean, sd, min, max)),
        _ => Err(usage(format!("--{name} needs mean,sd,min,max; got `{s}`"))),
    }
}

pub fn cmd_genbank(a: &GenbankArgs) -> Result<()> {
    let spec = BankSpec {
        n_items: a.n,
        alpha: parse_dist("alpha", &a.alpha)?,
        beta: parse_dist("beta", &a.beta)?,
        seed: a.seed,
    };
    let bank = generate_synthetic_bank(&spec).map_err(|e| usage(e.to_string()))?;
    write_bank(&a.out, &bank)?;
    println!(
        "wrote {} items to {} (sha256 {})",
        bank.len(),
        a.out.display(),
        bank_digest(&bank)?
    );
    Ok(())
}

/// `-3.5:3.5:0.2x100`.
pub fn parse_grid(s: &str, seed: u64) -> Result<SimuleeGrid> {
    let bad = || {
        usage(format!(
            "--grid `{s}`: expected min:max:step x reps, e.g. -3.5:3.5:0.2x100"
        ))
    };
    let (range, reps) = s.rsplit_once('x').ok_or_else(bad)?;
    let parts: Vec<f64> = range
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [theta_min, theta_max, step] = parts[..] else {
        return Err(bad());
    };
    let grid = SimuleeGrid {
        theta_min,
        theta_max,
        step,
        replications: reps.trim().parse().map_err(|_| bad())?,
        seed,
    };
    grid.levels().map_err(|e| usage(format!("--grid `{s}`: {e}")))?;
    Ok(grid)
}

pub fn parse_conditions(s: &str) -> Result<Vec<Condition>> {
    if s.trim().eq_ignore_ascii_case("paper") {
        return Ok(paper_condition_matrix());
    }
    s.split(';')
        .filter(|c| !c.trim().is_empty())
        .map(|c| {
            let c = c.trim();
            let (strategy, rule) = match c.split_once('/') {
                Some((st, r)) => (st.parse::<SelectionStrategy>().map_err(|e| usage(e.to_string()))?, r),
                None => (SelectionStrategy::MaxInfo, c),
            };
            let rule: StoppingRule = rule.parse().map_err(|e| usage(format!("condition `{c}`: {e}")))?;
            Ok(Condition::new(rule, strategy))
        })
        .collect()
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let grid = parse_grid(&a.grid, a.seed)?;
    let conditions = parse_conditions(&a.conditions)?;
    if conditions.is_empty() {
        return Err(usage("--conditions is empty"));
    }
    let bank = load_bank(&a.bank)?;
    let digest = bank_digest(&bank)?;
    let mut design = StudyDesign::new(&bank, grid, conditions);
    design.include_full_bank_baseline = !a.no_baseline;
    if a.shared_responses {
        design.response_mode = ResponseMode::Shared;
    }
    let config = design_config(&design, &digest);
    let manifest = RunManifest::new("simulate", a.seed, digest, config);
    let threads = a
        .parallel
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let started = std::time::SystemTime::now();
    let report = run_study_parallel(design, threads)?;
    let artifacts = write_study(&a.out, &report, &manifest)?;
    write_timing(&a.out, started)?;
    print!("{}", pretty_aggregate(&report));
    println!("report digest: sha256:{}", artifacts.report_digest);
    Ok(())
}

/// Wall-clock record kept apart from the digest-bearing artifacts.
fn write_timing(dir: &Path, started: std::time::SystemTime) -> Result<()> {
    let secs = |t: std::time::SystemTime| t.duration_since(std::time::UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let now = std::time::SystemTime::now();
    let text = format!(
        "started_unix = {:.3}\nfinished_unix = {:.3}\n",
        secs(started),
        secs(now)
    );
    std::fs::write(dir.join("timing.toml"), text)?;
    Ok(())
}

enum Live {
    Sim(Box<SimulatedRespondent>),
    Script(catlab_core::respond::ScriptedRespondent),
    Llm(Box<LlmRespondent>),
}

impl Respondent for Live {
    fn answer(
        &mut self,
        item: &catlab_core::ItemParameters,
    ) -> Result<catlab_core::AnswerOutcome, catlab_core::RespondentError> {
        match self {
            Live::Sim(r) => r.answer(item),
            Live::Script(r) => r.answer(item),
            Live::Llm(r) => r.answer(item),
        }
    }
}

fn build_llm(a: &RunArgs) -> Result<LlmRespondent> {
    let endpoint = a
        .endpoint
        .clone()
        .ok_or_else(|| usage("--respondent llm needs --endpoint"))?;
    let model = a.model.clone().ok_or_else(|| usage("--respondent llm needs --model"))?;
    let mut cfg = LlmEndpointConfig::new(endpoint, model);
    cfg.api_key = std::env::var(&a.api_key_env).ok().filter(|k| !k.is_empty());
    if a.timeout.is_nan() || a.timeout <= 0.0 {
        return Err(usage("--timeout must be positive"));
    }
    cfg.request_timeout = Duration::from_secs_f64(a.timeout);
    cfg.max_retries = a.max_retries;
    cfg.retry_backoff = Duration::from_secs_f64(a.retry_backoff.max(0.0));
    if a.temperature.is_some() || a.top_p.is_some() {
        if !a.allow_sampling_override {
            return Err(usage("--temperature/--top-p require --allow-sampling-override"));
        }
        cfg.temperature = a.temperature.unwrap_or(cfg.temperature);
        cfg.top_p = a.top_p.unwrap_or(cfg.top_p);
    }
    Ok(LlmRespondent::new(cfg))
}

/// Seed used when `--seed` is absent: derived from the respondent label so
/// each model gets its own first item.
pub fn default_session_seed(name: &str) -> u64 {
    derive_seed(0, sha256_u64(name.as_bytes()))
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let spec: RespondentSpec = a.respondent.parse().map_err(|e: anyhow::Error| usage(e.to_string()))?;
    let bank = load_bank(&a.bank)?;
    let digest = bank_digest(&bank)?;
    let name = a.name.clone().unwrap_or_else(|| spec.default_name(a.model.as_deref()));

    let resumed: Option<ParsedLog> = a.resume.as_deref().map(sessionlog::read_log).transpose()?;
    let (full_bank, rule, strategy, seed) = match &resumed {
        Some(log) => {
            let h = &log.header;
            if h.bank_digest != digest {
                bail!("resume log was recorded against a different bank");
            }
            let rule = h.rule.as_deref().map(str::parse::<StoppingRule>).transpose()?;
            let strategy = h.strategy.as_deref().map(str::parse::<SelectionStrategy>).transpose()?;
            (h.mode == "full", rule, strategy, h.seed)
        }
        None => {
            let rule: StoppingRule = a.rule.parse().map_err(|e| usage(format!("--rule: {e}")))?;
            let strategy: SelectionStrategy = a.strategy.parse().map_err(|e| usage(format!("--strategy: {e}")))?;
            let seed = a.seed.unwrap_or_else(|| default_session_seed(&name));
            (
                a.full_bank,
                (!a.full_bank).then_some(rule),
                (!a.full_bank).then_some(strategy),
                seed,
            )
        }
    };

    let live = match &spec {
        RespondentSpec::Simulated(t) => Live::Sim(Box::new(SimulatedRespondent::new(Theta(*t), derive_seed(seed, 1)))),
        RespondentSpec::Script(p) => Live::Script(load_script(p)?),
        RespondentSpec::Llm => Live::Llm(Box::new(build_llm(a)?)),
    };

    let header = LogHeader {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        mode: if full_bank { "full" } else { "cat" }.into(),
        model: name.clone(),
        bank_digest: digest,
        rule: rule.map(|r| r.to_string()),
        strategy: strategy.map(|s| s.to_string()),
        seed,
    };

    let (recorded, complete) = match &resumed {
        Some(log) => (log.items.clone(), log.footer.is_some()),
        None => (Vec::new(), false),
    };
    let mut respondent = ReplayRespondent::new(recorded.clone(), Some(live));
    let log_path = a.log.clone().or_else(|| a.resume.clone());
    let mut writer = match (&log_path, &resumed) {
        (Some(p), Some(log)) if !complete && Some(p) == a.resume.as_ref() => {
            Some(SessionLogWriter::append(p, recorded.len(), log.valid_len)?)
        }
        (Some(p), _) if !complete => {
            let mut w = SessionLogWriter::create(p, &header)?;
            for it in &recorded {
                w.write(&sessionlog::LogRecord::Item(it.clone()))?;
            }
            Some(w.already_written(recorded.len()))
        }
        _ => None,
    };

    let engine = Engine::new(&bank, QuadratureGrid::default());
    let started = std::time::Instant::now();
    let outcome: Result<SessionResult, _> = match (&mut writer, full_bank) {
        (Some(w), true) => engine.run_full_bank_observed(&mut respondent, w),
        (Some(w), false) => engine.run_cat_session_observed(
            &mut respondent,
            strategy.expect("cat mode has a strategy"),
            rule.as_ref().expect("cat mode has a rule"),
            seed,
            w,
        ),
        (None, true) => engine.run_full_bank(&mut respondent),
        (None, false) => engine.run_cat_session(
            &mut respondent,
            strategy.expect("cat mode has a strategy"),
            rule.as_ref().expect("cat mode has a rule"),
            seed,
        ),
    };
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            let done = e.partial().map_or(0, |p| p.administered.len());
            let hint = match &log_path {
                Some(p) => format!(
                    "; {done} items are in {}, continue with --resume {}",
                    p.display(),
                    p.display()
                ),
                None => format!("; {done} items were administered (no --log given)"),
            };
            return Err(anyhow!(e).context(format!("session for `{name}` stopped{hint}")));
        }
    };
    if let Some(w) = writer {
        if w.usage_warnings > 0 {
            eprintln!(
                "warning: provider omitted token usage for {} items (counted as 0)",
                w.usage_warnings
            );
        }
        w.finish(sessionlog::footer(&name, &result))?;
    } else if complete {
        eprintln!("note: the resumed log was already complete; nothing was appended");
    }

    let row = sessionlog::summary_row(&name, &result);
    println!("{SUMMARY_HEADER}");
    println!("{}", row.to_csv_line());
    eprintln!(
        "stop: {} after {} items, se {:.4}{}",
        result.stop_reason,
        result.length(),
        result.final_estimate.se,
        if result.converged { "" } else { " (not converged)" }
    );
    // the summary's time_s is the per-item latency sum; wall clock also covers
    // estimation and any replayed items, and stays out of the artifacts
    eprintln!(
        "time: {:.3}s summed item latency, {:.3}s wall clock",
        result.time_total,
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = &a.summary_out {
        append_summary(path, &row)?;
    }
    Ok(())
}

fn append_summary(path: &Path, row: &crate::summary::SummaryRow) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "{SUMMARY_HEADER}")?;
    }
    writeln!(f, "{}", row.to_csv_line())?;
    Ok(())
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let reference = read_summaries(&a.summaries[0])?;
    let mut text = String::new();
    for other_path in &a.summaries[1..] {
        let other = read_summaries(other_path)?;
        let cmp = compare(&reference, &other)
            .with_context(|| format!("{} vs {}", a.summaries[0].display(), other_path.display()))?;
        if a.summaries.len() > 2 {
            text.push_str(&format!("# {} vs {}\n", a.summaries[0].display(), other_path.display()));
        }
        text.push_str(&cmp.render());
    }
    print!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
