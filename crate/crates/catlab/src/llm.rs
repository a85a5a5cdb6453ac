//! Chat-completions respondent.
//!
//! One user message per item, deterministic sampling settings, token counts
//! taken from the provider's `usage` block. A reply with no recognisable
//! option letter is re-requested once; a second miss scores 0.

use std::fmt;
use std::time::{Duration, Instant};

use catlab_core::item::ItemParameters;
use catlab_core::respond::{parse_answer, render_prompt, score_choice, AnswerOutcome, Respondent, RespondentError};
use serde::Deserialize;
use serde_json::json;

/// Environment variable read for the API key unless overridden.
pub const DEFAULT_KEY_ENV: &str = "CATLAB_API_KEY";

#[derive(Clone)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub request_timeout: Duration,
    /// Extra attempts after a transport failure or 5xx/408/429.
    pub max_retries: u32,
    /// Linear backoff unit between transport retries.
    pub retry_backoff: Duration,
}

impl LlmEndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            temperature: 0.0,
            top_p: 1.0,
            request_timeout: Duration::from_secs(120),
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

// never print the key
impl fmt::Debug for LlmEndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmEndpointConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("temperature", &self.temperature)
            .field("top_p", &self.top_p)
            .field("request_timeout", &self.request_timeout)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

struct Reply {
    text: String,
    usage: Option<(u64, u64)>,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

pub struct LlmRespondent {
    config: LlmEndpointConfig,
    agent: ureq::Agent,
    requests_sent: u64,
}

impl LlmRespondent {
    pub fn new(config: LlmEndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            requests_sent: 0,
        }
    }

    pub fn config(&self) -> &LlmEndpointConfig {
        &self.config
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests_sent
    }

    fn request_once(&mut self, body: &serde_json::Value) -> Result<Reply, Failure> {
        self.requests_sent += 1;
        let mut req = self
            .agent
            .post(&self.config.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        // compact bytes, so what goes on the wire is exactly the serialized body
        let bytes = serde_json::to_vec(body).expect("json values serialize");
        let mut resp = req.send(&bytes[..]).map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => return Err(Failure::Retryable(format!("HTTP {status}: {}", snippet(&text)))),
            _ => return Err(Failure::Fatal(format!("HTTP {status}: {}", snippet(&text)))),
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Failure::Retryable(format!("malformed response body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Failure::Retryable("response has no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        let usage = parsed
            .usage
            .and_then(|u| Some((u.prompt_tokens?, u.completion_tokens?)));
        Ok(Reply { text: content, usage })
    }

    fn request(&mut self, item_id: &str, body: &serde_json::Value) -> Result<Reply, RespondentError> {
        let mut attempt = 0;
        loop {
            match self.request_once(body) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(message)) => {
                    return Err(RespondentError::Configuration {
                        item_id: item_id.into(),
                        message,
                    })
                }
                Err(Failure::Retryable(message)) => {
                    if attempt >= self.config.max_retries {
                        return Err(RespondentError::Transport {
                            item_id: item_id.into(),
                            message: format!("{message} (after {} attempts)", attempt + 1),
                        });
                    }
                    attempt += 1;
                    std::thread::sleep(self.config.retry_backoff * attempt);
                }
            }
        }
    }
}

fn snippet(body: &str) -> String {
    let mut s: String = body.chars().take(200).collect();
    if body.chars().count() > 200 {
        s.push('…');
    }
    s
}

impl Respondent for LlmRespondent {
    fn answer(&mut self, item: &ItemParameters) -> Result<AnswerOutcome, RespondentError> {
        if !item.has_content() {
            return Err(RespondentError::MissingContent {
                item_id: item.id.clone(),
            });
        }
        let prompt = render_prompt(item)?;
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
        });
        let mut outcome = AnswerOutcome::default();
        let started = Instant::now();
        for _ in 0..2 {
            let reply = self.request(&item.id, &body)?;
            match reply.usage {
                Some((p, c)) => {
                    outcome.tokens_prompt += p;
                    outcome.tokens_completion += c;
                }
                None => outcome.usage_missing = true,
            }
            outcome.chosen_letter = parse_answer(&reply.text);
            outcome.raw_text = Some(reply.text);
            if outcome.chosen_letter.is_some() {
                break;
            }
        }
        outcome.latency_s = started.elapsed().as_secs_f64();
        outcome.parse_ok = outcome.chosen_letter.is_some();
        outcome.correct = score_choice(item, outcome.chosen_letter);
        Ok(outcome)
    }
}
