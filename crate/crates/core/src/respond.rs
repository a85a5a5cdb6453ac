//! Answer sources for a session, plus the prompt and answer-letter protocol
//! shared by content respondents.

use alloc::collections::BTreeMap;
use alloc::string::String;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::irt::{prob_correct, Theta};
use crate::item::ItemParameters;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RespondentError {
    #[error("item `{item_id}` has no stem/options/key and cannot be shown to a content respondent")]
    MissingContent { item_id: String },
    #[error("no scripted answer for item `{item_id}`")]
    Unscripted { item_id: String },
    #[error("transport failure on item `{item_id}`: {message}")]
    Transport { item_id: String, message: String },
    #[error("endpoint rejected the request for item `{item_id}`: {message}")]
    Configuration { item_id: String, message: String },
}

/// Result of asking one item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnswerOutcome {
    pub correct: bool,
    pub raw_text: Option<String>,
    pub chosen_letter: Option<char>,
    pub parse_ok: bool,
    pub tokens_prompt: u64,
    pub tokens_completion: u64,
    /// Seconds spent waiting on the respondent.
    pub latency_s: f64,
    /// Set when the provider omitted usage counts (tokens recorded as 0).
    pub usage_missing: bool,
}

impl AnswerOutcome {
    /// Outcome for respondents that only produce a score.
    pub fn scored(correct: bool) -> Self {
        Self {
            correct,
            parse_ok: true,
            ..Self::default()
        }
    }

    pub fn score(&self) -> u8 {
        self.correct as u8
    }

    pub fn tokens_total(&self) -> u64 {
        self.tokens_prompt + self.tokens_completion
    }
}

/// Anything that can answer items one at a time.
pub trait Respondent {
    fn answer(&mut self, item: &ItemParameters) -> Result<AnswerOutcome, RespondentError>;
}

impl<R: Respondent + ?Sized> Respondent for &mut R {
    fn answer(&mut self, item: &ItemParameters) -> Result<AnswerOutcome, RespondentError> {
        (**self).answer(item)
    }
}

impl<R: Respondent + ?Sized> Respondent for alloc::boxed::Box<R> {
    fn answer(&mut self, item: &ItemParameters) -> Result<AnswerOutcome, RespondentError> {
        (**self).answer(item)
    }
}

/// Bernoulli draw from the 2PL probability.
pub fn simulate_response<R: Rng + ?Sized>(theta_true: Theta, item: &ItemParameters, rng: &mut R) -> AnswerOutcome {
    let u: f64 = rng.random();
    AnswerOutcome::scored(u < prob_correct(item, theta_true))
}

/// Examinee with a known true ability answering from its own stream.
#[derive(Debug, Clone)]
pub struct SimulatedRespondent {
    theta: Theta,
    rng: ChaCha8Rng,
}

impl SimulatedRespondent {
    pub fn new(theta_true: Theta, seed: u64) -> Self {
        Self {
            theta: theta_true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn theta(&self) -> Theta {
        self.theta
    }
}

impl Respondent for SimulatedRespondent {
    fn answer(&mut self, item: &ItemParameters) -> Result<AnswerOutcome, RespondentError> {
        Ok(simulate_response(self.theta, item, &mut self.rng))
    }
}

/// Replays fixed scores keyed by item id.
#[derive(Debug, Clone, Default)]
pub struct ScriptedRespondent {
    scores: BTreeMap<String, bool>,
}

impl ScriptedRespondent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item_id: impl Into<String>, correct: bool) {
        self.scores.insert(item_id.into(), correct);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, bool)> for ScriptedRespondent {
    fn from_iter<T: IntoIterator<Item = (S, bool)>>(iter: T) -> Self {
        Self {
            scores: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

impl Respondent for ScriptedRespondent {
    fn answer(&mut self, item: &ItemParameters) -> Result<AnswerOutcome, RespondentError> {
        self.scores
            .get(&item.id)
            .map(|c| AnswerOutcome::scored(*c))
            .ok_or_else(|| RespondentError::Unscripted {
                item_id: item.id.clone(),
            })
    }
}

/// Instruction line every rendered prompt carries.
pub const ANSWER_INSTRUCTION: &str =
    "Output ONLY the letter of the correct answer. Do not include any explanations or extra text.";

const PROMPT_HEAD: &str = "Please answer the following single-choice question.

Instructions: 1. Choose the correct option letter from the given choices; 2.
Output ONLY the letter of the correct answer. Do not include any explanations or extra text.

Example:
Question:
This is an example question stem where you need to choose the correct answer.
Options:
A.Incorrect answer
B.Incorrect answer
C.Correct answer
D.Incorrect answer
E.Incorrect answer
Answer: C

Now, here is the question you need to answer. Again, output ONLY the letter of the correct answer:
";

/// Full single-message prompt for one item.
pub fn render_prompt(item: &ItemParameters) -> Result<String, RespondentError> {
    let stem = match (&item.stem, item.options.is_empty()) {
        (Some(stem), false) => stem,
        _ => {
            return Err(RespondentError::MissingContent {
                item_id: item.id.clone(),
            })
        }
    };
    let mut out = String::from(PROMPT_HEAD);
    out.push_str("Question:\n");
    out.push_str(stem.trim_end());
    out.push_str("\nOptions:\n");
    for (letter, text) in &item.options {
        out.push(*letter);
        out.push('.');
        out.push_str(text.trim());
        out.push('\n');
    }
    Ok(out)
}

/// First standalone letter A-E (case-insensitive) after an optional leading
/// `Answer:`. A letter is standalone when neither neighbour is alphabetic.
pub fn parse_answer(raw: &str) -> Option<char> {
    let mut text = raw.trim_start();
    if text.len() >= 7 && text.is_char_boundary(7) && text[..7].eq_ignore_ascii_case("answer:") {
        text = &text[7..];
    }
    let chars: alloc::vec::Vec<char> = text.chars().collect();
    (0..chars.len()).find_map(|i| {
        let c = chars[i].to_ascii_uppercase();
        let before = i.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i + 1).copied();
        let isolated = !before.is_some_and(char::is_alphabetic) && !after.is_some_and(char::is_alphabetic);
        (('A'..='E').contains(&c) && isolated).then_some(c)
    })
}

/// Correct only when a letter was chosen and it equals the item's key.
pub fn score_choice(item: &ItemParameters, chosen: Option<char>) -> bool {
    chosen.is_some() && chosen == item.answer_key
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;

    fn content_item(key: char) -> ItemParameters {
        let options = ['A', 'B', 'C', 'D', 'E']
            .iter()
            .map(|l| (*l, alloc::format!("choice {l}")))
            .collect();
        ItemParameters::new("c1", 1.0, 0.0).with_content("Which one?", options, key)
    }

    #[test]
    fn simulated_rate_at_difficulty() {
        let item = ItemParameters::new("q", 1.3, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| simulate_response(Theta(0.4), &item, &mut rng).correct)
            .count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.5).abs() <= 0.006, "{rate}");
    }

    #[test]
    fn saturated_item_always_correct() {
        let item = ItemParameters::new("q", 1.0, 0.0);
        let mut r = SimulatedRespondent::new(Theta(30.0), 1);
        assert!((0..10_000).all(|_| r.answer(&item).unwrap().correct));
    }

    #[test]
    fn simulated_is_seeded() {
        let item = ItemParameters::new("q", 1.0, 0.0);
        let run = |seed| {
            let mut r = SimulatedRespondent::new(Theta(0.2), seed);
            (0..64).map(|_| r.answer(&item).unwrap().correct).collect::<Vec<_>>()
        };
        assert_eq!(run(8), run(8));
        assert_ne!(run(8), run(9));
    }

    #[test]
    fn scripted_replays_and_rejects_unknown() {
        let mut s: ScriptedRespondent = vec![("a", true), ("b", false)].into_iter().collect();
        assert!(s.answer(&ItemParameters::new("a", 1.0, 0.0)).unwrap().correct);
        assert!(!s.answer(&ItemParameters::new("b", 1.0, 0.0)).unwrap().correct);
        assert!(matches!(
            s.answer(&ItemParameters::new("zz", 1.0, 0.0)),
            Err(RespondentError::Unscripted { .. })
        ));
    }

    #[test]
    fn prompt_layout() {
        let p = render_prompt(&content_item('E')).unwrap();
        assert!(p.lines().any(|l| l == ANSWER_INSTRUCTION));
        assert!(p.contains("Output ONLY the letter of the correct answer"));
        assert!(p.ends_with("Options:\nA.choice A\nB.choice B\nC.choice C\nD.choice D\nE.choice E\n"));
        assert!(p.contains("\nQuestion:\nWhich one?\n"));
        assert_eq!(p, render_prompt(&content_item('E')).unwrap());
    }

    #[test]
    fn prompt_needs_content() {
        let err = render_prompt(&ItemParameters::new("bare", 1.0, 0.0)).unwrap_err();
        assert_eq!(
            err,
            RespondentError::MissingContent {
                item_id: "bare".to_string()
            }
        );
    }

    #[test]
    fn choice_scoring() {
        assert!(score_choice(&content_item('E'), Some('E')));
        assert!(!score_choice(&content_item('A'), Some('E')));
        assert!(!score_choice(&content_item('A'), None));
        assert!(!score_choice(&ItemParameters::new("bare", 1.0, 0.0), None));
    }

    #[test]
    fn answer_parsing() {
        assert_eq!(parse_answer("E"), Some('E'));
        assert_eq!(parse_answer("Answer: C"), Some('C'));
        assert_eq!(parse_answer("answer:b"), Some('B'));
        assert_eq!(parse_answer("  d.\n"), Some('D'));
        assert_eq!(parse_answer("(B) Late onset asthma"), Some('B'));
        assert_eq!(parse_answer("I believe the patient has PCP."), None);
        assert_eq!(parse_answer("As an AI model, I cannot answer."), None);
        assert_eq!(parse_answer(""), None);
        assert_eq!(parse_answer("F"), None);
    }
}
