mod common;

use std::time::Duration;

use catlab::llm::{LlmEndpointConfig, LlmRespondent};
use catlab_core::engine::Engine;
use catlab_core::estimation::default_grid;
use catlab_core::respond::{Respondent, RespondentError, ANSWER_INSTRUCTION};
use catlab_core::selection::SelectionStrategy;
use catlab_core::stopping::StoppingRule;
use common::{content_bank, MockServer, Reply};

fn client(server: &MockServer) -> LlmRespondent {
    let mut cfg = LlmEndpointConfig::new(&server.base_url, "mock-model");
    cfg.api_key = Some("sk-test".into());
    cfg.retry_backoff = Duration::from_millis(1);
    cfg.request_timeout = Duration::from_secs(10);
    LlmRespondent::new(cfg)
}

#[test]
fn request_shape_on_the_wire() {
    let server = MockServer::start(|_, _| Reply::chat("E", 120, 1));
    let bank = content_bank(5);
    let item = bank.get(4);
    let out = client(&server).answer(item).unwrap();
    assert!(out.correct && out.parse_ok);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    let r = &reqs[0];
    assert_eq!(r.path, "/v1/chat/completions");
    assert_eq!(r.header("authorization"), Some("Bearer sk-test"));
    let raw = String::from_utf8(r.body.clone()).unwrap();
    assert!(raw.contains("\"temperature\":0.0"), "{raw}");
    assert!(raw.contains("\"top_p\":1.0"), "{raw}");
    let body = r.json();
    assert_eq!(body["model"], "mock-model");
    let messages = body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 1);
    assert_eq!(messages[0]["role"], "user");
    let prompt = messages[0]["content"].as_str().unwrap();
    assert!(prompt.lines().any(|l| l == ANSWER_INSTRUCTION));
    assert!(prompt.contains(item.stem.as_deref().unwrap()));
    assert!(prompt.contains("E.option E of item 4"));
}

#[test]
fn scoring_against_the_key() {
    // item 4 has key E, item 0 has key A; the mock always says E
    let server = MockServer::start(|_, _| Reply::chat("Answer: E", 50, 2));
    let bank = content_bank(5);
    let mut c = client(&server);
    let right = c.answer(bank.get(4)).unwrap();
    assert_eq!((right.score(), right.chosen_letter), (1, Some('E')));
    let wrong = c.answer(bank.get(0)).unwrap();
    assert_eq!((wrong.score(), wrong.chosen_letter), (0, Some('E')));
    assert_eq!((wrong.tokens_prompt, wrong.tokens_completion), (50, 2));
    assert!(!wrong.usage_missing);
}

#[test]
fn unparseable_reply_is_retried_once_then_scored_zero() {
    let server = MockServer::start(|_, _| Reply::chat("I cannot decide.", 40, 5));
    let bank = content_bank(5);
    let mut c = client(&server);
    let out = c.answer(bank.get(0)).unwrap();
    assert_eq!(out.score(), 0);
    assert!(!out.parse_ok);
    assert_eq!(out.chosen_letter, None);
    assert_eq!(server.requests().len(), 2);
    assert_eq!(c.requests_sent(), 2);
    // both attempts are billed
    assert_eq!((out.tokens_prompt, out.tokens_completion), (80, 10));
}

#[test]
fn second_attempt_can_recover() {
    let server = MockServer::start(|_, i| {
        if i == 0 {
            Reply::chat("hmm", 10, 3)
        } else {
            Reply::chat("a", 10, 1)
        }
    });
    let bank = content_bank(5);
    let out = client(&server).answer(bank.get(0)).unwrap();
    assert!(out.parse_ok && out.correct);
    assert_eq!(out.chosen_letter, Some('A'));
    assert_eq!((out.tokens_prompt, out.tokens_completion), (20, 4));
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_, _| Reply::status(401, r#"{"error":"bad key"}"#));
    let bank = content_bank(5);
    let err = client(&server).answer(bank.get(0)).unwrap_err();
    assert!(matches!(err, RespondentError::Configuration { .. }), "{err:?}");
    assert!(err.to_string().contains("401"));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn server_errors_are_retried_then_reported() {
    let server = MockServer::start(|_, _| Reply::status(503, "overloaded"));
    let bank = content_bank(5);
    let err = client(&server).answer(bank.get(0)).unwrap_err();
    assert!(matches!(err, RespondentError::Transport { .. }), "{err:?}");
    // one attempt plus three retries
    assert_eq!(server.requests().len(), 4);
}

#[test]
fn transient_failure_then_success() {
    let server = MockServer::start(|_, i| match i {
        0 => Reply::status(429, "slow down"),
        1 => Reply::status(200, "not json"),
        _ => Reply::chat("B", 7, 1),
    });
    let bank = content_bank(5);
    let out = client(&server).answer(bank.get(1)).unwrap();
    assert!(out.correct);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn missing_usage_is_flagged() {
    let server = MockServer::start(|_, _| Reply::chat_without_usage("C"));
    let bank = content_bank(5);
    let out = client(&server).answer(bank.get(2)).unwrap();
    assert!(out.correct && out.usage_missing);
    assert_eq!(out.tokens_total(), 0);
}

#[test]
fn content_free_items_are_refused_without_a_request() {
    let server = MockServer::start(|_, _| Reply::chat("A", 1, 1));
    let item = catlab_core::ItemParameters::new("bare", 1.0, 0.0);
    let err = client(&server).answer(&item).unwrap_err();
    assert!(matches!(err, RespondentError::MissingContent { .. }));
    assert!(server.requests().is_empty());
}

#[test]
fn session_totals_equal_item_sums() {
    // answers depend on the request so each item reports different usage
    let server = MockServer::start(|req, i| {
        let prompt = req.json()["messages"][0]["content"].as_str().unwrap().to_string();
        let letter = ["A", "B", "C", "D", "E"][prompt.len() % 5];
        Reply::chat(letter, 100 + i as u64, 1 + (i % 3) as u64)
    });
    let bank = content_bank(60);
    let engine = Engine::new(&bank, default_grid());
    let mut c = client(&server);
    let res = engine
        .run_cat_session(&mut c, SelectionStrategy::MaxInfo, &StoppingRule::FixedLength(12), 3)
        .unwrap();
    let tp: u64 = res.administered.iter().map(|a| a.outcome.tokens_prompt).sum();
    let tc: u64 = res.administered.iter().map(|a| a.outcome.tokens_completion).sum();
    let t: f64 = res.administered.iter().map(|a| a.outcome.latency_s).sum();
    assert_eq!(res.tokens_prompt, tp);
    assert_eq!(res.tokens_completion, tc);
    assert_eq!(res.time_total, t);
    assert!(res.administered.iter().all(|a| a.outcome.latency_s > 0.0));
    assert_eq!(server.requests().len(), 12);
}

#[test]
fn debug_output_hides_the_key() {
    let mut cfg = LlmEndpointConfig::new("http://x", "m");
    cfg.api_key = Some("sk-very-secret".into());
    assert!(!format!("{cfg:?}").contains("sk-very-secret"));
}
