//! Chat-completion providers: the trait the engine talks to, an HTTP client
//! for the common `/chat/completions` JSON shape and closure-backed stubs.

use std::io::{BufRead, BufReader};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::provider::{with_retry, ConcurrencyLimit, ProviderError, RetriesExhausted, RetryPolicy};

/// Accepted sampling temperatures.
pub const TEMPERATURE_MIN: f64 = 0.0;
pub const TEMPERATURE_MAX: f64 = 2.0;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn single(prompt: impl Into<String>, temperature: f64) -> Self {
        CompletionRequest {
            messages: vec![ChatMessage::user(prompt)],
            temperature,
            max_tokens: None,
        }
    }

    /// Content of the last user message, or "" if there is none.
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("temperature {0} outside [{TEMPERATURE_MIN}, {TEMPERATURE_MAX}]")]
    Temperature(f64),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Exhausted(#[from] RetriesExhausted),
}

impl LlmError {
    pub fn is_transient(&self) -> bool {
        matches!(self, LlmError::Exhausted(_))
    }
}

pub fn check_temperature(t: f64) -> Result<f64, LlmError> {
    if (TEMPERATURE_MIN..=TEMPERATURE_MAX).contains(&t) {
        Ok(t)
    } else {
        Err(LlmError::Temperature(t))
    }
}

pub trait ChatModel: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError>;

    /// Like [`ChatModel::complete`] but reports text as it arrives. The
    /// default delivers the whole reply as one piece.
    fn complete_streaming(
        &self,
        req: &CompletionRequest,
        on_delta: &mut dyn FnMut(&str),
    ) -> Result<String, ProviderError> {
        let text = self.complete(req)?;
        on_delta(&text);
        Ok(text)
    }
}

/// Complete with the provider's retry policy applied.
pub fn complete_with_retry(
    llm: &dyn ChatModel,
    req: &CompletionRequest,
    policy: &RetryPolicy,
) -> Result<String, LlmError> {
    check_temperature(req.temperature)?;
    Ok(with_retry(policy, || llm.complete(req))??)
}

/// Streaming variant. Retries only happen before the first delta has been
/// delivered, so callers never see duplicated text.
pub fn stream_with_retry(
    llm: &dyn ChatModel,
    req: &CompletionRequest,
    policy: &RetryPolicy,
    on_delta: &mut dyn FnMut(&str),
) -> Result<String, LlmError> {
    check_temperature(req.temperature)?;
    let mut started = false;
    let outcome = with_retry(policy, || {
        let mut sink = |d: &str| {
            started = true;
            on_delta(d);
        };
        match llm.complete_streaming(req, &mut sink) {
            Err(e) if started => Err(ProviderError::Decode(format!("stream interrupted: {e}"))),
            other => other,
        }
    });
    Ok(outcome??)
}

/// Client for an OpenAI-style chat-completions endpoint.
pub struct HttpChatModel {
    url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    limit: ConcurrencyLimit,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    message: Option<MessageBody>,
    #[serde(default)]
    delta: Option<MessageBody>,
}

#[derive(Deserialize)]
struct MessageBody {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatModel {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`.
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Self {
        HttpChatModel {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(120))
                .build(),
            limit: ConcurrencyLimit::new(4),
        }
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.limit = ConcurrencyLimit::new(n);
        self
    }

    fn send(&self, req: &CompletionRequest, stream: bool) -> Result<ureq::Response, ProviderError> {
        let mut body = json!({
            "model": self.model,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        if let Some(n) = req.max_tokens {
            body["max_tokens"] = json!(n);
        }
        if stream {
            body["stream"] = json!(true);
        }
        let mut r = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            r = r.set("Authorization", &format!("Bearer {key}"));
        }
        r.send_json(body).map_err(ProviderError::from_ureq)
    }
}

impl ChatModel for HttpChatModel {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let _permit = self.limit.acquire();
        let parsed: CompletionResponse = self
            .send(req, false)?
            .into_json()
            .map_err(|e| ProviderError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message)
            .and_then(|m| m.content)
            .ok_or_else(|| ProviderError::Decode("response has no message content".into()))
    }

    fn complete_streaming(
        &self,
        req: &CompletionRequest,
        on_delta: &mut dyn FnMut(&str),
    ) -> Result<String, ProviderError> {
        let _permit = self.limit.acquire();
        let resp = self.send(req, true)?;
        let mut text = String::new();
        for line in BufReader::new(resp.into_reader()).lines() {
            let line = line.map_err(|e| ProviderError::Transport(e.to_string()))?;
            let Some(data) = line.strip_prefix("data:") else {
                continue;
            };
            let data = data.trim();
            if data == "[DONE]" {
                break;
            }
            let chunk: CompletionResponse =
                serde_json::from_str(data).map_err(|e| ProviderError::Decode(e.to_string()))?;
            if let Some(piece) = chunk
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.delta.or(c.message))
                .and_then(|m| m.content)
            {
                if !piece.is_empty() {
                    on_delta(&piece);
                    text.push_str(&piece);
                }
            }
        }
        Ok(text)
    }
}

type Responder = dyn Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync;

/// Chat model backed by a closure. Used for offline runs and tests.
pub struct FnChatModel {
    model_id: String,
    respond: Box<Responder>,
}

impl FnChatModel {
    pub fn new(
        model_id: &str,
        respond: impl Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    ) -> Self {
        FnChatModel {
            model_id: model_id.to_string(),
            respond: Box::new(respond),
        }
    }

    /// Always answers `reply`.
    pub fn constant(reply: &str) -> Self {
        let reply = reply.to_string();
        Self::new("stub-constant", move |_| Ok(reply.clone()))
    }

    /// Deterministic offline model. Question prompts get a reply naming the
    /// question and how many extracts came with it. Anything else gets the
    /// first fifth of its last paragraph back, which stands in for a summary.
    pub fn offline() -> Self {
        use crate::prompt::{EXTRACT_HEADER, QUESTION_PREFIX};
        Self::new("offline", |req| {
            let prompt = req.last_user();
            if let Some((_, q)) = prompt.rsplit_once(QUESTION_PREFIX) {
                let n = prompt.matches(EXTRACT_HEADER).count();
                return Ok(format!("Offline answer to \"{}\" drawing on {n} text extracts.", q.trim()));
            }
            let last = prompt.trim_end().rsplit("\n\n").next().unwrap_or("").trim();
            let keep = last.chars().count().div_ceil(5).max(1);
            Ok(last.chars().take(keep).collect())
        })
    }

    /// Answers with the number of occurrences of `marker` in the prompt.
    pub fn marker_counter(marker: &str) -> Self {
        let marker = marker.to_string();
        Self::new("stub-counter", move |req| {
            Ok(req.last_user().matches(marker.as_str()).count().to_string())
        })
    }
}

impl ChatModel for FnChatModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        (self.respond)(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    #[test]
    fn temperature_bounds() {
        assert!(check_temperature(0.0).is_ok());
        assert!(check_temperature(DEFAULT_TEMPERATURE).is_ok());
        assert!(check_temperature(2.0).is_ok());
        assert!(matches!(check_temperature(2.5), Err(LlmError::Temperature(_))));
        assert!(check_temperature(f64::NAN).is_err());
        let llm = FnChatModel::constant("x");
        let req = CompletionRequest::single("q", -0.1);
        assert!(complete_with_retry(&llm, &req, &RetryPolicy::immediate(1)).is_err());
    }

    #[test]
    fn transient_failures_are_retried() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let llm = FnChatModel::new("flaky", move |_| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(ProviderError::Status { status: 503, body: String::new() })
            } else {
                Ok("fine".into())
            }
        });
        let req = CompletionRequest::single("q", 1.0);
        assert_eq!(complete_with_retry(&llm, &req, &RetryPolicy::immediate(5)).unwrap(), "fine");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        calls.store(0, Ordering::SeqCst);
        let err = complete_with_retry(&llm, &req, &RetryPolicy::immediate(2)).unwrap_err();
        assert!(err.is_transient());
    }

    #[test]
    fn permanent_failures_are_not_retried() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let llm = FnChatModel::new("bad", move |_| {
            c.fetch_add(1, Ordering::SeqCst);
            Err(ProviderError::Status { status: 400, body: "no".into() })
        });
        let req = CompletionRequest::single("q", 1.0);
        assert!(matches!(
            complete_with_retry(&llm, &req, &RetryPolicy::immediate(5)),
            Err(LlmError::Provider(_))
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn marker_counter_counts() {
        let llm = FnChatModel::marker_counter("Text extract:");
        let req = CompletionRequest::single("Text extract:\na\n\nText extract:\nb\n\nQuestion: q", 1.0);
        assert_eq!(llm.complete(&req).unwrap(), "2");
    }

    #[test]
    fn offline_model_answers_and_shortens() {
        let llm = FnChatModel::offline();
        let req = CompletionRequest::single("I\n\nText extract:\na\n\nQuestion: why?", 1.0);
        assert_eq!(llm.complete(&req).unwrap(), "Offline answer to \"why?\" drawing on 1 text extracts.");
        let req = CompletionRequest::single(format!("Summarize:\n\n{}", "x".repeat(100)), 1.0);
        assert_eq!(llm.complete(&req).unwrap(), "x".repeat(20));
    }

    #[test]
    fn default_streaming_delivers_whole_reply() {
        let llm = FnChatModel::constant("hello");
        let mut seen = Vec::new();
        let out = stream_with_retry(
            &llm,
            &CompletionRequest::single("q", 1.0),
            &RetryPolicy::immediate(1),
            &mut |d| seen.push(d.to_string()),
        )
        .unwrap();
        assert_eq!(out, "hello");
        assert_eq!(seen, vec!["hello"]);
    }
}
