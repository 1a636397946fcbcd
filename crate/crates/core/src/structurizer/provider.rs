//! Chat-completion providers.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest<'a> {
    pub system: &'a str,
    pub user: &'a str,
    pub decoding: Decoding,
}

/// Returns completion text, or `Error::Transport` on any delivery failure.
/// Implementations are called from several workers at once.
pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for &P {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        (**self).complete(request)
    }
}

/// A local chat endpoint speaking the `{model, messages, options, stream}` wire format.
pub struct HttpChatProvider {
    endpoint: String,
    model: String,
    agent: ureq::Agent,
}

impl HttpChatProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpChatProvider {
            endpoint: endpoint.into(),
            model: model.into(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

pub fn request_body(model: &str, request: &CompletionRequest<'_>) -> Value {
    let mut messages = Vec::new();
    if !request.system.is_empty() {
        messages.push(json!({"role": "system", "content": request.system}));
    }
    messages.push(json!({"role": "user", "content": request.user}));
    let mut options = json!({"temperature": request.decoding.temperature});
    if let Some(seed) = request.decoding.seed {
        options["seed"] = json!(seed);
    }
    json!({
        "model": model,
        "messages": messages,
        "options": options,
        "stream": false,
    })
}

/// Accepts `message.content` or `choices[0].message.content`.
pub fn response_text(body: &Value) -> Result<String> {
    body.pointer("/message/content")
        .or_else(|| body.pointer("/choices/0/message/content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Transport("response has no message content".into()))
}

impl CompletionProvider for HttpChatProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        let body = request_body(&self.model, request);
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| Error::Transport(format!("{}: {e}", self.endpoint)))?;
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("{}: {e}", self.endpoint)))?;
        response_text(&value)
    }
}
