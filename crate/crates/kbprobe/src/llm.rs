//! Chat-completion access with two providers: a live HTTP endpoint speaking
//! the common chat-completions wire format, and a replay provider serving
//! recorded fixtures. A caching wrapper shares the fixture file format, so
//! recording a live run is the same thing as caching it.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kbprobe_core::prompt::{ChatMessage, Prompt};

use crate::http::{HttpError, HttpTransport};
use crate::store::{FixtureStore, StoreError};

/// Environment variable holding the live-provider credential.
pub const API_KEY_ENV: &str = "KBPROBE_API_KEY";

/// Default live chat-completions endpoint.
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn from_prompt(prompt: &Prompt, model: &str, temperature: f64, max_output_tokens: u32) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: prompt.messages.clone(),
            temperature,
            max_output_tokens,
        }
    }

    fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest {
                detail: "messages must be non-empty".into(),
            });
        }
        if self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest {
                detail: format!("temperature {} is negative", self.temperature),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub provider: ProviderKind,
    pub cached: bool,
    pub latency_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid chat request: {detail}")]
    InvalidRequest { detail: String },
    #[error("no recorded fixture for digest {digest}")]
    MissingFixture { digest: String },
    #[error("credential missing: set {var}")]
    MissingCredential { var: String },
    #[error("malformed completion body: {detail}")]
    MalformedBody { detail: String },
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Stable content digest of (model, temperature, messages).
///
/// The digest is computed from typed fields, never raw JSON, so it cannot
/// depend on object key order. It deliberately excludes the output token
/// cap, which does not change what is being asked.
pub fn cache_key(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"model\x1f");
    hasher.update(request.model.as_bytes());
    hasher.update(b"\x1etemperature\x1f");
    hasher.update(format!("{:?}", request.temperature).as_bytes());
    hasher.update(b"\x1e");
    for message in &request.messages {
        hasher.update(message.role.as_str().as_bytes());
        hasher.update(b"\x1f");
        hasher.update(message.text.as_bytes());
        hasher.update(b"\x1e");
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub trait ChatCompletion: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Live HTTP provider. Retries and rate limiting come from the transport.
pub struct LiveClient {
    transport: Arc<dyn HttpTransport>,
    endpoint: String,
    api_key: String,
}

impl LiveClient {
    pub fn new(transport: Arc<dyn HttpTransport>, endpoint: &str, api_key: &str) -> Self {
        LiveClient {
            transport,
            endpoint: endpoint.to_string(),
            api_key: api_key.to_string(),
        }
    }

    pub fn from_env(transport: Arc<dyn HttpTransport>, endpoint: &str) -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| LlmError::MissingCredential { var: API_KEY_ENV.to_string() })?;
        Ok(LiveClient::new(transport, endpoint, &api_key))
    }
}

impl ChatCompletion for LiveClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let body = serde_json::json!({
            "model": request.model,
            "messages": request.messages.iter().map(|m| {
                serde_json::json!({ "role": m.role.as_str(), "content": m.text })
            }).collect::<Vec<_>>(),
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let started = Instant::now();
        let response = self
            .transport
            .post_json(&self.endpoint, Some(&self.api_key), &body)?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| LlmError::MalformedBody {
                detail: format!("response is not JSON: {e}"),
            })?;
        let content = &parsed["choices"][0]["message"]["content"];
        let text = if content.is_null() {
            return Err(LlmError::MalformedBody {
                detail: "missing choices[0].message.content".into(),
            });
        } else {
            content
                .as_str()
                .ok_or_else(|| LlmError::MalformedBody {
                    detail: "choices[0].message.content is not a string".into(),
                })?
                .to_string()
        };
        Ok(ChatResponse {
            text,
            provider: ProviderKind::Live,
            cached: false,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

/// Replay provider: exact digest lookup in a fixture store. A missing
/// digest fails the run loudly; silent fallbacks are forbidden.
pub struct ReplayClient {
    store: Arc<Mutex<FixtureStore>>,
}

impl ReplayClient {
    pub fn new(store: Arc<Mutex<FixtureStore>>) -> Self {
        ReplayClient { store }
    }
}

impl ChatCompletion for ReplayClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let digest = cache_key(request);
        let store = self.store.lock().expect("fixture store poisoned");
        match store.get(&digest) {
            Some(text) => Ok(ChatResponse {
                text: text.to_string(),
                provider: ProviderKind::Replay,
                cached: false,
                latency_ms: 0,
            }),
            None => Err(LlmError::MissingFixture { digest }),
        }
    }
}

/// Wraps a provider with a content-addressed response cache. Hits return
/// `cached: true`; misses are forwarded and recorded, which is also how
/// fixture sets get produced from live runs.
pub struct CachingClient {
    inner: Box<dyn ChatCompletion>,
    store: Arc<Mutex<FixtureStore>>,
}

impl CachingClient {
    pub fn new(inner: Box<dyn ChatCompletion>, store: Arc<Mutex<FixtureStore>>) -> Self {
        CachingClient { inner, store }
    }
}

impl ChatCompletion for CachingClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let digest = cache_key(request);
        {
            let store = self.store.lock().expect("fixture store poisoned");
            if let Some(text) = store.get(&digest) {
                return Ok(ChatResponse {
                    text: text.to_string(),
                    provider: ProviderKind::Live,
                    cached: true,
                    latency_ms: 0,
                });
            }
        }
        let response = self.inner.complete(request)?;
        let mut store = self.store.lock().expect("fixture store poisoned");
        store.record(&digest, &response.text)?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::fake::ScriptedTransport;
    use kbprobe_core::prompt::Role;

    fn request(model: &str, temperature: f64, texts: &[(&str, Role)]) -> ChatRequest {
        ChatRequest {
            model: model.to_string(),
            messages: texts
                .iter()
                .map(|(t, r)| ChatMessage::new(*r, t.to_string()))
                .collect(),
            temperature,
            max_output_tokens: 512,
        }
    }

    #[test]
    fn cache_key_is_deterministic_and_field_sensitive() {
        let base = request("gpt-4", 0.0, &[("hi", Role::User)]);
        assert_eq!(cache_key(&base), cache_key(&base.clone()));

        let other_model = request("gpt-3.5-turbo", 0.0, &[("hi", Role::User)]);
        assert_ne!(cache_key(&base), cache_key(&other_model));

        let other_temp = request("gpt-4", 0.5, &[("hi", Role::User)]);
        assert_ne!(cache_key(&base), cache_key(&other_temp));

        let other_text = request("gpt-4", 0.0, &[("hi!", Role::User)]);
        assert_ne!(cache_key(&base), cache_key(&other_text));

        let other_role = request("gpt-4", 0.0, &[("hi", Role::System)]);
        assert_ne!(cache_key(&base), cache_key(&other_role));

        let two = request("gpt-4", 0.0, &[("a", Role::User), ("b", Role::Assistant)]);
        let swapped = request("gpt-4", 0.0, &[("b", Role::Assistant), ("a", Role::User)]);
        assert_ne!(cache_key(&two), cache_key(&swapped));
    }

    #[test]
    fn cache_key_ignores_output_token_cap() {
        let mut a = request("gpt-4", 0.0, &[("hi", Role::User)]);
        let mut b = a.clone();
        a.max_output_tokens = 256;
        b.max_output_tokens = 2048;
        assert_eq!(cache_key(&a), cache_key(&b));
    }

    #[test]
    fn replay_hit_and_loud_miss() {
        let mut store = FixtureStore::in_memory();
        let req = request("gpt-4", 0.0, &[("hi", Role::User)]);
        store.record(&cache_key(&req), "[\"Exor\"]").unwrap();
        let client = ReplayClient::new(Arc::new(Mutex::new(store)));

        let response = client.complete(&req).unwrap();
        assert_eq!(response.text, "[\"Exor\"]");
        assert_eq!(response.provider, ProviderKind::Replay);
        assert!(!response.cached);

        let unknown = request("gpt-4", 0.0, &[("something else", Role::User)]);
        match client.complete(&unknown).unwrap_err() {
            LlmError::MissingFixture { digest } => assert_eq!(digest, cache_key(&unknown)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn live_client_parses_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"[\"a\"]"}}]}"#;
        let transport = Arc::new(ScriptedTransport::new(vec![ScriptedTransport::ok(200, body)]));
        let client = LiveClient::new(transport, "http://llm/", "key");
        let response = client.complete(&request("m", 0.0, &[("q", Role::User)])).unwrap();
        assert_eq!(response.text, "[\"a\"]");
        assert_eq!(response.provider, ProviderKind::Live);
    }

    #[test]
    fn live_client_rejects_malformed_body() {
        let transport = Arc::new(ScriptedTransport::new(vec![ScriptedTransport::ok(
            200,
            r#"{"choices":[]}"#,
        )]));
        let client = LiveClient::new(transport, "http://llm/", "key");
        let err = client.complete(&request("m", 0.0, &[("q", Role::User)])).unwrap_err();
        assert!(matches!(err, LlmError::MalformedBody { .. }));
    }

    #[test]
    fn caching_client_marks_second_call_cached() {
        let body = r#"{"choices":[{"message":{"content":"reply"}}]}"#;
        let transport = Arc::new(ScriptedTransport::new(vec![ScriptedTransport::ok(200, body)]));
        let live = LiveClient::new(transport, "http://llm/", "key");
        let store = Arc::new(Mutex::new(FixtureStore::in_memory()));
        let client = CachingClient::new(Box::new(live), store);

        let req = request("m", 0.0, &[("q", Role::User)]);
        let first = client.complete(&req).unwrap();
        assert!(!first.cached);
        // Transport script is exhausted, so reaching it again would panic:
        // the second call must be served from cache.
        let second = client.complete(&req).unwrap();
        assert!(second.cached);
        assert_eq!(first.text, second.text);
    }

    #[test]
    fn invalid_requests_rejected() {
        let client = ReplayClient::new(Arc::new(Mutex::new(FixtureStore::in_memory())));
        let empty = ChatRequest {
            model: "m".into(),
            messages: vec![],
            temperature: 0.0,
            max_output_tokens: 8,
        };
        assert!(matches!(
            client.complete(&empty).unwrap_err(),
            LlmError::InvalidRequest { .. }
        ));
        let negative = request("m", -1.0, &[("q", Role::User)]);
        assert!(matches!(
            client.complete(&negative).unwrap_err(),
            LlmError::InvalidRequest { .. }
        ));
    }
}
