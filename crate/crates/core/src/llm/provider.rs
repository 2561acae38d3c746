// SPDX-License-Identifier: Apache-2.0

use super::{ChatRequest, GatewayError, Role, Transport, Usage};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

pub struct ProviderReply {
    pub text: String,
    pub usage: Option<Usage>,
}

impl ProviderReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: None,
        }
    }
}

/// A source of completions. `sequence` is the gateway-assigned per-role
/// index, which lets deterministic providers answer concurrent calls in a
/// fixed order.
pub trait LlmProvider: Send + Sync {
    fn transport(&self) -> Transport;
    fn chat(&self, request: &ChatRequest, sequence: u64) -> Result<ProviderReply, GatewayError>;
}

/// Answers each role from a fixed list, indexed by the role's sequence
/// number.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(transparent)]
pub struct ScriptedProvider {
    replies: BTreeMap<Role, Vec<String>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(
        mut self,
        role: Role,
        replies: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        self.replies
            .entry(role)
            .or_default()
            .extend(replies.into_iter().map(Into::into));
        self
    }

    pub fn push(&mut self, role: Role, reply: impl Into<String>) {
        self.replies.entry(role).or_default().push(reply.into());
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::Provider(format!("reading script {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Provider(format!("parsing script {}: {e}", path.display())))
    }
}

impl LlmProvider for ScriptedProvider {
    fn transport(&self) -> Transport {
        Transport::Scripted
    }

    fn chat(&self, request: &ChatRequest, sequence: u64) -> Result<ProviderReply, GatewayError> {
        self.replies
            .get(&request.role)
            .and_then(|list| list.get(sequence as usize))
            .map(|t| ProviderReply::text(t.clone()))
            .ok_or_else(|| {
                GatewayError::Provider(format!(
                    "script has no reply for role {} at sequence {sequence}",
                    request.role
                ))
            })
    }
}

/// Closure-backed provider, mostly for tests.
pub struct FnProvider<F>(pub F);

impl<F> LlmProvider for FnProvider<F>
where
    F: Fn(&ChatRequest, u64) -> Result<String, GatewayError> + Send + Sync,
{
    fn transport(&self) -> Transport {
        Transport::Scripted
    }

    fn chat(&self, request: &ChatRequest, sequence: u64) -> Result<ProviderReply, GatewayError> {
        (self.0)(request, sequence).map(ProviderReply::text)
    }
}

/// OpenAI-compatible chat-completions endpoint.
pub struct LiveProvider {
    endpoint: String,
    key: Option<String>,
    client: reqwest::blocking::Client,
}

pub const ENDPOINT_ENV: &str = "CHIPFORGE_LLM_ENDPOINT";
pub const KEY_ENV: &str = "CHIPFORGE_LLM_KEY";

impl LiveProvider {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| GatewayError::Provider(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            key,
            client,
        })
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| GatewayError::Provider(format!("{ENDPOINT_ENV} is not set")))?;
        Self::new(endpoint, std::env::var(KEY_ENV).ok())
    }
}

impl LlmProvider for LiveProvider {
    fn transport(&self) -> Transport {
        Transport::Live
    }

    fn chat(&self, request: &ChatRequest, _sequence: u64) -> Result<ProviderReply, GatewayError> {
        let url = format!("{}/chat/completions", self.endpoint.trim_end_matches('/'));
        let model = request
            .model_id
            .split_once('/')
            .map(|(_, m)| m)
            .unwrap_or(&request.model_id);
        let body = serde_json::json!({
            "model": model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
        });
        let mut req = self.client.post(url).json(&body);
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| GatewayError::Provider(e.to_string()))?;
        let status = resp.status();
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| GatewayError::Provider(format!("bad response body: {e}")))?;
        if !status.is_success() {
            return Err(GatewayError::Provider(format!("HTTP {status}: {value}")));
        }
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::Provider("response has no message content".into()))?
            .to_string();
        let usage = value.get("usage").map(|u| Usage {
            prompt_tokens: u["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: u["completion_tokens"].as_u64().unwrap_or(0),
        });
        Ok(ProviderReply { text, usage })
    }
}
