// SPDX-License-Identifier: Apache-2.0

use super::cassette::{fingerprint, Cassette, CassetteEntry, CassetteMode};
use super::provider::LlmProvider;
use super::{estimate_tokens, ChatRequest, ChatResponse, Role, Transport, Usage};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("provider error: {0}")]
    Provider(String),
    #[error("replay miss for role {role} (fingerprint {fingerprint})")]
    ReplayMiss { role: Role, fingerprint: String },
    #[error("token budget exceeded: {used} used, {requested} requested, budget {budget}")]
    BudgetExceeded {
        used: u64,
        requested: u64,
        budget: u64,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cassette I/O: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleSettings {
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

/// Model and sampling settings. One model serves every role unless a role
/// override says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub model: String,
    pub temperature: Option<f64>,
    pub max_tokens: u32,
    pub token_budget: Option<u64>,
    pub roles: BTreeMap<Role, RoleSettings>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model: "openai/gpt-4o".into(),
            temperature: None,
            max_tokens: 4096,
            token_budget: None,
            roles: BTreeMap::new(),
        }
    }
}

impl LlmSettings {
    /// 0.8 for hosted models, 0.6 for locally served ones.
    pub fn default_temperature(model_id: &str) -> f64 {
        let local = ["ollama/", "local/"];
        if local.iter().any(|p| model_id.starts_with(p)) {
            0.6
        } else {
            0.8
        }
    }

    pub fn model_for(&self, role: Role) -> &str {
        self.roles
            .get(&role)
            .and_then(|r| r.model.as_deref())
            .unwrap_or(&self.model)
    }

    pub fn temperature_for(&self, role: Role) -> f64 {
        self.roles
            .get(&role)
            .and_then(|r| r.temperature)
            .or(self.temperature)
            .unwrap_or_else(|| Self::default_temperature(self.model_for(role)))
    }

    pub fn max_tokens_for(&self, role: Role) -> u32 {
        self.roles
            .get(&role)
            .and_then(|r| r.max_tokens)
            .unwrap_or(self.max_tokens)
    }
}

/// One logged exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub sequence: u64,
    pub fingerprint: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub response: String,
    pub transport: Transport,
}

pub struct Gateway {
    settings: LlmSettings,
    provider: Option<Box<dyn LlmProvider>>,
    mode: CassetteMode,
    cassette: Mutex<Cassette>,
    cassette_path: Option<PathBuf>,
    counters: Mutex<HashMap<Role, u64>>,
    used_tokens: Mutex<u64>,
    network_calls: AtomicU64,
    transcript: Mutex<Vec<TranscriptEntry>>,
    log_path: Option<PathBuf>,
}

impl Gateway {
    pub fn new(settings: LlmSettings) -> Self {
        Self {
            settings,
            provider: None,
            mode: CassetteMode::Passthrough,
            cassette: Mutex::new(Cassette::new()),
            cassette_path: None,
            counters: Mutex::new(HashMap::new()),
            used_tokens: Mutex::new(0),
            network_calls: AtomicU64::new(0),
            transcript: Mutex::new(Vec::new()),
            log_path: None,
        }
    }

    /// Passthrough gateway over a provider, no cassette.
    pub fn with_provider_only(provider: impl LlmProvider + 'static) -> Self {
        Self::new(LlmSettings::default()).with_provider(Box::new(provider))
    }

    pub fn with_provider(mut self, provider: Box<dyn LlmProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn with_cassette(
        mut self,
        mode: CassetteMode,
        cassette: Cassette,
        path: Option<PathBuf>,
    ) -> Self {
        self.mode = mode;
        self.cassette = Mutex::new(cassette);
        self.cassette_path = path;
        self
    }

    /// Appends every exchange to `<dir>/llm_log.jsonl`.
    pub fn with_log_dir(mut self, dir: PathBuf) -> Self {
        self.log_path = Some(dir.join("llm_log.jsonl"));
        self
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    /// Builds a request with the role's configured model and sampling.
    pub fn request(
        &self,
        role: Role,
        system: impl Into<String>,
        user: impl Into<String>,
    ) -> ChatRequest {
        ChatRequest {
            role,
            system_prompt: system.into(),
            user_prompt: user.into(),
            temperature: self.settings.temperature_for(role),
            model_id: self.settings.model_for(role).to_string(),
            max_tokens: self.settings.max_tokens_for(role),
        }
    }

    /// Reserves `n` consecutive sequence indices for `role` and returns the
    /// first. Concurrent workers use this to get a scheduling-independent
    /// numbering.
    pub fn reserve(&self, role: Role, n: u64) -> u64 {
        let mut counters = self.counters.lock().unwrap();
        let slot = counters.entry(role).or_insert(0);
        let base = *slot;
        *slot += n;
        base
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let seq = self.reserve(request.role, 1);
        self.complete_at(request, seq)
    }

    /// Completes with an explicitly reserved sequence index.
    pub fn complete_at(
        &self,
        request: &ChatRequest,
        sequence: u64,
    ) -> Result<ChatResponse, GatewayError> {
        request.check().map_err(GatewayError::InvalidRequest)?;
        let prompt_tokens =
            estimate_tokens(&request.system_prompt) + estimate_tokens(&request.user_prompt);
        if let Some(budget) = self.settings.token_budget {
            let used = *self.used_tokens.lock().unwrap();
            let requested = prompt_tokens + u64::from(request.max_tokens);
            if used + requested > budget {
                return Err(GatewayError::BudgetExceeded {
                    used,
                    requested,
                    budget,
                });
            }
        }

        let fp = fingerprint(request, sequence);
        let started = Instant::now();
        let (text, usage, transport) = match self.mode {
            CassetteMode::Replay => {
                let cassette = self.cassette.lock().unwrap();
                let entry = cassette.get(&fp).ok_or_else(|| GatewayError::ReplayMiss {
                    role: request.role,
                    fingerprint: fp.clone(),
                })?;
                (entry.response.clone(), None, Transport::Replay)
            }
            CassetteMode::Record | CassetteMode::Passthrough => {
                let provider = self
                    .provider
                    .as_ref()
                    .ok_or_else(|| GatewayError::Provider("no provider configured".into()))?;
                if provider.transport() == Transport::Live {
                    self.network_calls.fetch_add(1, Ordering::SeqCst);
                }
                let reply = provider.chat(request, sequence)?;
                if self.mode == CassetteMode::Record {
                    let mut cassette = self.cassette.lock().unwrap();
                    cassette.push(CassetteEntry {
                        fingerprint: fp.clone(),
                        role: request.role,
                        sequence,
                        response: reply.text.clone(),
                    });
                    if let Some(path) = &self.cassette_path {
                        cassette
                            .save(path)
                            .map_err(|e| GatewayError::Io(e.to_string()))?;
                    }
                }
                (reply.text, reply.usage, provider.transport())
            }
        };
        let latency_ms = match transport {
            Transport::Live => started.elapsed().as_millis() as u64,
            _ => 0,
        };
        let usage = usage.unwrap_or(Usage {
            prompt_tokens,
            completion_tokens: estimate_tokens(&text),
        });

        {
            let mut used = self.used_tokens.lock().unwrap();
            if let Some(budget) = self.settings.token_budget {
                if *used + usage.total() > budget {
                    return Err(GatewayError::BudgetExceeded {
                        used: *used,
                        requested: usage.total(),
                        budget,
                    });
                }
            }
            *used += usage.total();
        }

        let entry = TranscriptEntry {
            role: request.role,
            sequence,
            fingerprint: fp,
            system_prompt: request.system_prompt.clone(),
            user_prompt: request.user_prompt.clone(),
            response: text.clone(),
            transport,
        };
        tracing::debug!(role = %request.role, sequence, "llm exchange");
        {
            let mut transcript = self.transcript.lock().unwrap();
            if let Some(path) = &self.log_path {
                let line = serde_json::to_string(&entry).expect("transcript entry serializes");
                let mut file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| GatewayError::Io(e.to_string()))?;
                writeln!(file, "{line}").map_err(|e| GatewayError::Io(e.to_string()))?;
            }
            transcript.push(entry);
        }

        Ok(ChatResponse {
            text,
            usage,
            latency_ms,
            transport,
        })
    }

    pub fn used_tokens(&self) -> u64 {
        *self.used_tokens.lock().unwrap()
    }

    /// Number of calls that went to a live network provider.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().unwrap().clone()
    }

    /// Transcript entries for one role, ordered by sequence index.
    pub fn transcript_for(&self, role: Role) -> Vec<TranscriptEntry> {
        let mut v: Vec<_> = self
            .transcript()
            .into_iter()
            .filter(|e| e.role == role)
            .collect();
        v.sort_by_key(|e| e.sequence);
        v
    }

    pub fn calls_for(&self, role: Role) -> usize {
        self.transcript
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.role == role)
            .count()
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().unwrap().clone()
    }
}
