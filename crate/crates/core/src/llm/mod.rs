// SPDX-License-Identifier: Apache-2.0

//! Chat-completion gateway shared by every agent role.
//!
//! All calls funnel through [`Gateway::complete`]. A gateway owns one
//! provider (live HTTP, scripted, or none) and an optional [`Cassette`] that
//! records or replays responses keyed by a request fingerprint.

mod cassette;
mod gateway;
mod provider;
mod template;

pub use cassette::{fingerprint, Cassette, CassetteEntry, CassetteMode};
pub use gateway::{Gateway, GatewayError, LlmSettings, RoleSettings, TranscriptEntry};
pub use provider::{FnProvider, LiveProvider, LlmProvider, ProviderReply, ScriptedProvider};
pub use template::{TemplateError, Templates};

use serde::{Deserialize, Serialize};
use std::fmt;

/// The registered agent roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Parser,
    DescGenerator,
    DescEvaluator,
    DepAnalyzer,
    Coder,
    Thinker,
    TestbenchGen,
    DseProposer,
    LayoutConfigurator,
}

impl Role {
    pub const ALL: [Role; 9] = [
        Role::Parser,
        Role::DescGenerator,
        Role::DescEvaluator,
        Role::DepAnalyzer,
        Role::Coder,
        Role::Thinker,
        Role::TestbenchGen,
        Role::DseProposer,
        Role::LayoutConfigurator,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Parser => "parser",
            Role::DescGenerator => "desc-generator",
            Role::DescEvaluator => "desc-evaluator",
            Role::DepAnalyzer => "dep-analyzer",
            Role::Coder => "coder",
            Role::Thinker => "thinker",
            Role::TestbenchGen => "testbench-gen",
            Role::DseProposer => "dse-proposer",
            Role::LayoutConfigurator => "layout-configurator",
        }
    }

    pub fn parse(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == name)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role: Role,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub model_id: String,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Live,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub transport: Transport,
}

/// Rough token count used for budgeting when a provider reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Pulls the first fenced code block out of a reply, or the trimmed reply
/// itself when it has no fence.
pub fn extract_fenced(reply: &str) -> String {
    let Some(start) = reply.find("```") else {
        return reply.trim().to_string();
    };
    let after = &reply[start + 3..];
    // skip the info string (e.g. "verilog", "json")
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    match body.find("```") {
        Some(end) => body[..end].trim_end().to_string(),
        None => body.trim_end().to_string(),
    }
}
