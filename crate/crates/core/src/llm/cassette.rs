// SPDX-License-Identifier: Apache-2.0

use super::{ChatRequest, Role};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CassetteMode {
    Record,
    Replay,
    Passthrough,
}

impl std::str::FromStr for CassetteMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            "passthrough" => Ok(Self::Passthrough),
            other => Err(format!("unknown cassette mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub role: Role,
    pub sequence: u64,
    pub response: String,
}

/// Stable hash of the fields that identify a request. The per-role
/// sequence index keeps repeated identical prompts distinct.
pub fn fingerprint(request: &ChatRequest, sequence: u64) -> String {
    let mut hasher = Sha256::new();
    for part in [
        request.role.as_str(),
        &request.system_prompt,
        &request.user_prompt,
        &request.model_id,
    ] {
        hasher.update(part.as_bytes());
        hasher.update([0x1f]);
    }
    hasher.update(sequence.to_string().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Recorded responses with a fingerprint index. Saved sorted by role and
/// sequence so concurrent recording gives the same file every time.
#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: Vec<CassetteEntry>,
    index: HashMap<String, usize>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<CassetteEntry>) -> Self {
        let mut cassette = Self::new();
        for e in entries {
            cassette.push(e);
        }
        cassette
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let entries: Vec<CassetteEntry> = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::from_entries(entries))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut sorted: Vec<&CassetteEntry> = self.entries.iter().collect();
        sorted.sort_by_key(|e| (e.role.as_str(), e.sequence));
        let text = serde_json::to_string_pretty(&sorted)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, text + "\n")
    }

    pub fn push(&mut self, entry: CassetteEntry) {
        self.index
            .insert(entry.fingerprint.clone(), self.entries.len());
        self.entries.push(entry);
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.index.get(fingerprint).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
