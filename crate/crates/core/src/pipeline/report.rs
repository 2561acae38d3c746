// SPDX-License-Identifier: Apache-2.0

use super::config::RunMode;
use crate::dse::{DesignConfig, EvalResult};
use crate::library::{CodeLibrary, RetrievalReason};
use crate::parser::MappingSource;
use crate::ppa::Ppa;
use crate::rtlgen::{ModuleOutcome, ModuleStatus};
use crate::tools::LayoutConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseStatus {
    Ok,
    Skipped,
    Failed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: String,
    pub status: PhaseStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Failed,
    Aborted,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Failed => 1,
            RunStatus::Aborted => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedLayer {
    pub index: usize,
    pub layer: String,
    pub unit: String,
    pub source: MappingSource,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MappingSummary {
    pub layers: usize,
    pub pairs: Vec<MappedLayer>,
    pub unmapped: Vec<String>,
    pub skipped: Vec<String>,
    pub units: Vec<String>,
}

/// A module outcome without the code text, which stays in the workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleRecord {
    pub module: String,
    pub status: ModuleStatus,
    pub retrieval: RetrievalReason,
    pub retrieved_key: Option<String>,
    pub similarity: Option<f64>,
    pub port_mismatch: bool,
    pub code_sha256: Option<String>,
    pub ppa: Option<Ppa>,
    pub testbench_trusted: Option<bool>,
    pub repair_iterations: u32,
    pub repair_rounds: u32,
    pub manual_requests: u32,
    pub failure: Option<String>,
}

impl From<&ModuleOutcome> for ModuleRecord {
    fn from(o: &ModuleOutcome) -> Self {
        ModuleRecord {
            module: o.module.clone(),
            status: o.status,
            retrieval: o.retrieval,
            retrieved_key: o.retrieved_key.clone(),
            similarity: o.similarity,
            port_mismatch: o.port_mismatch,
            code_sha256: o.code.as_ref().map(|c| hex(&Sha256::digest(c.as_bytes()))),
            ppa: o.ppa,
            testbench_trusted: o.testbench_trusted,
            repair_iterations: o.repair_iterations,
            repair_rounds: o.repair_rounds,
            manual_requests: o.manual_requests,
            failure: o.failure.clone(),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseSummary {
    pub chosen: DesignConfig,
    pub eval: EvalResult,
    pub satisfied: bool,
    pub rounds_used: u32,
    pub candidates: usize,
    pub feedback: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightChange {
    pub key: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LibraryDelta {
    pub size_before: usize,
    pub size_after: usize,
    /// New keys with their initial weight.
    pub added: BTreeMap<String, f64>,
    pub removed: Vec<String>,
    pub changed: Vec<WeightChange>,
}

pub fn weights(library: &CodeLibrary) -> BTreeMap<String, f64> {
    library
        .entries()
        .map(|e| (e.key.clone(), e.weight))
        .collect()
}

impl LibraryDelta {
    pub fn between(before: &BTreeMap<String, f64>, after: &BTreeMap<String, f64>) -> Self {
        let mut delta = LibraryDelta {
            size_before: before.len(),
            size_after: after.len(),
            ..Default::default()
        };
        for (k, &w) in after {
            match before.get(k) {
                None => {
                    delta.added.insert(k.clone(), w);
                }
                Some(&b) if b != w => delta.changed.push(WeightChange {
                    key: k.clone(),
                    before: b,
                    after: w,
                }),
                _ => {}
            }
        }
        delta.removed = before
            .keys()
            .filter(|k| !after.contains_key(*k))
            .cloned()
            .collect();
        delta
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub total_tokens: u64,
    pub calls: BTreeMap<String, usize>,
    pub network_calls: u64,
}

/// Everything a run produced. Contains no timestamps and no absolute
/// paths, so identical runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub seed: u64,
    pub top: Option<String>,
    pub status: RunStatus,
    pub exit_code: i32,
    pub phases: Vec<PhaseRecord>,
    pub mapping: Option<MappingSummary>,
    pub descriptions_generated: Vec<String>,
    pub descriptions_reused: Vec<String>,
    pub modules: Vec<ModuleRecord>,
    pub unit_ppa: BTreeMap<String, Ppa>,
    pub dse: Option<DseSummary>,
    pub final_ppa: Option<Ppa>,
    pub library: LibraryDelta,
    pub layout: Option<LayoutConfig>,
    pub token_usage: TokenUsage,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let top = self.top.as_deref().unwrap_or("-");
        out.push_str(&format!(
            "run {:?} top={} status={:?}\n",
            self.mode, top, self.status
        ));
        for p in &self.phases {
            out.push_str(&format!("  {:<12} {:?} {}\n", p.phase, p.status, p.detail));
        }
        let generated = self
            .modules
            .iter()
            .filter(|m| m.status == ModuleStatus::Generated)
            .count();
        let retrieved = self
            .modules
            .iter()
            .filter(|m| m.status == ModuleStatus::Retrieved)
            .count();
        out.push_str(&format!(
            "  modules: {generated} generated, {retrieved} retrieved\n"
        ));
        if let Some(d) = &self.dse {
            out.push_str(&format!(
                "  dse: {} latency {:.3} ns area {:.3} mm2 satisfied={}\n",
                d.chosen, d.eval.latency_ns, d.eval.area_mm2, d.satisfied
            ));
        }
        if let Some(p) = &self.final_ppa {
            out.push_str(&format!(
                "  ppa: {:.4} mW, {:.1} MHz, {:.4} mm2\n",
                p.power_mw, p.clk_mhz, p.area_mm2
            ));
        }
        out.push_str(&format!(
            "  library: {} -> {} entries ({} added, {} removed)\n",
            self.library.size_before,
            self.library.size_after,
            self.library.added.len(),
            self.library.removed.len()
        ));
        out.push_str(&format!("  tokens: {}\n", self.token_usage.total_tokens));
        for w in &self.warnings {
            out.push_str(&format!("  warning: {w}\n"));
        }
        out
    }
}
