// SPDX-License-Identifier: Apache-2.0

//! Weighted store of validated HDL snippets.
//!
//! Retrieval compares a query against every stored key by cosine
//! similarity of hashed character-trigram vectors and accepts the best
//! match only if it clears both the similarity and the weight threshold.
//! Validation outcomes scale weights up or down by `beta`, and entries that
//! sink below `t_h` are garbage-collected.

mod embed;

pub use embed::{cosine, embed, EMBEDDING_VERSION};

use crate::ppa::Ppa;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("invalid library config: {0}")]
    InvalidConfig(String),
    #[error("unknown code-library key {0:?}")]
    UnknownKey(String),
    #[error("persistence error: {0}")]
    Persistence(String),
    #[error("corrupt library record on line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    pub t_sim: f64,
    pub t_w: f64,
    pub t_h: f64,
    pub alpha: f64,
    pub beta: f64,
    pub embedding_dim: usize,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            t_sim: 0.75,
            t_w: 0.5,
            t_h: 0.25,
            alpha: 1.0,
            beta: 2.0,
            embedding_dim: 512,
        }
    }
}

impl LibraryConfig {
    pub fn check(&self) -> Result<(), LibraryError> {
        let bad = |m: String| Err(LibraryError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.t_sim) {
            return bad(format!("t_sim {} outside [0, 1]", self.t_sim));
        }
        if !(self.t_w > 0.0 && self.t_h > 0.0 && self.alpha > 0.0) {
            return bad("t_w, t_h and alpha must be positive".into());
        }
        if !(self.beta > 1.0) {
            return bad(format!("beta must exceed 1, got {}", self.beta));
        }
        if self.t_h > self.t_w {
            return bad(format!("t_h {} exceeds t_w {}", self.t_h, self.t_w));
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeEntry {
    pub key: String,
    pub weight: f64,
    pub ppa: Ppa,
    pub code: String,
    pub created_at: DateTime<Utc>,
    pub embedding: Vec<f64>,
}

/// On-disk record; embeddings are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    key: String,
    weight: f64,
    ppa: Ppa,
    code: String,
    created_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalOutcome {
    Retrieve,
    Generate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalReason {
    BelowSimilarity,
    BelowWeight,
    Accepted,
    EmptyLibrary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalDecision {
    pub outcome: RetrievalOutcome,
    /// Best-matching entry and its similarity.
    pub best: Option<(CodeEntry, f64)>,
    pub reason: RetrievalReason,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateSummary {
    pub updated: usize,
    pub collected: usize,
}

#[derive(Debug, Clone)]
pub struct CodeLibrary {
    entries: BTreeMap<String, CodeEntry>,
    embedding_dim: usize,
    path: Option<PathBuf>,
}

impl CodeLibrary {
    pub fn in_memory(embedding_dim: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            embedding_dim,
            path: None,
        }
    }

    /// Opens (or starts) a JSON-lines library at `path`.
    pub fn open(path: impl Into<PathBuf>, embedding_dim: usize) -> Result<Self, LibraryError> {
        let path = path.into();
        let mut lib = Self {
            entries: BTreeMap::new(),
            embedding_dim,
            path: Some(path.clone()),
        };
        if !path.exists() {
            return Ok(lib);
        }
        let file = fs::File::open(&path).map_err(|e| LibraryError::Persistence(e.to_string()))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LibraryError::Persistence(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| LibraryError::Corrupt {
                line: i + 1,
                reason,
            };
            let rec: Record = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if !(rec.weight > 0.0 && rec.weight.is_finite()) {
                return Err(corrupt(format!("non-positive weight {}", rec.weight)));
            }
            rec.ppa.check().map_err(corrupt)?;
            let created_at = DateTime::parse_from_rfc3339(&rec.created_at)
                .map_err(|e| corrupt(e.to_string()))?
                .with_timezone(&Utc);
            let embedding = embed(&rec.key, embedding_dim);
            lib.entries.insert(
                rec.key.clone(),
                CodeEntry {
                    key: rec.key,
                    weight: rec.weight,
                    ppa: rec.ppa,
                    code: rec.code,
                    created_at,
                    embedding,
                },
            );
        }
        Ok(lib)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Writes the library to its backing file (no-op when in memory).
    pub fn save(&self) -> Result<(), LibraryError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        self.save_to(path)
    }

    pub fn save_to(&self, path: &Path) -> Result<(), LibraryError> {
        let err = |e: std::io::Error| LibraryError::Persistence(e.to_string());
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(err)?;
            }
        }
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut out = fs::File::create(&tmp).map_err(err)?;
            for e in self.entries.values() {
                let rec = Record {
                    key: e.key.clone(),
                    weight: e.weight,
                    ppa: e.ppa,
                    code: e.code.clone(),
                    created_at: e.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
                };
                let line = serde_json::to_string(&rec)
                    .map_err(|e| LibraryError::Persistence(e.to_string()))?;
                writeln!(out, "{line}").map_err(err)?;
            }
        }
        fs::rename(&tmp, path).map_err(err)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&CodeEntry> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CodeEntry> {
        self.entries.values()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    /// Best match for `query` and the retrieve/generate decision.
    ///
    /// Similarities within `TIE_EPS` of each other count as a tie, broken by
    /// higher weight and then by key.
    pub fn retrieve(&self, query: &str, config: &LibraryConfig) -> RetrievalDecision {
        let q = embed(query, self.embedding_dim);
        let mut best: Option<(&CodeEntry, f64)> = None;
        for entry in self.entries.values() {
            let s = cosine(&q, &entry.embedding);
            let better = match best {
                None => true,
                Some((b, bs)) => {
                    s > bs + TIE_EPS
                        || ((s - bs).abs() <= TIE_EPS
                            && (entry.weight > b.weight
                                || (entry.weight == b.weight && entry.key < b.key)))
                }
            };
            if better {
                best = Some((entry, s));
            }
        }
        let Some((entry, s_max)) = best else {
            return RetrievalDecision {
                outcome: RetrievalOutcome::Generate,
                best: None,
                reason: RetrievalReason::EmptyLibrary,
            };
        };
        let (outcome, reason) = if s_max < config.t_sim {
            (RetrievalOutcome::Generate, RetrievalReason::BelowSimilarity)
        } else if entry.weight < config.t_w {
            (RetrievalOutcome::Generate, RetrievalReason::BelowWeight)
        } else {
            (RetrievalOutcome::Retrieve, RetrievalReason::Accepted)
        };
        RetrievalDecision {
            outcome,
            best: Some((entry.clone(), s_max)),
            reason,
        }
    }

    /// Adds validated code at the initial weight `alpha`, replacing any
    /// entry with the same key, and persists.
    pub fn insert(
        &mut self,
        key: &str,
        code: &str,
        ppa: Ppa,
        config: &LibraryConfig,
    ) -> Result<CodeEntry, LibraryError> {
        self.insert_at(key, code, ppa, config, Utc::now())
    }

    pub fn insert_at(
        &mut self,
        key: &str,
        code: &str,
        ppa: Ppa,
        config: &LibraryConfig,
        created_at: DateTime<Utc>,
    ) -> Result<CodeEntry, LibraryError> {
        config.check()?;
        ppa.check().map_err(LibraryError::InvalidConfig)?;
        let entry = CodeEntry {
            key: key.to_string(),
            weight: config.alpha,
            ppa,
            code: code.to_string(),
            created_at,
            embedding: embed(key, self.embedding_dim),
        };
        self.entries.insert(key.to_string(), entry.clone());
        self.save()?;
        Ok(entry)
    }

    /// Scales each named entry by `beta` on pass and `1/beta` on failure,
    /// then removes every entry whose weight fell below `t_h`.
    pub fn update_weights(
        &mut self,
        results: &[(String, bool)],
        config: &LibraryConfig,
    ) -> Result<UpdateSummary, LibraryError> {
        config.check()?;
        if let Some((key, _)) = results.iter().find(|(k, _)| !self.entries.contains_key(k)) {
            return Err(LibraryError::UnknownKey(key.clone()));
        }
        for (key, passed) in results {
            let entry = self.entries.get_mut(key).expect("checked above");
            if *passed {
                entry.weight *= config.beta;
            } else {
                entry.weight /= config.beta;
            }
        }
        let collected = self.collect_garbage(config.t_h);
        self.save()?;
        Ok(UpdateSummary {
            updated: results.len(),
            collected,
        })
    }

    /// Removes entries with weight below `t_h`; returns how many.
    pub fn collect_garbage(&mut self, t_h: f64) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, e| e.weight >= t_h);
        before - self.entries.len()
    }

    /// Directly sets a weight; used by tooling and tests.
    pub fn set_weight(&mut self, key: &str, weight: f64) -> Result<(), LibraryError> {
        let e = self
            .entries
            .get_mut(key)
            .ok_or_else(|| LibraryError::UnknownKey(key.to_string()))?;
        e.weight = weight;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppa::PpaSource;

    fn ppa() -> Ppa {
        Ppa::new(1.0, 500.0, 0.1, PpaSource::Stub)
    }

    fn cfg() -> LibraryConfig {
        LibraryConfig::default()
    }

    #[test]
    fn config_rules() {
        assert!(cfg().check().is_ok());
        let mut c = cfg();
        c.beta = 1.0;
        assert!(c.check().is_err());
        let mut c = cfg();
        c.t_h = 0.9;
        assert!(c.check().is_err());
    }

    #[test]
    fn empty_library_generates() {
        let lib = CodeLibrary::in_memory(64);
        let d = lib.retrieve("adder", &cfg());
        assert_eq!(d.outcome, RetrievalOutcome::Generate);
        assert_eq!(d.reason, RetrievalReason::EmptyLibrary);
        assert!(d.best.is_none());
    }

    #[test]
    fn insert_sets_alpha_and_self_retrieves() {
        let mut lib = CodeLibrary::in_memory(512);
        let e = lib
            .insert(
                "adder_64bit",
                "module adder_64bit; endmodule",
                ppa(),
                &cfg(),
            )
            .unwrap();
        assert_eq!(e.weight, 1.0);
        let d = lib.retrieve("adder_64bit", &cfg());
        assert_eq!(d.outcome, RetrievalOutcome::Retrieve);
        let (hit, s) = d.best.unwrap();
        assert_eq!(hit.key, "adder_64bit");
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_insert_replaces() {
        let mut lib = CodeLibrary::in_memory(64);
        lib.insert("k", "old", ppa(), &cfg()).unwrap();
        lib.insert("k", "new", ppa(), &cfg()).unwrap();
        assert_eq!(lib.len(), 1);
        assert_eq!(lib.get("k").unwrap().code, "new");
    }

    #[test]
    fn threshold_branches() {
        let mut lib = CodeLibrary::in_memory(512);
        lib.insert("mux4to1", "m", ppa(), &cfg()).unwrap();
        let c = cfg();
        assert_eq!(
            lib.retrieve("uart_tx", &c).reason,
            RetrievalReason::BelowSimilarity
        );
        lib.set_weight("mux4to1", 0.3).unwrap();
        assert_eq!(
            lib.retrieve("mux4to1", &c).reason,
            RetrievalReason::BelowWeight
        );
        lib.set_weight("mux4to1", 2.0).unwrap();
        assert_eq!(
            lib.retrieve("mux4to1", &c).reason,
            RetrievalReason::Accepted
        );
    }

    #[test]
    fn algorithm_weight_steps() {
        let mut lib = CodeLibrary::in_memory(64);
        let mut c = cfg();
        lib.insert("a", "x", ppa(), &c).unwrap();
        lib.insert("b", "x", ppa(), &c).unwrap();
        let s = lib
            .update_weights(&[("a".into(), true), ("b".into(), false)], &c)
            .unwrap();
        assert_eq!(
            s,
            UpdateSummary {
                updated: 2,
                collected: 0
            }
        );
        assert_eq!(lib.get("a").unwrap().weight, 2.0);
        assert_eq!(lib.get("b").unwrap().weight, 0.5);

        // 0.8 / 2 = 0.4 < t_h = 0.5 -> collected
        c.t_h = 0.5;
        lib.set_weight("b", 0.8).unwrap();
        let s = lib.update_weights(&[("b".into(), false)], &c).unwrap();
        assert_eq!(s.collected, 1);
        assert!(lib.get("b").is_none());
    }

    #[test]
    fn unknown_key_leaves_weights_untouched() {
        let mut lib = CodeLibrary::in_memory(64);
        lib.insert("a", "x", ppa(), &cfg()).unwrap();
        let err = lib
            .update_weights(&[("a".into(), true), ("zz".into(), true)], &cfg())
            .unwrap_err();
        assert!(matches!(err, LibraryError::UnknownKey(k) if k == "zz"));
        assert_eq!(lib.get("a").unwrap().weight, 1.0);
    }

    #[test]
    fn fresh_entry_survives_two_failures_with_defaults() {
        let mut lib = CodeLibrary::in_memory(64);
        let c = cfg();
        lib.insert("a", "x", ppa(), &c).unwrap();
        lib.update_weights(&[("a".into(), false)], &c).unwrap();
        lib.update_weights(&[("a".into(), false)], &c).unwrap();
        assert_eq!(lib.get("a").unwrap().weight, 0.25);
        lib.update_weights(&[("a".into(), false)], &c).unwrap();
        assert!(lib.is_empty());
    }

    #[test]
    fn persistence_round_trip_rebuilds_embeddings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.jsonl");
        let mut lib = CodeLibrary::open(&path, 128).unwrap();
        lib.insert("adder_8bit", "module adder_8bit; endmodule", ppa(), &cfg())
            .unwrap();
        lib.update_weights(&[("adder_8bit".into(), true)], &cfg())
            .unwrap();

        let text = fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for field in ["key", "weight", "ppa", "code", "created_at"] {
            assert!(v.get(field).is_some(), "missing {field}");
        }
        assert!(v.get("embedding").is_none());
        for field in ["power_mw", "clk_mhz", "area_mm2"] {
            assert!(v["ppa"].get(field).is_some(), "missing ppa.{field}");
        }

        let reopened = CodeLibrary::open(&path, 128).unwrap();
        let e = reopened.get("adder_8bit").unwrap();
        assert_eq!(e.weight, 2.0);
        assert_eq!(e.embedding, embed("adder_8bit", 128));
    }

    #[test]
    fn corrupt_record_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.jsonl");
        fs::write(&path, "{\"key\": \"a\"}\n").unwrap();
        assert!(matches!(
            CodeLibrary::open(&path, 8),
            Err(LibraryError::Corrupt { line: 1, .. })
        ));
    }
}
