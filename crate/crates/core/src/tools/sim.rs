// SPDX-License-Identifier: Apache-2.0

//! HDL simulation adapters and the testbench log convention.
//!
//! Benches print one `FAIL: <case-id>` line per failing case and finish
//! with `TEST PASSED` or `TEST FAILED (<n> cases)`. A bench may declare
//! its case count with a `// CASES: <n>` comment.

use super::{run_with_timeout, ToolError};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Duration;

pub const DEFAULT_SIM_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub compiled: bool,
    pub passed: bool,
    pub failed_cases: u32,
    pub log: String,
}

impl SimReport {
    pub fn not_compiled(log: String, declared: u32) -> Self {
        SimReport {
            compiled: false,
            passed: false,
            failed_cases: declared,
            log,
        }
    }
}

/// Case count a bench claims: the `// CASES: n` marker when present,
/// otherwise the number of `FAIL:` literals it can print, at least 1.
pub fn declared_cases(bench: &str) -> u32 {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"//\s*CASES:\s*(\d+)").unwrap());
    if let Some(n) = re.captures(bench).and_then(|c| c[1].parse().ok()) {
        return n;
    }
    (bench.matches("FAIL:").count() as u32).max(1)
}

/// Interprets a run log. A log without `TEST PASSED` never passes; if it
/// carries no FAIL lines either, the summary count or the declared count
/// stands in so a failing run never reports zero failures.
pub fn parse_sim_log(log: &str, declared: u32) -> SimReport {
    static SUMMARY: OnceLock<Regex> = OnceLock::new();
    let summary = SUMMARY.get_or_init(|| Regex::new(r"TEST FAILED\s*\((\d+)").unwrap());
    let fail_lines = log
        .lines()
        .filter(|l| l.trim_start().starts_with("FAIL:"))
        .count() as u32;
    let said_pass = log.lines().any(|l| l.trim() == "TEST PASSED");
    let said_fail = log.contains("TEST FAILED");
    let passed = said_pass && !said_fail && fail_lines == 0;
    let failed_cases = if passed {
        0
    } else if fail_lines > 0 {
        fail_lines
    } else {
        summary
            .captures(log)
            .and_then(|c| c[1].parse().ok())
            .filter(|&n: &u32| n > 0)
            .unwrap_or(declared.max(1))
    };
    SimReport {
        compiled: true,
        passed,
        failed_cases,
        log: log.to_string(),
    }
}

pub trait SimAdapter: Send + Sync {
    fn name(&self) -> &str;
    /// Compiles `code` with `bench` inside `workdir` and runs it.
    fn simulate(&self, code: &str, bench: &str, workdir: &Path) -> Result<SimReport, ToolError>;
}

/// Icarus Verilog: `iverilog` compiles, `vvp` runs.
#[derive(Debug, Clone)]
pub struct IcarusSimulator {
    pub iverilog: PathBuf,
    pub vvp: PathBuf,
    pub timeout: Duration,
}

impl IcarusSimulator {
    /// Finds the tools on PATH.
    pub fn detect() -> Result<Self, ToolError> {
        let ok = Command::new("iverilog")
            .arg("-V")
            .output()
            .map(|o| o.status.success() || !o.stdout.is_empty())
            .unwrap_or(false);
        if !ok {
            return Err(ToolError::AdapterUnavailable(
                "iverilog not found on PATH".into(),
            ));
        }
        Ok(IcarusSimulator {
            iverilog: "iverilog".into(),
            vvp: "vvp".into(),
            timeout: DEFAULT_SIM_TIMEOUT,
        })
    }
}

impl SimAdapter for IcarusSimulator {
    fn name(&self) -> &str {
        "icarus"
    }

    fn simulate(&self, code: &str, bench: &str, workdir: &Path) -> Result<SimReport, ToolError> {
        std::fs::create_dir_all(workdir)?;
        std::fs::write(workdir.join("design.v"), code)?;
        std::fs::write(workdir.join("bench.v"), bench)?;
        let declared = declared_cases(bench);
        let mut compile = Command::new(&self.iverilog);
        compile.args(["-g2012", "-o", "sim.vvp", "design.v", "bench.v"]);
        let c = run_with_timeout(compile, workdir, self.timeout).map_err(|e| match e {
            ToolError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                ToolError::AdapterUnavailable(format!("{}: {io}", self.iverilog.display()))
            }
            e => e,
        })?;
        if c.timed_out || c.status != Some(0) {
            let report = SimReport::not_compiled(format!("{}{}", c.stdout, c.stderr), declared);
            std::fs::write(workdir.join("sim.log"), &report.log)?;
            return Ok(report);
        }
        let mut run = Command::new(&self.vvp);
        run.args(["-n", "sim.vvp"]);
        let r = run_with_timeout(run, workdir, self.timeout)?;
        let log = format!("{}{}", r.stdout, r.stderr);
        std::fs::write(workdir.join("sim.log"), &log)?;
        if r.timed_out {
            return Ok(SimReport {
                compiled: true,
                passed: false,
                failed_cases: declared,
                log: format!("{log}\nsimulation exceeded {:?}", self.timeout),
            });
        }
        Ok(parse_sim_log(&log, declared))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    /// Substring searched for in the design text.
    pub contains: String,
    pub log: String,
    #[serde(default = "yes")]
    pub compiles: bool,
}

fn yes() -> bool {
    true
}

/// Canned-log simulator for tool-less runs. The first rule whose
/// substring occurs in the design decides the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubSimulator {
    #[serde(default)]
    pub rules: Vec<StubRule>,
    #[serde(default = "default_log")]
    pub default_log: String,
}

fn default_log() -> String {
    "TEST PASSED".into()
}

impl Default for StubSimulator {
    fn default() -> Self {
        StubSimulator {
            rules: Vec::new(),
            default_log: default_log(),
        }
    }
}

impl StubSimulator {
    pub fn load(path: &Path) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| ToolError::Config(format!("{}: {e}", path.display())))
    }

    pub fn rule(mut self, contains: &str, log: &str) -> Self {
        self.rules.push(StubRule {
            contains: contains.into(),
            log: log.into(),
            compiles: true,
        });
        self
    }
}

impl SimAdapter for StubSimulator {
    fn name(&self) -> &str {
        "stub"
    }

    fn simulate(&self, code: &str, bench: &str, workdir: &Path) -> Result<SimReport, ToolError> {
        let declared = declared_cases(bench);
        let (log, compiles) = self
            .rules
            .iter()
            .find(|r| code.contains(&r.contains))
            .map(|r| (r.log.as_str(), r.compiles))
            .unwrap_or((self.default_log.as_str(), true));
        std::fs::create_dir_all(workdir)?;
        std::fs::write(workdir.join("sim.log"), log)?;
        if !compiles {
            return Ok(SimReport::not_compiled(log.to_string(), declared));
        }
        Ok(parse_sim_log(log, declared))
    }
}
