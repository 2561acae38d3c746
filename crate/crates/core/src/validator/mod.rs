// SPDX-License-Identifier: Apache-2.0

//! Simulation-driven validation with parallel thinker/coder repair.
//!
//! Each repair iteration runs K threads. Thread 0 is always noise-free;
//! the others see symbolic noise injected into the failing code. The best
//! attempt is chosen by [`select_best`]; a failing best seeds the next
//! iteration. After `curb` iterations a human debug manual is requested
//! once and attached to every later thinker prompt.

mod noise;
mod select;
mod testbench;

pub use noise::{derive_seed, inject_noise, noise_budget, DEFAULT_ALPHABET};
pub use select::select_best;
pub use testbench::{get_testbench, Testbench, TestbenchError, TestbenchLibrary};

use crate::hdl;
use crate::llm::{extract_fenced, Gateway, Role, TemplateError, Templates};
use crate::ppa::Ppa;
use crate::prompter::{Prompter, PrompterAborted};
use crate::tools::{analytical_ppa, SimAdapter, SimReport, SynthAdapter, ToolError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    InvClkFreq,
    Power,
    Area,
}

impl Objective {
    pub fn value(&self, ppa: &Ppa) -> f64 {
        match self {
            Objective::InvClkFreq => 1.0 / ppa.clk_mhz,
            Objective::Power => ppa.power_mw,
            Objective::Area => ppa.area_mm2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub k_threads: usize,
    pub noise_pct: f64,
    pub curb: u32,
    pub objective: Objective,
    pub symbol_alphabet: Vec<String>,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            k_threads: 2,
            noise_pct: 30.0,
            curb: 5,
            objective: Objective::Area,
            symbol_alphabet: DEFAULT_ALPHABET.iter().map(|s| s.to_string()).collect(),
            seed: 0,
        }
    }
}

impl ValidationConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.k_threads == 0 {
            return Err("k_threads must be at least 1".into());
        }
        if !(0.0..=100.0).contains(&self.noise_pct) {
            return Err(format!("noise_pct {} outside [0, 100]", self.noise_pct));
        }
        if self.curb == 0 {
            return Err("curb must be at least 1".into());
        }
        if self.noise_pct > 0.0 && self.k_threads > 1 && self.symbol_alphabet.is_empty() {
            return Err("symbol_alphabet is empty".into());
        }
        Ok(())
    }

    /// Thread 0 is noise-free; with a single thread there is no noise.
    pub fn is_noisy(&self, thread: usize) -> bool {
        thread > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugManual {
    pub text: String,
    pub attached_from_iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugAttempt {
    pub thread_index: usize,
    pub noisy: bool,
    pub noise_tokens: usize,
    pub diagnosis: String,
    pub code: String,
    pub report: SimReport,
    pub ppa: Option<Ppa>,
    /// LLM or tool failure that ended this attempt early.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub iteration: u32,
    pub attempts: Vec<DebugAttempt>,
    pub chosen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub code: String,
    pub ppa: Ppa,
    /// Repair iterations run, counted across a manual reset.
    pub iterations: u32,
    pub manual_requests: u32,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Error)]
pub enum ValidatorError {
    #[error("validation of {module} exhausted after {iterations} repair iterations (best: {best_failed} failed cases)")]
    Exhausted {
        module: String,
        iterations: u32,
        best_failed: u32,
        rounds: Vec<RoundRecord>,
    },
    #[error(transparent)]
    Aborted(#[from] PrompterAborted),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid validation config: {0}")]
    Config(String),
    #[error("workspace: {0}")]
    Io(#[from] std::io::Error),
}

fn with_deps(deps: &str, code: &str) -> String {
    if deps.is_empty() {
        code.to_string()
    } else {
        format!("{deps}\n{code}")
    }
}

pub struct Validator<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a Templates,
    pub sim: &'a dyn SimAdapter,
    pub synth: &'a dyn SynthAdapter,
    pub config: ValidationConfig,
    /// Per-module subdirectories are created below this.
    pub workspace: PathBuf,
}

impl<'a> Validator<'a> {
    fn ppa_for(&self, code: &str, top: &str, dir: &Path) -> Ppa {
        match self.synth.synthesize(code, top, dir) {
            Ok(r) => {
                let _ = std::fs::write(dir.join("synth.rpt"), &r.raw);
                r.parsed
            }
            Err(e) => {
                tracing::warn!(top, error = %e, "synthesis failed, using analytical estimate");
                analytical_ppa(code)
            }
        }
    }

    /// One repair iteration: K thinker/coder threads run concurrently,
    /// each simulated (and synthesized on a pass) in its own directory.
    pub fn repair_round(
        &self,
        module: &str,
        failed_code: &str,
        deps: &str,
        report: &SimReport,
        bench: &str,
        manual: Option<&DebugManual>,
        iteration: u32,
    ) -> Result<Vec<DebugAttempt>, ValidatorError> {
        let k = self.config.k_threads;
        let thinker_system = self.templates.render_with("thinker", &[])?;
        let coder_system = self.templates.render_with("repair_coder", &[])?;
        let manual_text = manual
            .map(|m| format!("Debugging manual from the design engineer:\n{}", m.text))
            .unwrap_or_default();
        let thinker_user = self.templates.render_with(
            "thinker_user",
            &[
                ("code", failed_code),
                ("log", &report.log),
                ("manual", &manual_text),
            ],
        )?;
        let code_tokens = hdl::token_count(failed_code);
        // Sequence slots are claimed up front so replay does not depend on
        // thread scheduling.
        let thinker_base = self.gateway.reserve(Role::Thinker, k as u64);
        let coder_base = self.gateway.reserve(Role::Coder, k as u64);
        let round_dir = self
            .workspace
            .join(module)
            .join(format!("repair_{iteration:02}"));
        std::fs::create_dir_all(&round_dir)?;

        let attempt = |t: usize| -> DebugAttempt {
            let noisy = self.config.is_noisy(t);
            let dir = round_dir.join(format!("thread_{t}"));
            let (prompt, noise_tokens) = if noisy {
                inject_noise(
                    &thinker_user,
                    code_tokens,
                    self.config.noise_pct,
                    &self.config.symbol_alphabet,
                    derive_seed(self.config.seed, module, iteration, t),
                )
            } else {
                (thinker_user.clone(), 0)
            };
            let mut a = DebugAttempt {
                thread_index: t,
                noisy,
                noise_tokens,
                diagnosis: String::new(),
                code: failed_code.to_string(),
                report: SimReport {
                    compiled: report.compiled,
                    passed: false,
                    failed_cases: crate::tools::declared_cases(bench).max(report.failed_cases),
                    log: String::new(),
                },
                ppa: None,
                error: None,
            };
            let req = self
                .gateway
                .request(Role::Thinker, thinker_system.as_str(), prompt);
            match self.gateway.complete_at(&req, thinker_base + t as u64) {
                Ok(r) => a.diagnosis = r.text,
                Err(e) => {
                    a.error = Some(e.to_string());
                    return a;
                }
            }
            let coder_user = match self.templates.render_with(
                "repair_coder_user",
                &[("code", failed_code), ("diagnosis", &a.diagnosis)],
            ) {
                Ok(u) => u,
                Err(e) => {
                    a.error = Some(e.to_string());
                    return a;
                }
            };
            let req = self
                .gateway
                .request(Role::Coder, coder_system.as_str(), coder_user);
            match self.gateway.complete_at(&req, coder_base + t as u64) {
                Ok(r) => a.code = extract_fenced(&r.text),
                Err(e) => {
                    a.error = Some(e.to_string());
                    return a;
                }
            }
            let _ = std::fs::create_dir_all(&dir);
            let _ = std::fs::write(dir.join("diagnosis.txt"), &a.diagnosis);
            let _ = std::fs::write(dir.join("design.v"), &a.code);
            match self.sim.simulate(&with_deps(deps, &a.code), bench, &dir) {
                Ok(r) => a.report = r,
                Err(e) => {
                    a.error = Some(e.to_string());
                    return a;
                }
            }
            if a.report.passed {
                a.ppa = Some(self.ppa_for(&with_deps(deps, &a.code), module, &dir));
            }
            a
        };

        let attempts = std::thread::scope(|s| {
            let handles: Vec<_> = (0..k).map(|t| s.spawn(move || attempt(t))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("repair thread panicked"))
                .collect::<Vec<_>>()
        });
        Ok(attempts)
    }

    /// Simulates `code`; on failure runs repair iterations until a pass,
    /// asking `prompter` for one debug manual when the curb is reached.
    pub fn validate(
        &self,
        module: &str,
        code: &str,
        bench: &str,
        prompter: &mut dyn Prompter,
    ) -> Result<ValidationOutcome, ValidatorError> {
        self.validate_with_deps(module, code, "", bench, prompter)
    }

    /// As [`Validator::validate`], with already-validated submodule code
    /// `deps` compiled alongside. Only `code` is ever repaired.
    pub fn validate_with_deps(
        &self,
        module: &str,
        code: &str,
        deps: &str,
        bench: &str,
        prompter: &mut dyn Prompter,
    ) -> Result<ValidationOutcome, ValidatorError> {
        self.config.check().map_err(ValidatorError::Config)?;
        let dir = self.workspace.join(module);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{module}_tb.v")), bench)?;
        std::fs::write(dir.join(format!("{module}.v")), code)?;
        let first = self.sim.simulate(&with_deps(deps, code), bench, &dir)?;
        if first.passed {
            return Ok(ValidationOutcome {
                ppa: self.ppa_for(&with_deps(deps, code), module, &dir),
                code: code.to_string(),
                iterations: 0,
                manual_requests: 0,
                rounds: Vec::new(),
            });
        }
        let mut seed_code = code.to_string();
        let mut seed_report = first;
        let mut manual: Option<DebugManual> = None;
        let mut since_reset = 0u32;
        let mut total = 0u32;
        let mut rounds = Vec::new();
        loop {
            if since_reset == self.config.curb {
                if manual.is_some() {
                    return Err(ValidatorError::Exhausted {
                        module: module.to_string(),
                        iterations: total,
                        best_failed: seed_report.failed_cases,
                        rounds,
                    });
                }
                let question = format!(
                    "Module `{module}` still fails {} case(s) after {total} repair iterations.\nLast simulator log:\n{}\nPlease write a debugging manual:",
                    seed_report.failed_cases,
                    seed_report.log.trim()
                );
                let text = prompter.ask(&question)?;
                if text.trim().is_empty() {
                    return Err(PrompterAborted("empty debugging manual".into()).into());
                }
                manual = Some(DebugManual {
                    text,
                    attached_from_iteration: total + 1,
                });
                since_reset = 0;
            }
            since_reset += 1;
            total += 1;
            let attempts = self.repair_round(
                module,
                &seed_code,
                deps,
                &seed_report,
                bench,
                manual.as_ref(),
                total,
            )?;
            let best = select_best(&attempts, self.config.objective).clone();
            rounds.push(RoundRecord {
                iteration: total,
                chosen: best.thread_index,
                attempts,
            });
            if let (true, Some(ppa)) = (best.report.passed, best.ppa) {
                std::fs::write(dir.join(format!("{module}.v")), &best.code)?;
                return Ok(ValidationOutcome {
                    code: best.code,
                    ppa,
                    iterations: total,
                    manual_requests: u32::from(manual.is_some()),
                    rounds,
                });
            }
            if best.report.failed_cases <= seed_report.failed_cases {
                seed_code = best.code;
                seed_report = best.report;
            }
        }
    }
}
