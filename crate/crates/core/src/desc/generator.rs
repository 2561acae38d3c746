// SPDX-License-Identifier: Apache-2.0

use super::library::DescriptionLibrary;
use super::schema::{validate_description, ModuleDescription, SchemaError};
use super::DescError;
use crate::llm::{Gateway, Role, Templates};
use crate::ppa::Ppa;
use serde::{Deserialize, Serialize};

/// Literal the evaluator emits to accept a description.
pub const PASS_TOKEN: &str = "template pass";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionVerdict {
    pub passed: bool,
    pub token: Option<String>,
    pub feedback: String,
    pub ppa_feasible: Option<bool>,
}

impl DescriptionVerdict {
    /// Reads an evaluator reply. `passed` is true exactly when the pass
    /// token appears; `ppa_feasible` comes from a `PPA_FEASIBLE: yes|no`
    /// line.
    pub fn parse(reply: &str) -> Self {
        let lower = reply.to_lowercase();
        let passed = lower.contains(PASS_TOKEN);
        let ppa_feasible = reply.lines().find_map(|l| {
            let (k, v) = l.split_once(':')?;
            if k.trim().eq_ignore_ascii_case("ppa_feasible") {
                match v.trim().to_lowercase().as_str() {
                    "yes" | "true" => Some(true),
                    "no" | "false" => Some(false),
                    _ => None,
                }
            } else {
                None
            }
        });
        Self {
            passed,
            token: passed.then(|| PASS_TOKEN.to_string()),
            feedback: reply.trim().to_string(),
            ppa_feasible,
        }
    }

    /// With PPA targets the verdict must also affirm feasibility.
    pub fn accepts(&self, with_targets: bool) -> bool {
        self.passed && (!with_targets || self.ppa_feasible == Some(true))
    }
}

fn render_targets(targets: Option<&Ppa>) -> String {
    match targets {
        None => "none".into(),
        Some(t) => format!(
            "power <= {} mW, clock >= {} MHz, area <= {} mm2",
            t.power_mw, t.clk_mhz, t.area_mm2
        ),
    }
}

/// Generator/evaluator duo over one gateway.
pub struct DescGenerator<'a> {
    gateway: &'a Gateway,
    templates: &'a Templates,
}

impl<'a> DescGenerator<'a> {
    pub fn new(gateway: &'a Gateway, templates: &'a Templates) -> Self {
        Self { gateway, templates }
    }

    /// Runs up to `max_rounds` generate-then-evaluate rounds. A schema
    /// failure ends the round without consulting the evaluator. Feedback
    /// from each failed round is appended verbatim to the next generator
    /// prompt. The accepted description is stored in `library`.
    pub fn generate_description(
        &self,
        library: &mut DescriptionLibrary,
        unit_name: &str,
        hints: &str,
        ppa_targets: Option<&Ppa>,
        max_rounds: u32,
    ) -> Result<ModuleDescription, DescError> {
        let system = self.templates.render_with("desc_generator", &[])?;
        let eval_system = self.templates.render_with("desc_evaluator", &[])?;
        let targets = render_targets(ppa_targets);
        let mut feedback = String::new();
        let mut last_schema: Option<SchemaError> = None;
        let mut last_feedback = String::new();
        let mut parsed_any = false;

        for round in 1..=max_rounds {
            let user = self.templates.render_with(
                "desc_generator_user",
                &[
                    ("unit_name", unit_name),
                    ("hints", hints),
                    ("ppa_targets", &targets),
                    ("feedback", &feedback),
                ],
            )?;
            let reply = self.gateway.complete(&self.gateway.request(
                Role::DescGenerator,
                system.as_str(),
                user,
            ))?;
            let desc = match validate_description(&reply.text).and_then(|d| {
                if d.module == unit_name {
                    Ok(d)
                } else {
                    Err(SchemaError {
                        path: "module".into(),
                        reason: format!("expected module {unit_name:?}, got {:?}", d.module),
                    })
                }
            }) {
                Ok(d) => d,
                Err(e) => {
                    tracing::warn!(unit = unit_name, round, error = %e, "generator output rejected");
                    feedback = format!("Revision feedback from the previous round:\n{e}");
                    last_schema = Some(e);
                    continue;
                }
            };
            parsed_any = true;

            let ppa_section = match ppa_targets {
                Some(_) => format!(
                    "PPA targets: {targets}\nCandidate techniques: clock gating for power, pipelining for performance."
                ),
                None => String::new(),
            };
            let eval_user = self.templates.render_with(
                "desc_evaluator_user",
                &[
                    ("description_json", &desc.to_json()),
                    ("ppa_section", &ppa_section),
                ],
            )?;
            let verdict = DescriptionVerdict::parse(
                &self
                    .gateway
                    .complete(&self.gateway.request(
                        Role::DescEvaluator,
                        eval_system.as_str(),
                        eval_user,
                    ))?
                    .text,
            );
            if verdict.accepts(ppa_targets.is_some()) {
                library.store(&desc)?;
                return Ok(desc);
            }
            feedback = format!(
                "Revision feedback from the previous round:\n{}",
                verdict.feedback
            );
            last_feedback = verdict.feedback;
        }

        match (parsed_any, last_schema) {
            (false, Some(last)) => Err(DescError::ParseFailure {
                unit: unit_name.to_string(),
                rounds: max_rounds,
                last,
            }),
            _ => Err(DescError::EvaluatorNeverPassed {
                unit: unit_name.to_string(),
                rounds: max_rounds,
                feedback: last_feedback,
            }),
        }
    }
}
