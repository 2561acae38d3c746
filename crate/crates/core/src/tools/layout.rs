// SPDX-License-Identifier: Apache-2.0

//! Place-and-route configuration emission and LLM-driven revision.

use crate::llm::{extract_fenced, Gateway, GatewayError, Role, TemplateError, Templates};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Margin applied to the area estimate when sizing the die.
pub const AREA_MARGIN: f64 = 1.3;
/// Die edge used when the area estimate is zero.
pub const FLOOR_SIDE_UM: f64 = 100.0;

pub const WIRE_LENGTH: &str = "max_wire_length_um";
pub const WIRE_SPACING: &str = "wire_spacing_um";
pub const DIE_WIDTH: &str = "die_width_um";
pub const DIE_HEIGHT: &str = "die_height_um";
pub const CONGESTION: &str = "congestion_tolerance";
pub const PLACEMENT_DENSITY: &str = "placement_density";

/// Keys the configurator may change.
pub const WHITELIST: &[&str] = &[
    WIRE_LENGTH,
    WIRE_SPACING,
    DIE_WIDTH,
    DIE_HEIGHT,
    CONGESTION,
    PLACEMENT_DENSITY,
];

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("revision cap {0} reached")]
    RevisionCapExceeded(u32),
    #[error("tool log is empty")]
    EmptyLog,
    #[error("invalid layout configuration: {0}")]
    Invalid(String),
    #[error("configurator reply is not a JSON object: {0}")]
    BadReply(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design_name: String,
    pub total_area_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub entries: BTreeMap<String, String>,
    pub revision: u32,
}

impl LayoutConfig {
    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.entries.get(key)?.parse().ok()
    }

    pub fn check(&self) -> Result<(), LayoutError> {
        for key in [DIE_WIDTH, DIE_HEIGHT] {
            match self.get_f64(key) {
                Some(v) if v > 0.0 && v.is_finite() => {}
                _ => {
                    return Err(LayoutError::Invalid(format!(
                        "{key} must be a positive number"
                    )))
                }
            }
        }
        match self.get_f64(CONGESTION) {
            Some(v) if (0.0..=100.0).contains(&v) => Ok(()),
            _ => Err(LayoutError::Invalid(format!(
                "{CONGESTION} must lie in [0, 100]"
            ))),
        }
    }

    /// Flat `key = value` file, keys sorted.
    pub fn render(&self) -> String {
        let mut s = format!("# revision {}\n", self.revision);
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout config serializes")
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Initial configuration: square die of `ceil(sqrt(area * 1.3) * 1000)` µm
/// per edge, default routing rules, congestion tolerance 20.
pub fn emit_layout_config(summary: &DesignSummary) -> LayoutConfig {
    let side = if summary.total_area_mm2 > 0.0 {
        ((summary.total_area_mm2 * AREA_MARGIN).sqrt() * 1000.0).ceil()
    } else {
        FLOOR_SIDE_UM
    };
    let mut entries = BTreeMap::new();
    entries.insert("design_name".into(), summary.design_name.clone());
    entries.insert(DIE_WIDTH.into(), fmt_num(side));
    entries.insert(DIE_HEIGHT.into(), fmt_num(side));
    entries.insert("core_margin_um".into(), "10".into());
    entries.insert(WIRE_LENGTH.into(), fmt_num(side.max(500.0)));
    entries.insert(WIRE_SPACING.into(), "0.14".into());
    entries.insert(CONGESTION.into(), "20".into());
    entries.insert(PLACEMENT_DENSITY.into(), "0.6".into());
    entries.insert("routing_layers".into(), "met1-met5".into());
    LayoutConfig {
        entries,
        revision: 0,
    }
}

/// Asks the configurator for amended values given a tool log. Only
/// whitelisted keys with numeric values change; everything else is
/// returned as a warning and left untouched.
pub fn revise_layout_config(
    config: &LayoutConfig,
    tool_log: &str,
    gateway: &Gateway,
    templates: &Templates,
    max_revisions: u32,
) -> Result<(LayoutConfig, Vec<String>), LayoutError> {
    if config.revision >= max_revisions {
        return Err(LayoutError::RevisionCapExceeded(max_revisions));
    }
    if tool_log.trim().is_empty() {
        return Err(LayoutError::EmptyLog);
    }
    let system = templates.render_with("layout_configurator", &[])?;
    let rendered = config.render();
    let user = templates.render_with(
        "layout_configurator_user",
        &[("config", &rendered), ("log", tool_log)],
    )?;
    let reply = gateway.complete(&gateway.request(Role::LayoutConfigurator, system, user))?;
    let body = extract_fenced(&reply.text);
    let changes: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&body).map_err(|e| LayoutError::BadReply(e.to_string()))?;
    let mut next = config.clone();
    let mut warnings = Vec::new();
    for (key, value) in changes {
        if !WHITELIST.contains(&key.as_str()) {
            tracing::warn!(key, "configurator touched a non-whitelisted key");
            warnings.push(format!("rejected change to non-whitelisted key {key}"));
            continue;
        }
        let number = match &value {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::String(s) => s.trim().parse().ok(),
            _ => None,
        };
        match number {
            Some(v) if v.is_finite() => {
                let mut trial = next.clone();
                trial.entries.insert(key.clone(), fmt_num(v));
                if trial.check().is_ok() {
                    next = trial;
                } else {
                    warnings.push(format!("rejected out-of-range value {v} for {key}"));
                }
            }
            _ => warnings.push(format!("rejected non-numeric value for {key}")),
        }
    }
    next.revision += 1;
    Ok((next, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedProvider;

    fn summary(area: f64) -> DesignSummary {
        DesignSummary {
            design_name: "top".into(),
            total_area_mm2: area,
        }
    }

    #[test]
    fn die_from_area() {
        let c = emit_layout_config(&summary(1.0));
        let expected = ((1.3f64).sqrt() * 1000.0).ceil();
        assert_eq!(c.get_f64(DIE_WIDTH), Some(expected));
        assert_eq!(c.get_f64(DIE_HEIGHT), Some(expected));
        assert_eq!(c.get_f64(CONGESTION), Some(20.0));
        assert_eq!(c.revision, 0);
        c.check().unwrap();
        let z = emit_layout_config(&summary(0.0));
        assert_eq!(z.get_f64(DIE_WIDTH), Some(FLOOR_SIDE_UM));
        z.check().unwrap();
        assert!(c.render().contains("congestion_tolerance = 20\n"));
    }

    #[test]
    fn revision_changes_one_key() {
        let gw = Gateway::with_provider_only(ScriptedProvider::new().with(
            Role::LayoutConfigurator,
            [r#"{"congestion_tolerance": 35}"#],
        ));
        let c = emit_layout_config(&summary(1.0));
        let (n, w) = revise_layout_config(
            &c,
            "GRT-0116 congestion too high",
            &gw,
            &Templates::builtin(),
            3,
        )
        .unwrap();
        assert!(w.is_empty());
        assert_eq!(n.revision, 1);
        let diff: Vec<_> = n
            .entries
            .iter()
            .filter(|(k, v)| c.entries.get(*k) != Some(v))
            .collect();
        assert_eq!(diff, [(&CONGESTION.to_string(), &"35".to_string())]);
    }

    #[test]
    fn whitelist_and_range() {
        let gw = Gateway::with_provider_only(ScriptedProvider::new().with(
            Role::LayoutConfigurator,
            ["```json\n{\"routing_layers\": \"met1-met9\", \"congestion_tolerance\": 140}\n```"],
        ));
        let c = emit_layout_config(&summary(2.0));
        let (n, w) = revise_layout_config(&c, "error", &gw, &Templates::builtin(), 3).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(n.entries, c.entries);
        assert_eq!(n.revision, 1);
    }

    #[test]
    fn cap_and_empty_log() {
        let gw = Gateway::with_provider_only(ScriptedProvider::new());
        let mut c = emit_layout_config(&summary(1.0));
        assert!(matches!(
            revise_layout_config(&c, "", &gw, &Templates::builtin(), 3),
            Err(LayoutError::EmptyLog)
        ));
        c.revision = 3;
        assert!(matches!(
            revise_layout_config(&c, "log", &gw, &Templates::builtin(), 3),
            Err(LayoutError::RevisionCapExceeded(3))
        ));
        assert_eq!(gw.transcript().len(), 0);
    }
}
