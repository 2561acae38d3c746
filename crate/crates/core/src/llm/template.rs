// SPDX-License-Identifier: Apache-2.0

use regex::Regex;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template:?} has unbound placeholder {{{{{name}}}}}")]
    UnboundPlaceholder { template: String, name: String },
    #[error("reading template directory: {0}")]
    Io(String),
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("templates/", $name, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin![
    "parser",
    "parser_user",
    "desc_generator",
    "desc_generator_user",
    "desc_evaluator",
    "desc_evaluator_user",
    "dep_analyzer",
    "dep_analyzer_user",
    "testbench",
    "testbench_user",
    "coder",
    "coder_user",
    "thinker",
    "thinker_user",
    "repair_coder",
    "repair_coder_user",
    "dse_proposer",
    "dse_proposer_user",
    "layout_configurator",
    "layout_configurator_user",
];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z0-9_ ]+?)\s*\}\}").unwrap())
}

/// Named prompt templates with `{{name}}` placeholders.
#[derive(Debug, Clone)]
pub struct Templates {
    templates: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            templates: BUILTIN
                .iter()
                .map(|(n, t)| (n.to_string(), t.trim_end().to_string()))
                .collect(),
        }
    }

    /// Overrides built-ins with every `<name>.txt` in `dir`.
    pub fn with_dir(mut self, dir: &Path) -> Result<Self, TemplateError> {
        let entries = std::fs::read_dir(dir).map_err(|e| TemplateError::Io(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| TemplateError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text =
                std::fs::read_to_string(&path).map_err(|e| TemplateError::Io(e.to_string()))?;
            self.templates
                .insert(name.to_string(), text.trim_end().to_string());
        }
        Ok(self)
    }

    pub fn insert(&mut self, name: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(name.into(), text.into());
    }

    /// Substitutes every placeholder verbatim. Bound values are not
    /// re-scanned, so a value containing `{{x}}` is inserted literally.
    pub fn render(
        &self,
        name: &str,
        bindings: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        let text = self
            .templates
            .get(name)
            .ok_or_else(|| TemplateError::UnknownTemplate(name.to_string()))?;
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for caps in placeholder_re().captures_iter(text) {
            let whole = caps.get(0).unwrap();
            let key = caps[1].trim();
            let value = bindings
                .get(key)
                .ok_or_else(|| TemplateError::UnboundPlaceholder {
                    template: name.to_string(),
                    name: key.to_string(),
                })?;
            out.push_str(&text[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&text[last..]);
        Ok(out)
    }

    /// Convenience over [`render`](Self::render) taking `(name, value)` pairs.
    pub fn render_with(
        &self,
        name: &str,
        bindings: &[(&str, &str)],
    ) -> Result<String, TemplateError> {
        let map = bindings
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        self.render(name, &map)
    }
}
