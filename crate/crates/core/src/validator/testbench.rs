// SPDX-License-Identifier: Apache-2.0

//! Testbench library: `<module>_tb.v` files plus a `trusted.json`
//! manifest naming the human-reviewed ones. LLM-generated benches land in
//! `drafts/` until reviewed.

use crate::desc::ModuleDescription;
use crate::llm::{extract_fenced, Gateway, GatewayError, Role, TemplateError, Templates};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TestbenchError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("testbench library: {0}")]
    Io(#[from] std::io::Error),
    #[error("trust manifest: {0}")]
    Manifest(String),
    #[error("no draft testbench for {0}")]
    NoDraft(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Testbench {
    pub module: String,
    pub text: String,
    /// False for an unreviewed LLM draft.
    pub trusted: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TestbenchLibrary {
    dir: Option<PathBuf>,
    trusted: BTreeSet<String>,
    memory: std::collections::BTreeMap<String, String>,
}

const MANIFEST: &str = "trusted.json";

impl TestbenchLibrary {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self, TestbenchError> {
        std::fs::create_dir_all(dir)?;
        let manifest = dir.join(MANIFEST);
        let trusted = if manifest.exists() {
            let text = std::fs::read_to_string(&manifest)?;
            serde_json::from_str(&text).map_err(|e| TestbenchError::Manifest(e.to_string()))?
        } else {
            BTreeSet::new()
        };
        Ok(TestbenchLibrary {
            dir: Some(dir.to_path_buf()),
            trusted,
            memory: Default::default(),
        })
    }

    fn bench_path(&self, module: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{module}_tb.v")))
    }

    /// The trusted bench for `module`, if any.
    pub fn lookup(&self, module: &str) -> Result<Option<String>, TestbenchError> {
        if !self.trusted.contains(module) {
            return Ok(None);
        }
        match self.bench_path(module) {
            Some(p) => Ok(Some(std::fs::read_to_string(p)?)),
            None => Ok(self.memory.get(module).cloned()),
        }
    }

    /// Stores a reviewed bench and marks it trusted.
    pub fn add_trusted(&mut self, module: &str, text: &str) -> Result<(), TestbenchError> {
        match self.bench_path(module) {
            Some(p) => std::fs::write(p, text)?,
            None => {
                self.memory.insert(module.to_string(), text.to_string());
            }
        }
        self.trusted.insert(module.to_string());
        self.write_manifest()
    }

    pub fn save_draft(&self, module: &str, text: &str) -> Result<(), TestbenchError> {
        if let Some(d) = &self.dir {
            let drafts = d.join("drafts");
            std::fs::create_dir_all(&drafts)?;
            std::fs::write(drafts.join(format!("{module}_tb.v")), text)?;
        }
        Ok(())
    }

    /// Promotes a reviewed draft to the trusted set.
    pub fn mark_reviewed(&mut self, module: &str) -> Result<(), TestbenchError> {
        let dir = self
            .dir
            .clone()
            .ok_or_else(|| TestbenchError::NoDraft(module.into()))?;
        let draft = dir.join("drafts").join(format!("{module}_tb.v"));
        if !draft.exists() {
            return Err(TestbenchError::NoDraft(module.into()));
        }
        std::fs::rename(&draft, dir.join(format!("{module}_tb.v")))?;
        self.trusted.insert(module.to_string());
        self.write_manifest()
    }

    pub fn is_trusted(&self, module: &str) -> bool {
        self.trusted.contains(module)
    }

    fn write_manifest(&self) -> Result<(), TestbenchError> {
        if let Some(d) = &self.dir {
            let text = serde_json::to_string_pretty(&self.trusted).expect("set serializes");
            std::fs::write(d.join(MANIFEST), text + "\n")?;
        }
        Ok(())
    }
}

/// Trusted bench when stored, otherwise an LLM draft (saved for review,
/// not trusted).
pub fn get_testbench(
    module: &ModuleDescription,
    library: &TestbenchLibrary,
    gateway: &Gateway,
    templates: &Templates,
) -> Result<Testbench, TestbenchError> {
    if let Some(text) = library.lookup(&module.module)? {
        return Ok(Testbench {
            module: module.module.clone(),
            text,
            trusted: true,
        });
    }
    let json = module.to_json();
    let system = templates.render_with("testbench", &[("module_description", &module.module)])?;
    let user = templates.render_with("testbench_user", &[("module_description", &json)])?;
    let reply = gateway.complete(&gateway.request(Role::TestbenchGen, system, user))?;
    let text = extract_fenced(&reply.text);
    library.save_draft(&module.module, &text)?;
    Ok(Testbench {
        module: module.module.clone(),
        text,
        trusted: false,
    })
}
