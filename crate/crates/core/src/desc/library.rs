// SPDX-License-Identifier: Apache-2.0

use super::schema::{validate_description, ModuleDescription};
use super::DescError;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

const INDEX: &str = "index.json";

/// Module Description Library: one `<module>.json` per entry plus an
/// `index.json` listing the module names. Records are validated when read.
#[derive(Debug, Clone, Default)]
pub struct DescriptionLibrary {
    root: Option<PathBuf>,
    raw: BTreeMap<String, String>,
}

impl DescriptionLibrary {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self, DescError> {
        let root = root.into();
        let mut lib = Self {
            root: Some(root.clone()),
            raw: BTreeMap::new(),
        };
        if !root.exists() {
            return Ok(lib);
        }
        let io = |e: std::io::Error| DescError::Io(format!("{}: {e}", root.display()));
        let index_path = root.join(INDEX);
        let names: Vec<String> = if index_path.exists() {
            let text = fs::read_to_string(&index_path).map_err(io)?;
            serde_json::from_str(&text)
                .map_err(|e| DescError::Io(format!("{}: {e}", index_path.display())))?
        } else {
            let mut names = Vec::new();
            for entry in fs::read_dir(&root).map_err(io)? {
                let path = entry.map_err(io)?.path();
                if path.extension().and_then(|e| e.to_str()) == Some("json") {
                    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                        if stem != "index" {
                            names.push(stem.to_string());
                        }
                    }
                }
            }
            names
        };
        for name in names {
            let text = fs::read_to_string(root.join(format!("{name}.json"))).map_err(io)?;
            lib.raw.insert(name, text);
        }
        Ok(lib)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Exact-name lookup.
    pub fn lookup(&self, name: &str) -> Result<Option<ModuleDescription>, DescError> {
        let Some(raw) = self.raw.get(name) else {
            return Ok(None);
        };
        let desc = validate_description(raw).map_err(|e| DescError::CorruptEntry {
            name: name.to_string(),
            reason: e.to_string(),
        })?;
        if desc.module != name {
            return Err(DescError::CorruptEntry {
                name: name.to_string(),
                reason: format!("record describes {:?}", desc.module),
            });
        }
        Ok(Some(desc))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.raw.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.raw.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Stores (or overwrites) a description. Callers only store descriptions
    /// that passed the evaluator.
    pub fn store(&mut self, desc: &ModuleDescription) -> Result<(), DescError> {
        desc.check()?;
        let text = desc.to_json();
        if let Some(root) = &self.root {
            let io = |e: std::io::Error| DescError::Io(format!("{}: {e}", root.display()));
            fs::create_dir_all(root).map_err(io)?;
            fs::write(
                root.join(format!("{}.json", desc.module)),
                format!("{text}\n"),
            )
            .map_err(io)?;
            let mut names: Vec<&str> = self.raw.keys().map(String::as_str).collect();
            if !self.raw.contains_key(&desc.module) {
                names.push(&desc.module);
                names.sort_unstable();
            }
            let index = serde_json::to_string_pretty(&names).expect("names serialize");
            fs::write(root.join(INDEX), format!("{index}\n")).map_err(io)?;
        }
        self.raw.insert(desc.module.clone(), text);
        Ok(())
    }

    /// Inserts raw text without validation; lookups will report it as
    /// corrupt if it is malformed.
    pub fn insert_raw(&mut self, name: impl Into<String>, raw: impl Into<String>) {
        self.raw.insert(name.into(), raw.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desc::schema::{Direction, Port};

    fn adder() -> ModuleDescription {
        ModuleDescription {
            module: "adder_64bit".into(),
            description: "64-bit adder".into(),
            submodules: vec![],
            ports: vec![
                Port {
                    name: "a".into(),
                    direction: Direction::In,
                    width: 64,
                },
                Port {
                    name: "s".into(),
                    direction: Direction::Out,
                    width: 64,
                },
            ],
            connections: vec![],
            params: vec![],
        }
    }

    #[test]
    fn lookup_hit_and_miss() {
        let mut lib = DescriptionLibrary::in_memory();
        lib.store(&adder()).unwrap();
        assert_eq!(lib.lookup("adder_64bit").unwrap(), Some(adder()));
        assert_eq!(lib.lookup("absent").unwrap(), None);
    }

    #[test]
    fn missing_ports_is_corrupt() {
        let mut lib = DescriptionLibrary::in_memory();
        lib.insert_raw(
            "broken",
            r#"{"module":"broken","description":"","submodules":[],"connections":[],"params":[]}"#,
        );
        assert!(matches!(
            lib.lookup("broken"),
            Err(DescError::CorruptEntry { .. })
        ));
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = DescriptionLibrary::open(dir.path()).unwrap();
        lib.store(&adder()).unwrap();
        assert!(dir.path().join("adder_64bit.json").exists());
        let index: Vec<String> =
            serde_json::from_str(&fs::read_to_string(dir.path().join("index.json")).unwrap())
                .unwrap();
        assert_eq!(index, ["adder_64bit"]);
        let reopened = DescriptionLibrary::open(dir.path()).unwrap();
        assert_eq!(reopened.lookup("adder_64bit").unwrap(), Some(adder()));
    }
}
