// SPDX-License-Identifier: Apache-2.0

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    Inout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submodule {
    pub instance: String,
    pub module: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub default: i64,
    pub range: Option<(i64, i64)>,
}

/// Six-component hierarchical description of one hardware module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDescription {
    pub module: String,
    pub description: String,
    pub submodules: Vec<Submodule>,
    pub ports: Vec<Port>,
    pub connections: Vec<Connection>,
    pub params: Vec<Param>,
}

/// First schema violation found, with a JSON-path-like location.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SchemaError {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error at {}: {}", self.path, self.reason)
    }
}

fn err<T>(path: impl Into<String>, reason: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError {
        path: path.into(),
        reason: reason.into(),
    })
}

pub fn is_identifier(s: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*$").unwrap())
        .is_match(s)
}

/// One side of a connection: `self.port` or `instance.port`, optionally
/// followed by a bit select such as `[3:0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint<'a> {
    pub owner: &'a str,
    pub port: &'a str,
}

impl<'a> Endpoint<'a> {
    pub fn parse(text: &'a str) -> Option<Self> {
        let (owner, rest) = text.trim().split_once('.')?;
        let port = match rest.find('[') {
            Some(i) if rest.ends_with(']') => &rest[..i],
            Some(_) => return None,
            None => rest,
        };
        (is_identifier(owner) && is_identifier(port)).then_some(Self { owner, port })
    }

    pub fn is_self(&self) -> bool {
        self.owner == "self"
    }
}

const KEYS: [&str; 6] = [
    "module",
    "description",
    "submodules",
    "ports",
    "connections",
    "params",
];

/// Finds the JSON object inside an LLM reply: a fenced block if present,
/// otherwise the outermost braces.
fn braces(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// The JSON text inside an LLM reply: the whole reply when it parses,
/// else the first fenced block, else the outermost braces.
fn json_slice(raw: &str) -> Option<&str> {
    let trimmed = raw.trim();
    if serde_json::from_str::<Value>(trimmed).is_ok() {
        return Some(trimmed);
    }
    if let Some(start) = raw.find("```") {
        let after = &raw[start + 3..];
        let body = after.find('\n').map(|i| &after[i + 1..]).unwrap_or(after);
        let body = body.find("```").map(|e| &body[..e]).unwrap_or(body);
        if let Some(inner) = braces(body).filter(|b| serde_json::from_str::<Value>(b).is_ok()) {
            return Some(inner);
        }
    }
    braces(raw)
}

fn get_str<'v>(obj: &'v Map<String, Value>, key: &str, path: &str) -> Result<&'v str, SchemaError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => err(format!("{path}.{key}"), "expected a string"),
        None => err(format!("{path}.{key}"), "missing field"),
    }
}

fn get_array<'v>(obj: &'v Map<String, Value>, key: &str) -> Result<&'v Vec<Value>, SchemaError> {
    match obj.get(key) {
        Some(Value::Array(a)) => Ok(a),
        Some(_) => err(key, "expected an array"),
        None => err(key, "missing field"),
    }
}

fn as_object<'v>(v: &'v Value, path: &str) -> Result<&'v Map<String, Value>, SchemaError> {
    v.as_object()
        .map_or_else(|| err(path, "expected an object"), Ok)
}

/// Parses the canonical JSON serialization and enforces every structural
/// invariant. Returns the first violation.
pub fn validate_description(raw: &str) -> Result<ModuleDescription, SchemaError> {
    let slice = json_slice(raw).map_or_else(|| err("$", "no JSON object found"), Ok)?;
    let value: Value =
        serde_json::from_str(slice).or_else(|e| err("$", format!("invalid JSON: {e}")))?;
    let obj = as_object(&value, "$")?;
    for key in KEYS {
        if !obj.contains_key(key) {
            return err(key, "missing field");
        }
    }
    if let Some(extra) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return err(extra.as_str(), "unexpected field");
    }

    let module = get_str(obj, "module", "$")?.to_string();
    if !is_identifier(&module) {
        return err("module", format!("{module:?} is not a valid identifier"));
    }
    let description = get_str(obj, "description", "$")?.to_string();

    let mut submodules = Vec::new();
    for (i, v) in get_array(obj, "submodules")?.iter().enumerate() {
        let path = format!("submodules[{i}]");
        let o = as_object(v, &path)?;
        let instance = get_str(o, "instance", &path)?.to_string();
        let child = get_str(o, "module", &path)?.to_string();
        if !is_identifier(&instance) || instance == "self" {
            return err(
                format!("{path}.instance"),
                format!("{instance:?} is not a valid instance name"),
            );
        }
        if !is_identifier(&child) {
            return err(
                format!("{path}.module"),
                format!("{child:?} is not a valid identifier"),
            );
        }
        if child == module {
            return err(format!("{path}.module"), "module instantiates itself");
        }
        submodules.push(Submodule {
            instance,
            module: child,
        });
    }

    let mut ports = Vec::new();
    for (i, v) in get_array(obj, "ports")?.iter().enumerate() {
        let path = format!("ports[{i}]");
        let o = as_object(v, &path)?;
        let name = get_str(o, "name", &path)?.to_string();
        if !is_identifier(&name) {
            return err(
                format!("{path}.name"),
                format!("{name:?} is not a valid identifier"),
            );
        }
        let direction = match get_str(o, "direction", &path)? {
            "in" | "input" => Direction::In,
            "out" | "output" => Direction::Out,
            "inout" => Direction::Inout,
            other => {
                return err(
                    format!("{path}.direction"),
                    format!("unknown direction {other:?}"),
                )
            }
        };
        let width = match o.get("width").and_then(Value::as_u64) {
            Some(w) if w >= 1 && w <= u64::from(u32::MAX) => w as u32,
            Some(_) => return err(format!("{path}.width"), "width must be at least 1"),
            None => return err(format!("{path}.width"), "expected a positive integer"),
        };
        ports.push(Port {
            name,
            direction,
            width,
        });
    }

    let mut connections = Vec::new();
    for (i, v) in get_array(obj, "connections")?.iter().enumerate() {
        let path = format!("connections[{i}]");
        let o = as_object(v, &path)?;
        let from = get_str(o, "from", &path)?.to_string();
        let to = get_str(o, "to", &path)?.to_string();
        connections.push(Connection { from, to });
    }

    let mut params = Vec::new();
    for (i, v) in get_array(obj, "params")?.iter().enumerate() {
        let path = format!("params[{i}]");
        let o = as_object(v, &path)?;
        let name = get_str(o, "name", &path)?.to_string();
        if !is_identifier(&name) {
            return err(
                format!("{path}.name"),
                format!("{name:?} is not a valid identifier"),
            );
        }
        let default = o
            .get("default")
            .and_then(Value::as_i64)
            .map_or_else(|| err(format!("{path}.default"), "expected an integer"), Ok)?;
        let range = match o.get("range") {
            None | Some(Value::Null) => None,
            Some(Value::Array(a)) if a.len() == 2 => match (a[0].as_i64(), a[1].as_i64()) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                _ => return err(format!("{path}.range"), "expected [min, max] integers"),
            },
            Some(_) => return err(format!("{path}.range"), "expected [min, max] or null"),
        };
        params.push(Param {
            name,
            default,
            range,
        });
    }

    let desc = ModuleDescription {
        module,
        description,
        submodules,
        ports,
        connections,
        params,
    };
    desc.check()?;
    Ok(desc)
}

impl ModuleDescription {
    /// Structural invariants, independent of other descriptions.
    pub fn check(&self) -> Result<(), SchemaError> {
        if !is_identifier(&self.module) {
            return err(
                "module",
                format!("{:?} is not a valid identifier", self.module),
            );
        }
        let mut seen = BTreeSet::new();
        for (i, p) in self.ports.iter().enumerate() {
            if !seen.insert(p.name.as_str()) {
                return err(
                    "ports",
                    format!("duplicate port name {:?} at ports[{i}]", p.name),
                );
            }
            if p.width == 0 {
                return err(format!("ports[{i}].width"), "width must be at least 1");
            }
        }
        let mut instances = BTreeMap::new();
        for (i, s) in self.submodules.iter().enumerate() {
            if s.module == self.module {
                return err(
                    format!("submodules[{i}].module"),
                    "module instantiates itself",
                );
            }
            if instances
                .insert(s.instance.as_str(), s.module.as_str())
                .is_some()
            {
                return err(
                    "submodules",
                    format!(
                        "duplicate instance name {:?} at submodules[{i}]",
                        s.instance
                    ),
                );
            }
        }
        for (i, c) in self.connections.iter().enumerate() {
            for (side, text) in [("from", &c.from), ("to", &c.to)] {
                let path = format!("connections[{i}].{side}");
                let Some(ep) = Endpoint::parse(text) else {
                    return err(path, format!("{text:?} is not of the form owner.port"));
                };
                if ep.is_self() {
                    if !seen.contains(ep.port) {
                        return err(path, format!("undeclared port self.{}", ep.port));
                    }
                } else if !instances.contains_key(ep.owner) {
                    return err(path, format!("undeclared instance {:?}", ep.owner));
                }
            }
        }
        let mut names = BTreeSet::new();
        for (i, p) in self.params.iter().enumerate() {
            if !names.insert(p.name.as_str()) {
                return err(
                    "params",
                    format!("duplicate param name {:?} at params[{i}]", p.name),
                );
            }
            if let Some((lo, hi)) = p.range {
                if lo > hi {
                    return err(format!("params[{i}].range"), "min exceeds max");
                }
                if p.default < lo || p.default > hi {
                    return err(format!("params[{i}].default"), "default outside range");
                }
            }
        }
        Ok(())
    }

    /// Checks `instance.port` endpoints against the child descriptions'
    /// declared ports. Children absent from `children` are skipped.
    pub fn check_child_ports(
        &self,
        children: &BTreeMap<String, ModuleDescription>,
    ) -> Result<(), SchemaError> {
        let instances: BTreeMap<&str, &str> = self
            .submodules
            .iter()
            .map(|s| (s.instance.as_str(), s.module.as_str()))
            .collect();
        for (i, c) in self.connections.iter().enumerate() {
            for (side, text) in [("from", &c.from), ("to", &c.to)] {
                let Some(ep) = Endpoint::parse(text) else {
                    continue;
                };
                if ep.is_self() {
                    continue;
                }
                let Some(child) = instances.get(ep.owner).and_then(|m| children.get(*m)) else {
                    continue;
                };
                if !child.ports.iter().any(|p| p.name == ep.port) {
                    return err(
                        format!("connections[{i}].{side}"),
                        format!("{} has no port {:?}", child.module, ep.port),
                    );
                }
            }
        }
        Ok(())
    }

    /// Distinct child module names, in first-appearance order.
    pub fn child_modules(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.submodules
            .iter()
            .filter(|s| seen.insert(s.module.as_str()))
            .map(|s| s.module.as_str())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("description serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_SUB: &str = r#"{
      "module": "mux8to1",
      "description": "8:1 mux from two 4:1 muxes and a 2:1 mux",
      "submodules": [
        {"instance": "lo", "module": "mux4to1"},
        {"instance": "hi", "module": "mux4to1"},
        {"instance": "fin", "module": "mux2to1"}
      ],
      "ports": [
        {"name": "d", "direction": "in", "width": 8},
        {"name": "sel", "direction": "in", "width": 3},
        {"name": "y", "direction": "out", "width": 1}
      ],
      "connections": [
        {"from": "self.d[3:0]", "to": "lo.d"},
        {"from": "self.d[7:4]", "to": "hi.d"},
        {"from": "fin.y", "to": "self.y"}
      ],
      "params": [{"name": "W", "default": 1, "range": [1, 64]}]
    }"#;

    #[test]
    fn well_formed_parses() {
        let d = validate_description(TWO_SUB).unwrap();
        assert_eq!(d.module, "mux8to1");
        assert_eq!(d.child_modules(), ["mux4to1", "mux2to1"]);
        assert_eq!(d.params[0].range, Some((1, 64)));
    }

    #[test]
    fn accepts_fenced_reply() {
        let reply = format!("Sure:\n```json\n{TWO_SUB}\n```\n");
        assert!(validate_description(&reply).is_ok());
    }

    #[test]
    fn undeclared_instance_is_reported() {
        let bad = TWO_SUB.replace("\"to\": \"hi.d\"", "\"to\": \"u9.d\"");
        let e = validate_description(&bad).unwrap_err();
        assert_eq!(e.path, "connections[1].to");
        assert!(e.reason.contains("u9"));
    }

    #[test]
    fn duplicate_port_is_reported() {
        let bad = TWO_SUB.replace("\"name\": \"sel\"", "\"name\": \"d\"");
        let e = validate_description(&bad).unwrap_err();
        assert_eq!(e.path, "ports");
    }

    #[test]
    fn missing_and_extra_fields() {
        let v: Value = serde_json::from_str(TWO_SUB).unwrap();
        let mut o = v.as_object().unwrap().clone();
        o.remove("ports");
        let e = validate_description(&Value::Object(o.clone()).to_string()).unwrap_err();
        assert_eq!(e.path, "ports");
        o.insert("ports".into(), Value::Array(vec![]));
        o.insert("extra".into(), Value::Null);
        let e = validate_description(&Value::Object(o).to_string()).unwrap_err();
        assert_eq!(e.path, "extra");
    }

    #[test]
    fn self_instantiation_and_zero_width() {
        let bad = TWO_SUB.replace("\"module\": \"mux2to1\"", "\"module\": \"mux8to1\"");
        assert_eq!(
            validate_description(&bad).unwrap_err().path,
            "submodules[2].module"
        );
        let bad = TWO_SUB.replace("\"width\": 3", "\"width\": 0");
        assert_eq!(
            validate_description(&bad).unwrap_err().path,
            "ports[1].width"
        );
    }

    #[test]
    fn undeclared_self_port() {
        let bad = TWO_SUB.replace("self.y", "self.z");
        assert!(validate_description(&bad)
            .unwrap_err()
            .reason
            .contains("self.z"));
    }

    #[test]
    fn child_port_check() {
        let d = validate_description(TWO_SUB).unwrap();
        let mut children = BTreeMap::new();
        children.insert(
            "mux4to1".to_string(),
            ModuleDescription {
                module: "mux4to1".into(),
                description: String::new(),
                submodules: vec![],
                ports: vec![Port {
                    name: "q".into(),
                    direction: Direction::In,
                    width: 4,
                }],
                connections: vec![],
                params: vec![],
            },
        );
        let e = d.check_child_ports(&children).unwrap_err();
        assert_eq!(e.path, "connections[0].to");
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,7}".prop_filter("reserved", |s| s != "self")
    }

    prop_compose! {
        fn arb_description()(
            module in ident(),
            description in "[ -~]{0,40}",
            port_names in proptest::collection::btree_set(ident(), 1..6),
            widths in proptest::collection::vec(1u32..=64, 6),
            dirs in proptest::collection::vec(0u8..3, 6),
            inst_names in proptest::collection::btree_set(ident(), 0..4),
            child in ident(),
            conn_pick in proptest::collection::vec((0usize..10, 0usize..10), 0..5),
            params in proptest::collection::btree_map(ident(), (-100i64..100, proptest::option::of(0i64..50)), 0..3),
        ) -> ModuleDescription {
            let child = if child == module { format!("{child}_c") } else { child };
            let ports: Vec<Port> = port_names.iter().enumerate().map(|(i, n)| Port {
                name: n.clone(),
                direction: [Direction::In, Direction::Out, Direction::Inout][dirs[i] as usize],
                width: widths[i],
            }).collect();
            let submodules: Vec<Submodule> = inst_names.iter().map(|n| Submodule {
                instance: n.clone(),
                module: child.clone(),
            }).collect();
            let mut endpoints: Vec<String> = ports.iter().map(|p| format!("self.{}", p.name)).collect();
            endpoints.extend(submodules.iter().map(|s| format!("{}.p", s.instance)));
            let connections = conn_pick.iter().map(|(a, b)| Connection {
                from: endpoints[a % endpoints.len()].clone(),
                to: endpoints[b % endpoints.len()].clone(),
            }).collect();
            let params = params.into_iter().map(|(name, (default, span))| Param {
                name,
                default,
                range: span.map(|s| (default - s, default + s)),
            }).collect();
            ModuleDescription { module, description, submodules, ports, connections, params }
        }
    }

    proptest! {
        #[test]
        fn serialization_round_trips(d in arb_description()) {
            d.check().unwrap();
            let back = validate_description(&d.to_json()).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
