// SPDX-License-Identifier: Apache-2.0

//! Layer extraction from printed model listings and layer-to-hardware
//! mapping against the compute & interconnect library.
//!
//! The listing grammar is the indented `Name(arg=val, ...)` format that
//! common frameworks print: container lines end with `(` and close with
//! `)`, leaf layers sit on one line, and a `N x Name(` prefix repeats a
//! block N times.

use crate::llm::{Gateway, GatewayError, Role, TemplateError, Templates};
use crate::prompter::{Prompter, PrompterAborted};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParserError {
    #[error("model listing is empty")]
    EmptyListing,
    #[error("no layer recognized in model listing")]
    MalformedListing,
    #[error("hardware library is empty")]
    EmptyLibrary,
    #[error("hardware library: {0}")]
    Library(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Aborted(#[from] PrompterAborted),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Compute,
    Activation,
    Interconnect,
    Other,
}

impl LayerKind {
    pub fn classify(name: &str) -> Self {
        let n = name.to_ascii_lowercase();
        const COMPUTE: &[&str] = &["linear", "conv1d", "conv2d", "conv3d", "matmul", "bmm"];
        const ACTIVATION: &[&str] = &[
            "gelu",
            "geluactivation",
            "newgeluactivation",
            "gelutanh",
            "fastgeluactivation",
            "tanh",
            "silu",
            "siluactivation",
            "swish",
            "relu",
            "relu6",
            "leakyrelu",
            "sigmoid",
            "softmax",
            "hardswish",
        ];
        const INTERCONNECT: &[&str] = &[
            "identity",
            "flatten",
            "unflatten",
            "concat",
            "cat",
            "split",
            "reshape",
            "view",
            "permute",
            "transpose",
            "residual",
            "add",
            "upsample",
            "pixelshuffle",
        ];
        if COMPUTE.contains(&n.as_str()) {
            LayerKind::Compute
        } else if ACTIVATION.contains(&n.as_str()) {
            LayerKind::Activation
        } else if INTERCONNECT.contains(&n.as_str()) {
            LayerKind::Interconnect
        } else {
            LayerKind::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub index: usize,
    pub name: String,
    pub kind: LayerKind,
    pub shape_params: BTreeMap<String, u64>,
}

fn container_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:\([^)]*\):\s*)?(?:(\d+)\s*x\s*)?([A-Za-z_][\w.]*)\($").unwrap()
    })
}

fn leaf_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:\([^)]*\):\s*)?(?:(\d+)\s*x\s*)?([A-Za-z_][\w.]*)\((.*)\)$").unwrap()
    })
}

/// Splits on commas that are not nested inside parentheses or brackets.
fn split_args(args: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in args.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(args[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(args[start..].trim());
    out.retain(|s| !s.is_empty());
    out
}

/// Positive integer value; tuples contribute their first element.
fn positive_int(value: &str) -> Option<u64> {
    let v = value.trim().trim_start_matches('(').trim_start_matches('[');
    let first = v.split([',', ')', ']']).next()?.trim();
    first.parse::<u64>().ok().filter(|&n| n > 0)
}

fn parse_args(args: &str) -> BTreeMap<String, u64> {
    let mut params = BTreeMap::new();
    for (pos, arg) in split_args(args).into_iter().enumerate() {
        let (key, value) = match arg.split_once('=') {
            Some((k, v)) if !k.contains('(') => (k.trim().to_string(), v),
            _ => (format!("arg{pos}"), arg),
        };
        if let Some(n) = positive_int(value) {
            params.insert(key, n);
        }
    }
    params
}

struct Frame {
    repeat: usize,
    leaves: Vec<(String, BTreeMap<String, u64>)>,
}

/// Extracts leaf layers in textual order, expanding `N x` repeats.
pub fn extract_layers(listing: &str) -> Result<Vec<LayerRecord>, ParserError> {
    if listing.trim().is_empty() {
        return Err(ParserError::EmptyListing);
    }
    let mut stack = vec![Frame {
        repeat: 1,
        leaves: Vec::new(),
    }];
    fn close(stack: &mut Vec<Frame>) {
        if stack.len() > 1 {
            let frame = stack.pop().unwrap();
            let parent = stack.last_mut().unwrap();
            for _ in 0..frame.repeat {
                parent.leaves.extend(frame.leaves.iter().cloned());
            }
        }
    }
    for raw in listing.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == ")" {
            close(&mut stack);
        } else if let Some(c) = container_re().captures(line) {
            let repeat = c.get(1).and_then(|m| m.as_str().parse().ok()).unwrap_or(1);
            stack.push(Frame {
                repeat,
                leaves: Vec::new(),
            });
        } else if let Some(c) = leaf_re().captures(line) {
            let repeat: usize = c.get(1).and_then(|m| m.as_str().parse().ok()).unwrap_or(1);
            let name = c[2].to_string();
            let params = parse_args(&c[3]);
            let top = stack.last_mut().unwrap();
            for _ in 0..repeat {
                top.leaves.push((name.clone(), params.clone()));
            }
        } else {
            tracing::debug!(line, "skipping unrecognized listing line");
        }
    }
    while stack.len() > 1 {
        close(&mut stack);
    }
    let leaves = stack.pop().unwrap().leaves;
    if leaves.is_empty() {
        return Err(ParserError::MalformedListing);
    }
    Ok(leaves
        .into_iter()
        .enumerate()
        .map(|(index, (name, shape_params))| LayerRecord {
            index,
            kind: LayerKind::classify(&name),
            name,
            shape_params,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitCategory {
    SystolicArray,
    ActivationUnit,
    NocLink,
    NopChannel,
    Buffer,
}

impl UnitCategory {
    fn serves(&self, kind: LayerKind) -> bool {
        match kind {
            LayerKind::Compute => *self == UnitCategory::SystolicArray,
            LayerKind::Activation => *self == UnitCategory::ActivationUnit,
            LayerKind::Interconnect => matches!(
                self,
                UnitCategory::NocLink | UnitCategory::NopChannel | UnitCategory::Buffer
            ),
            LayerKind::Other => false,
        }
    }

    fn for_kind(kind: LayerKind) -> Self {
        match kind {
            LayerKind::Compute => UnitCategory::SystolicArray,
            LayerKind::Activation => UnitCategory::ActivationUnit,
            LayerKind::Interconnect | LayerKind::Other => UnitCategory::NocLink,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareLibraryEntry {
    pub unit_name: String,
    pub category: UnitCategory,
    #[serde(default)]
    pub description_ref: Option<String>,
    #[serde(default)]
    pub supported_layers: Vec<String>,
}

impl HardwareLibraryEntry {
    pub fn supports(&self, layer_name: &str) -> bool {
        self.supported_layers
            .iter()
            .any(|p| glob_match(p, layer_name))
    }

    /// Key into the description library.
    pub fn description_key(&self) -> &str {
        self.description_ref.as_deref().unwrap_or(&self.unit_name)
    }
}

/// Case-insensitive match with `*` wildcards.
fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.to_lowercase().chars().collect();
    let t: Vec<char> = text.to_lowercase().chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let (mut star, mut mark) = (None, 0);
    while ti < t.len() {
        if pi < p.len() && p[pi] == t[ti] {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some(pi);
            mark = ti;
            pi += 1;
        } else if let Some(s) = star {
            pi = s + 1;
            mark += 1;
            ti = mark;
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

/// Loads the JSON array of library entries and checks name uniqueness.
pub fn load_hardware_library(path: &Path) -> Result<Vec<HardwareLibraryEntry>, ParserError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ParserError::Library(format!("{}: {e}", path.display())))?;
    let entries: Vec<HardwareLibraryEntry> = serde_json::from_str(&text)
        .map_err(|e| ParserError::Library(format!("{}: {e}", path.display())))?;
    let mut seen = std::collections::BTreeSet::new();
    for e in &entries {
        if !seen.insert(&e.unit_name) {
            return Err(ParserError::Library(format!(
                "duplicate unit_name {:?}",
                e.unit_name
            )));
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingSource {
    /// Unique match on the library's layer patterns.
    Pattern,
    Llm,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPair {
    pub layer: LayerRecord,
    pub unit: HardwareLibraryEntry,
    pub source: MappingSource,
}

/// Every input layer appears exactly once across `pairs`, `unmapped` and
/// `skipped`. Layers of kind `other` (normalization, embedding lookups,
/// dropout) need no accelerator unit and are skipped up front.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub pairs: Vec<MappingPair>,
    pub unmapped: Vec<LayerRecord>,
    pub skipped: Vec<LayerRecord>,
}

impl MappingResult {
    pub fn total(&self) -> usize {
        self.pairs.len() + self.unmapped.len() + self.skipped.len()
    }

    /// Mapped units in first-use order, deduplicated by name.
    pub fn units(&self) -> Vec<&HardwareLibraryEntry> {
        let mut seen = std::collections::BTreeSet::new();
        self.pairs
            .iter()
            .filter(|p| seen.insert(p.unit.unit_name.as_str()))
            .map(|p| &p.unit)
            .collect()
    }
}

/// Picks the first token of `reply` that names one of `offered`.
fn named_unit<'a>(
    reply: &str,
    offered: &[&'a HardwareLibraryEntry],
) -> Option<&'a HardwareLibraryEntry> {
    reply
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .find_map(|tok| offered.iter().find(|e| e.unit_name == tok).copied())
}

/// Maps each layer: unique pattern match first, then the LLM among the
/// category-compatible units when the match is ambiguous or absent.
/// Decisions are cached per layer name.
pub fn map_layers(
    layers: &[LayerRecord],
    library: &[HardwareLibraryEntry],
    gateway: &Gateway,
    templates: &Templates,
) -> Result<MappingResult, ParserError> {
    if library.is_empty() {
        return Err(ParserError::EmptyLibrary);
    }
    let system = templates.render_with("parser", &[])?;
    let mut decided: HashMap<String, Option<(usize, MappingSource)>> = HashMap::new();
    let mut result = MappingResult::default();
    for layer in layers {
        if layer.kind == LayerKind::Other {
            result.skipped.push(layer.clone());
            continue;
        }
        let decision = match decided.get(&layer.name) {
            Some(d) => *d,
            None => {
                let matches: Vec<usize> = (0..library.len())
                    .filter(|&i| library[i].supports(&layer.name))
                    .collect();
                let d = if matches.len() == 1 {
                    Some((matches[0], MappingSource::Pattern))
                } else {
                    let offered: Vec<&HardwareLibraryEntry> = if matches.len() > 1 {
                        matches.iter().map(|&i| &library[i]).collect()
                    } else {
                        library
                            .iter()
                            .filter(|e| e.category.serves(layer.kind))
                            .collect()
                    };
                    if offered.is_empty() {
                        None
                    } else {
                        let units = offered
                            .iter()
                            .map(|e| format!("- {} ({:?})", e.unit_name, e.category))
                            .collect::<Vec<_>>()
                            .join("\n");
                        let shape = layer
                            .shape_params
                            .iter()
                            .map(|(k, v)| format!("{k}={v}"))
                            .collect::<Vec<_>>()
                            .join(", ");
                        let desc = format!("{}({shape}) [{:?}]", layer.name, layer.kind);
                        let user = templates
                            .render_with("parser_user", &[("layer", &desc), ("units", &units)])?;
                        let reply = gateway.complete(&gateway.request(
                            Role::Parser,
                            system.as_str(),
                            user,
                        ))?;
                        named_unit(&reply.text, &offered).map(|e| {
                            let idx = library
                                .iter()
                                .position(|x| x.unit_name == e.unit_name)
                                .unwrap();
                            (idx, MappingSource::Llm)
                        })
                    }
                };
                decided.insert(layer.name.clone(), d);
                d
            }
        };
        match decision {
            Some((idx, source)) => result.pairs.push(MappingPair {
                layer: layer.clone(),
                unit: library[idx].clone(),
                source,
            }),
            None => result.unmapped.push(layer.clone()),
        }
    }
    Ok(result)
}

/// Asks the prompter for every distinct unmapped layer name. The answer is
/// a unit name (added to `library` when new) or `skip`. All layers sharing
/// a name receive the same answer.
pub fn resolve_unmapped(
    mut result: MappingResult,
    library: &mut Vec<HardwareLibraryEntry>,
    prompter: &mut dyn Prompter,
) -> Result<MappingResult, ParserError> {
    let pending = std::mem::take(&mut result.unmapped);
    let mut answers: HashMap<String, Option<usize>> = HashMap::new();
    for layer in pending {
        let choice = match answers.get(&layer.name) {
            Some(c) => *c,
            None => {
                let question = format!(
                    "Layer {} `{}` ({:?}) has no hardware unit. Enter a unit name, or `skip`:",
                    layer.index, layer.name, layer.kind
                );
                let answer = prompter.ask(&question)?.trim().to_string();
                let c = if answer.eq_ignore_ascii_case("skip") || answer.is_empty() {
                    None
                } else if let Some(i) = library.iter().position(|e| e.unit_name == answer) {
                    Some(i)
                } else {
                    library.push(HardwareLibraryEntry {
                        unit_name: answer,
                        category: UnitCategory::for_kind(layer.kind),
                        description_ref: None,
                        supported_layers: vec![layer.name.clone()],
                    });
                    Some(library.len() - 1)
                };
                answers.insert(layer.name.clone(), c);
                c
            }
        };
        match choice {
            Some(i) => result.pairs.push(MappingPair {
                layer,
                unit: library[i].clone(),
                source: MappingSource::User,
            }),
            None => result.skipped.push(layer),
        }
    }
    result.pairs.sort_by_key(|p| p.layer.index);
    result.skipped.sort_by_key(|l| l.index);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedProvider;
    use crate::prompter::ScriptedPrompter;
    use proptest::prelude::*;

    fn sa() -> HardwareLibraryEntry {
        HardwareLibraryEntry {
            unit_name: "systolic_array".into(),
            category: UnitCategory::SystolicArray,
            description_ref: None,
            supported_layers: vec!["Linear".into(), "Conv1D".into(), "Conv2D".into()],
        }
    }

    fn layer(index: usize, name: &str) -> LayerRecord {
        LayerRecord {
            index,
            name: name.into(),
            kind: LayerKind::classify(name),
            shape_params: BTreeMap::new(),
        }
    }

    fn offline() -> Gateway {
        Gateway::with_provider_only(ScriptedProvider::new())
    }

    #[test]
    fn two_line_listing() {
        let layers = extract_layers("Linear(in_features=768, out_features=768)\nGELU()").unwrap();
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[0].name, "Linear");
        assert_eq!(layers[0].kind, LayerKind::Compute);
        assert_eq!(layers[0].shape_params["in_features"], 768);
        assert_eq!(layers[0].shape_params["out_features"], 768);
        assert_eq!(layers[1].kind, LayerKind::Activation);
        assert!(layers[1].shape_params.is_empty());
    }

    #[test]
    fn empty_and_malformed() {
        assert!(matches!(
            extract_layers("  \n"),
            Err(ParserError::EmptyListing)
        ));
        assert!(matches!(
            extract_layers("hello world\n)"),
            Err(ParserError::MalformedListing)
        ));
    }

    #[test]
    fn containers_and_repeats() {
        let listing = "\
Net(
  (blocks): ModuleList(
    (0-2): 3 x Block(
      (fc): Linear(in_features=4, out_features=8, bias=True)
      (act): Tanh()
    )
  )
  (norm): LayerNorm((8,), eps=1e-05, elementwise_affine=True)
  (conv): Conv2d(3, 16, kernel_size=(3, 3), stride=(1, 1))
)";
        let layers = extract_layers(listing).unwrap();
        let names: Vec<_> = layers.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "Linear",
                "Tanh",
                "Linear",
                "Tanh",
                "Linear",
                "Tanh",
                "LayerNorm",
                "Conv2d"
            ]
        );
        assert!(layers.iter().enumerate().all(|(i, l)| l.index == i));
        assert_eq!(layers[6].kind, LayerKind::Other);
        assert_eq!(layers[6].shape_params["arg0"], 8);
        assert!(!layers[6].shape_params.contains_key("eps"));
        assert_eq!(layers[7].shape_params["kernel_size"], 3);
        assert_eq!(layers[7].shape_params["arg1"], 16);
    }

    #[test]
    fn pattern_match_without_llm() {
        let gw = offline();
        let r = map_layers(&[layer(0, "Linear")], &[sa()], &gw, &Templates::builtin()).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].unit.unit_name, "systolic_array");
        assert_eq!(r.pairs[0].source, MappingSource::Pattern);
        assert_eq!(gw.transcript().len(), 0);
    }

    #[test]
    fn no_candidate_means_unmapped() {
        let gw = offline();
        let r = map_layers(&[layer(0, "GELU")], &[sa()], &gw, &Templates::builtin()).unwrap();
        assert_eq!(r.unmapped.len(), 1);
        assert_eq!(gw.transcript().len(), 0);
    }

    #[test]
    fn ambiguity_goes_to_llm() {
        let mut second = sa();
        second.unit_name = "big_array".into();
        let gw =
            Gateway::with_provider_only(ScriptedProvider::new().with(Role::Parser, ["big_array"]));
        let r = map_layers(
            &[layer(0, "Linear"), layer(1, "Linear")],
            &[sa(), second],
            &gw,
            &Templates::builtin(),
        )
        .unwrap();
        assert_eq!(r.pairs[0].unit.unit_name, "big_array");
        assert_eq!(r.pairs[0].source, MappingSource::Llm);
        assert_eq!(r.pairs[1].unit.unit_name, "big_array");
        // cached per layer name
        assert_eq!(gw.calls_for(Role::Parser), 1);
    }

    #[test]
    fn llm_naming_nothing_valid_leaves_unmapped() {
        let act = HardwareLibraryEntry {
            unit_name: "gelu_unit".into(),
            category: UnitCategory::ActivationUnit,
            description_ref: None,
            supported_layers: vec!["GELU".into()],
        };
        let gw = Gateway::with_provider_only(ScriptedProvider::new().with(Role::Parser, ["NONE"]));
        let r = map_layers(
            &[layer(0, "Softmax")],
            &[sa(), act],
            &gw,
            &Templates::builtin(),
        )
        .unwrap();
        assert_eq!(r.unmapped.len(), 1);
        assert_eq!(gw.calls_for(Role::Parser), 1);
    }

    #[test]
    fn resolve_with_scripted_answer() {
        let mut lib = vec![sa()];
        let r = MappingResult {
            unmapped: vec![layer(0, "Softmax")],
            ..Default::default()
        };
        let mut p = ScriptedPrompter::new(["softmax_unit"]);
        let r = resolve_unmapped(r, &mut lib, &mut p).unwrap();
        assert!(r.unmapped.is_empty());
        assert_eq!(r.pairs[0].unit.unit_name, "softmax_unit");
        assert_eq!(r.pairs[0].source, MappingSource::User);
        assert!(lib.iter().any(|e| e.unit_name == "softmax_unit"));
    }

    #[test]
    fn resolve_identity_and_abort() {
        let mut lib = vec![sa()];
        let r = MappingResult::default();
        let mut p = ScriptedPrompter::new(Vec::<String>::new());
        assert_eq!(resolve_unmapped(r.clone(), &mut lib, &mut p).unwrap(), r);
        assert_eq!(p.asked(), 0);
        let r = MappingResult {
            unmapped: vec![layer(0, "Softmax")],
            ..Default::default()
        };
        assert!(matches!(
            resolve_unmapped(r, &mut lib, &mut p),
            Err(ParserError::Aborted(_))
        ));
    }

    #[test]
    fn glob_patterns() {
        assert!(glob_match("conv*", "Conv2d"));
        assert!(glob_match("*GELU*", "NewGELUActivation"));
        assert!(!glob_match("Linear", "LinearX"));
    }

    proptest! {
        #[test]
        fn mapping_partitions_layers(names in proptest::collection::vec(
            prop_oneof![Just("Linear"), Just("GELU"), Just("Tanh"), Just("LayerNorm"), Just("Dropout"), Just("Softmax")],
            0..40,
        ), answers in proptest::collection::vec(prop_oneof![Just("skip"), Just("act_unit"), Just("systolic_array")], 8)) {
            let layers: Vec<_> = names.iter().enumerate().map(|(i, n)| layer(i, n)).collect();
            let mut lib = vec![sa()];
            let gw = offline();
            let r = map_layers(&layers, &lib, &gw, &Templates::builtin()).unwrap();
            prop_assert_eq!(r.total(), layers.len());
            let mut p = ScriptedPrompter::new(answers);
            let r = resolve_unmapped(r, &mut lib, &mut p).unwrap();
            prop_assert_eq!(r.total(), layers.len());
            prop_assert!(r.unmapped.is_empty());
            for pair in &r.pairs {
                prop_assert!(lib.iter().any(|e| e.unit_name == pair.unit.unit_name));
            }
        }
    }
}
