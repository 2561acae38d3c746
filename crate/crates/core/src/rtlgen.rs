// SPDX-License-Identifier: Apache-2.0

//! Bottom-up RTL production: description closure, dependency graph,
//! work queue and the retrieve-or-generate step per module.

use crate::desc::{DescError, DescriptionLibrary, ModuleDescription};
use crate::hdl;
use crate::library::{CodeLibrary, LibraryConfig, LibraryError, RetrievalOutcome, RetrievalReason};
use crate::llm::{extract_fenced, Gateway, GatewayError, Role, TemplateError, Templates};
use crate::ppa::Ppa;
use crate::prompter::Prompter;
use crate::validator::{
    get_testbench, TestbenchError, TestbenchLibrary, Validator, ValidatorError,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RtlError {
    #[error("missing description for submodule {0:?}")]
    MissingDescription(String),
    #[error("dependency cycle through {0:?}")]
    CycleDetected(Vec<String>),
    #[error("no descriptions given")]
    Empty,
    #[error("edge references unknown module {0:?}")]
    UnknownNode(String),
    #[error("{parent} processed before its child {child}")]
    OrderViolation { parent: String, child: String },
    #[error("work queue has no pending module")]
    QueueDone,
    #[error(transparent)]
    Desc(#[from] DescError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Testbench(#[from] TestbenchError),
    #[error(transparent)]
    Validator(ValidatorError),
}

/// Edges are `(parent, child)`: the parent instantiates the child.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    nodes: BTreeSet<String>,
    edges: BTreeSet<(String, String)>,
}

impl DependencyGraph {
    pub fn new(nodes: impl IntoIterator<Item = impl Into<String>>) -> Self {
        DependencyGraph {
            nodes: nodes.into_iter().map(Into::into).collect(),
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph and rejects unknown endpoints and cycles.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = impl Into<String>>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, RtlError> {
        let mut g = DependencyGraph::new(nodes);
        for (p, c) in edges {
            g.add_edge(&p, &c)?;
        }
        Ok(g)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(p, c)| (p.as_str(), c.as_str()))
    }

    pub fn has_edge(&self, parent: &str, child: &str) -> bool {
        self.edges
            .contains(&(parent.to_string(), child.to_string()))
    }

    pub fn children<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(p, _)| p == node)
            .map(|(_, c)| c.as_str())
    }

    /// Path from `from` to `to` following parent→child edges, if any.
    fn path(&self, from: &str, to: &str) -> Option<Vec<String>> {
        let mut stack = vec![vec![from.to_string()]];
        let mut seen = BTreeSet::new();
        while let Some(path) = stack.pop() {
            let last = path.last().unwrap().clone();
            if last == to {
                return Some(path);
            }
            if !seen.insert(last.clone()) {
                continue;
            }
            for c in self.children(&last) {
                let mut next = path.clone();
                next.push(c.to_string());
                stack.push(next);
            }
        }
        None
    }

    pub fn add_edge(&mut self, parent: &str, child: &str) -> Result<(), RtlError> {
        for n in [parent, child] {
            if !self.nodes.contains(n) {
                return Err(RtlError::UnknownNode(n.to_string()));
            }
        }
        if let Some(mut cycle) = self.path(child, parent) {
            cycle.push(child.to_string());
            return Err(RtlError::CycleDetected(cycle));
        }
        self.edges.insert((parent.to_string(), child.to_string()));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleStatus {
    Pending,
    Retrieved,
    Generated,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkQueue {
    pub order: Vec<String>,
    pub status: BTreeMap<String, ModuleStatus>,
    /// Child lists copied from the graph for the order-validity check.
    children: BTreeMap<String, Vec<String>>,
}

impl WorkQueue {
    pub fn next_pending(&self) -> Option<&str> {
        self.order
            .iter()
            .find(|m| self.status[*m] == ModuleStatus::Pending)
            .map(String::as_str)
    }

    pub fn halted(&self) -> bool {
        self.status.values().any(|s| *s == ModuleStatus::Failed)
    }

    pub fn children_of(&self, module: &str) -> &[String] {
        self.children.get(module).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn set(&mut self, module: &str, status: ModuleStatus) {
        if let Some(s) = self.status.get_mut(module) {
            *s = status;
        }
    }
}

/// Every description reachable from `root`, root first, each once.
pub fn decompose(
    root: &ModuleDescription,
    library: &DescriptionLibrary,
) -> Result<Vec<ModuleDescription>, RtlError> {
    root.check().map_err(DescError::from)?;
    let mut out: Vec<ModuleDescription> = Vec::new();
    let mut seen = BTreeSet::new();
    // explicit DFS keeping the current path for cycle reports
    fn visit(
        d: &ModuleDescription,
        library: &DescriptionLibrary,
        path: &mut Vec<String>,
        seen: &mut BTreeSet<String>,
        out: &mut Vec<ModuleDescription>,
    ) -> Result<(), RtlError> {
        if path.contains(&d.module) {
            let mut cycle = path.clone();
            cycle.push(d.module.clone());
            return Err(RtlError::CycleDetected(cycle));
        }
        if !seen.insert(d.module.clone()) {
            return Ok(());
        }
        out.push(d.clone());
        path.push(d.module.clone());
        for child in d.child_modules() {
            let cd = library
                .lookup(child)?
                .ok_or_else(|| RtlError::MissingDescription(child.to_string()))?;
            visit(&cd, library, path, seen, out)?;
        }
        path.pop();
        Ok(())
    }
    visit(root, library, &mut Vec::new(), &mut seen, &mut out)?;
    Ok(out)
}

fn mentions(text: &str, name: &str) -> bool {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .any(|w| w == name)
}

/// Structural edges from submodule lists, plus LLM-confirmed edges among
/// modules whose free text mentions one another. Proposals naming unknown
/// modules or closing a cycle are dropped and reported as warnings.
pub fn analyze_dependencies(
    descriptions: &[ModuleDescription],
    gateway: &Gateway,
    templates: &Templates,
) -> Result<(DependencyGraph, Vec<String>), RtlError> {
    if descriptions.is_empty() {
        return Err(RtlError::Empty);
    }
    let mut graph = DependencyGraph::new(descriptions.iter().map(|d| d.module.clone()));
    for d in descriptions {
        for child in d.child_modules() {
            graph.add_edge(&d.module, child)?;
        }
    }
    let mut candidates = Vec::new();
    for a in descriptions {
        for b in descriptions {
            if a.module != b.module
                && !graph.has_edge(&a.module, &b.module)
                && mentions(&a.description, &b.module)
            {
                candidates.push(format!("{} mentions {}", a.module, b.module));
            }
        }
    }
    let mut warnings = Vec::new();
    if candidates.is_empty() {
        return Ok((graph, warnings));
    }
    let modules = graph.nodes().collect::<Vec<_>>().join("\n");
    let edges = graph
        .edges()
        .map(|(p, c)| format!("{p} -> {c}"))
        .collect::<Vec<_>>()
        .join("\n");
    let system = templates.render_with("dep_analyzer", &[])?;
    let user = templates.render_with(
        "dep_analyzer_user",
        &[
            ("modules", &modules),
            ("edges", &edges),
            ("mentions", &candidates.join("\n")),
        ],
    )?;
    let reply = gateway.complete(&gateway.request(Role::DepAnalyzer, system, user))?;
    for line in reply.text.lines() {
        let Some((p, c)) = line.split_once("->") else {
            continue;
        };
        let (p, c) = (p.trim().trim_start_matches('-').trim(), c.trim());
        if graph.has_edge(p, c) {
            continue;
        }
        if let Err(e) = graph.add_edge(p, c) {
            tracing::warn!(parent = p, child = c, error = %e, "discarding proposed dependency");
            warnings.push(format!("discarded proposed edge {p} -> {c}: {e}"));
        }
    }
    Ok((graph, warnings))
}

/// Children before parents; among ready modules the lexicographically
/// smallest goes first.
pub fn topo_order(graph: &DependencyGraph) -> Result<WorkQueue, RtlError> {
    let mut children: BTreeMap<String, Vec<String>> = graph
        .nodes
        .iter()
        .map(|n| (n.clone(), Vec::new()))
        .collect();
    for (p, c) in &graph.edges {
        children
            .get_mut(p)
            .expect("edge endpoints are nodes")
            .push(c.clone());
    }
    let mut remaining: BTreeMap<&str, usize> = children
        .iter()
        .map(|(n, cs)| (n.as_str(), cs.len()))
        .collect();
    let mut ready: BTreeSet<&str> = remaining
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut order = Vec::with_capacity(children.len());
    while let Some(n) = ready.pop_first() {
        order.push(n.to_string());
        remaining.remove(n);
        for (p, c) in &graph.edges {
            if c == n {
                let d = remaining.get_mut(p.as_str()).expect("parent still pending");
                *d -= 1;
                if *d == 0 {
                    ready.insert(p.as_str());
                }
            }
        }
    }
    if !remaining.is_empty() {
        return Err(RtlError::CycleDetected(
            remaining.keys().map(|s| s.to_string()).collect(),
        ));
    }
    Ok(WorkQueue {
        status: order
            .iter()
            .map(|m| (m.clone(), ModuleStatus::Pending))
            .collect(),
        order,
        children,
    })
}

/// True when every queued module is done or present in the library.
pub fn phase2_complete(queue: &WorkQueue, library: &CodeLibrary) -> bool {
    queue.order.iter().all(|m| {
        matches!(
            queue.status[m],
            ModuleStatus::Retrieved | ModuleStatus::Generated
        ) || library.contains(m)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleOutcome {
    pub module: String,
    pub status: ModuleStatus,
    pub retrieval: RetrievalReason,
    /// Library key reused, when retrieved.
    pub retrieved_key: Option<String>,
    pub similarity: Option<f64>,
    /// Retrieval was rejected because ports differ from the description.
    pub port_mismatch: bool,
    pub code: Option<String>,
    pub ppa: Option<Ppa>,
    pub testbench_trusted: Option<bool>,
    pub repair_iterations: u32,
    pub repair_rounds: u32,
    pub manual_requests: u32,
    pub failure: Option<String>,
}

/// Checks that `code` declares exactly the description's ports with the
/// same widths (widths it cannot evaluate are accepted).
pub fn ports_match(desc: &ModuleDescription, code: &str) -> bool {
    let Some(top) = hdl::module_names(code).into_iter().last() else {
        return false;
    };
    let Some(ports) = hdl::declared_ports(code, &top) else {
        return false;
    };
    if ports.len() != desc.ports.len() {
        return false;
    }
    desc.ports.iter().all(|p| {
        ports
            .iter()
            .any(|(n, w)| *n == p.name && w.map_or(true, |w| w == p.width))
    })
}

/// Renames the last module declaration of `code` to `name`.
fn rename_top(code: &str, name: &str) -> String {
    let Some(top) = hdl::module_names(code).into_iter().last() else {
        return code.to_string();
    };
    if top == name {
        return code.to_string();
    }
    let pattern =
        regex::Regex::new(&format!(r"\bmodule\s+{}\b", regex::escape(&top))).expect("escaped");
    let last = pattern.find_iter(code).last().expect("module was found");
    format!(
        "{}module {}{}",
        &code[..last.start()],
        name,
        &code[last.end()..]
    )
}

pub struct RtlGenerator<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a Templates,
    pub validator: &'a Validator<'a>,
    pub testbenches: &'a TestbenchLibrary,
    pub library_config: LibraryConfig,
}

impl<'a> RtlGenerator<'a> {
    /// Validated code of every module below `module`, children first.
    fn dependency_code(
        &self,
        queue: &WorkQueue,
        module: &str,
        library: &CodeLibrary,
        produced: &BTreeMap<String, String>,
    ) -> String {
        let mut order = Vec::new();
        let mut stack = vec![module.to_string()];
        let mut seen = BTreeSet::new();
        while let Some(m) = stack.pop() {
            for c in queue.children_of(&m) {
                if seen.insert(c.clone()) {
                    order.push(c.clone());
                    stack.push(c.clone());
                }
            }
        }
        order.reverse();
        order
            .iter()
            .filter_map(|m| {
                produced
                    .get(m)
                    .cloned()
                    .or_else(|| library.get(m).map(|e| e.code.clone()))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Retrieves or generates the next pending module. `produced` collects
    /// the code chosen for each module of this run.
    pub fn process_next(
        &self,
        queue: &mut WorkQueue,
        descriptions: &BTreeMap<String, ModuleDescription>,
        library: &mut CodeLibrary,
        produced: &mut BTreeMap<String, String>,
        prompter: &mut dyn Prompter,
    ) -> Result<ModuleOutcome, RtlError> {
        let module = queue.next_pending().ok_or(RtlError::QueueDone)?.to_string();
        for child in queue.children_of(&module) {
            if !matches!(
                queue.status[child],
                ModuleStatus::Retrieved | ModuleStatus::Generated
            ) {
                return Err(RtlError::OrderViolation {
                    parent: module.clone(),
                    child: child.clone(),
                });
            }
        }
        let desc = descriptions
            .get(&module)
            .ok_or_else(|| RtlError::MissingDescription(module.clone()))?;
        let decision = library.retrieve(&module, &self.library_config);
        let mut outcome = ModuleOutcome {
            module: module.clone(),
            status: ModuleStatus::Pending,
            retrieval: decision.reason,
            retrieved_key: None,
            similarity: decision.best.as_ref().map(|(_, s)| *s),
            port_mismatch: false,
            code: None,
            ppa: None,
            testbench_trusted: None,
            repair_iterations: 0,
            repair_rounds: 0,
            manual_requests: 0,
            failure: None,
        };
        if let (RetrievalOutcome::Retrieve, Some((entry, _))) = (decision.outcome, &decision.best) {
            if ports_match(desc, &entry.code) {
                let code = rename_top(&entry.code, &module);
                queue.set(&module, ModuleStatus::Retrieved);
                produced.insert(module.clone(), code.clone());
                outcome.status = ModuleStatus::Retrieved;
                outcome.retrieved_key = Some(entry.key.clone());
                outcome.code = Some(code);
                outcome.ppa = Some(entry.ppa);
                return Ok(outcome);
            }
            tracing::warn!(
                module,
                key = entry.key,
                "retrieved code ports differ from description, generating"
            );
            outcome.port_mismatch = true;
        }

        let children_code: Vec<String> = queue
            .children_of(&module)
            .iter()
            .filter_map(|c| {
                produced
                    .get(c)
                    .map(|code| format!("```verilog\n{code}\n```"))
            })
            .collect();
        let children_text = if children_code.is_empty() {
            "(none)".to_string()
        } else {
            children_code.join("\n")
        };
        let system = self.templates.render_with("coder", &[])?;
        let user = self.templates.render_with(
            "coder_user",
            &[
                ("description_json", &desc.to_json()),
                ("children", &children_text),
            ],
        )?;
        let reply = self
            .gateway
            .complete(&self.gateway.request(Role::Coder, system, user))?;
        let code = extract_fenced(&reply.text);
        let bench = get_testbench(desc, self.testbenches, self.gateway, self.templates)?;
        outcome.testbench_trusted = Some(bench.trusted);
        let deps = self.dependency_code(queue, &module, library, produced);
        match self
            .validator
            .validate_with_deps(&module, &code, &deps, &bench.text, prompter)
        {
            Ok(v) => {
                library.insert(&module, &v.code, v.ppa, &self.library_config)?;
                queue.set(&module, ModuleStatus::Generated);
                produced.insert(module.clone(), v.code.clone());
                outcome.status = ModuleStatus::Generated;
                outcome.code = Some(v.code);
                outcome.ppa = Some(v.ppa);
                outcome.repair_iterations = v.iterations;
                outcome.repair_rounds = v.rounds.len() as u32;
                outcome.manual_requests = v.manual_requests;
            }
            Err(ValidatorError::Exhausted {
                iterations,
                best_failed,
                ..
            }) => {
                queue.set(&module, ModuleStatus::Failed);
                outcome.status = ModuleStatus::Failed;
                outcome.repair_iterations = iterations;
                outcome.manual_requests = 1;
                outcome.failure = Some(format!(
                    "validation exhausted after {iterations} iterations, best attempt fails {best_failed} case(s)"
                ));
            }
            Err(e) => return Err(RtlError::Validator(e)),
        }
        Ok(outcome)
    }
}
