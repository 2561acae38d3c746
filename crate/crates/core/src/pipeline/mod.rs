// SPDX-License-Identifier: Apache-2.0

//! End-to-end orchestration of the four phases, plus the `bench` harness.
//!
//! Phase order for a chiplet run: parse and map the model listing,
//! describe every mapped unit, build RTL bottom-up, explore the design
//! space, integrate a top-level chiplet under the chosen PPA targets, then
//! emit the layout configuration. Simple-design runs skip parsing and
//! exploration.

mod config;
mod report;

pub use config::{
    CassetteConfig, LayoutSettings, PathsConfig, ProviderConfig, ProviderKind, RunConfig, RunMode,
    SimulatorConfig, SimulatorKind, SpaceConfig, SynthesizerConfig, SynthesizerKind,
    ValidationOverrides,
};
pub use report::{
    DseSummary, LibraryDelta, MappedLayer, MappingSummary, ModuleRecord, PhaseRecord, PhaseStatus,
    RunReport, RunStatus, TokenUsage, WeightChange,
};

use crate::desc::{DescError, DescGenerator, DescriptionLibrary, ModuleDescription};
use crate::dse::{build_graph, explore, AnalyticalModel, ExploreReport};
use crate::library::CodeLibrary;
use crate::llm::{
    Cassette, CassetteMode, Gateway, LiveProvider, LlmProvider, ScriptedProvider, Templates,
};
use crate::metrics::{pass_at_k, DomainError, TrialLedger};
use crate::parser::{
    extract_layers, load_hardware_library, map_layers, resolve_unmapped, MappingResult, ParserError,
};
use crate::ppa::{Ppa, PpaSource};
use crate::prompter::{Prompter, ScriptedPrompter, TerminalPrompter};
use crate::rtlgen::{
    analyze_dependencies, decompose, topo_order, ModuleOutcome, ModuleStatus, RtlError,
    RtlGenerator,
};
use crate::tools::{
    emit_layout_config, revise_layout_config, CommandSynthesizer, DesignSummary, IcarusSimulator,
    SimAdapter, StubSimulator, StubSynthesizer, SynthAdapter,
};
use crate::validator::{TestbenchLibrary, Validator, ValidatorError};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

/// Name of the integrated chiplet when the config gives none.
pub const DEFAULT_CHIPLET_TOP: &str = "chiplet_top";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("startup: {0}")]
    Startup(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("{0}")]
    Io(String),
    #[error("{phase}: {message}")]
    Phase { phase: String, message: String },
}

impl From<Stop> for PipelineError {
    fn from(s: Stop) -> Self {
        PipelineError::Phase {
            phase: s.phase.into(),
            message: s.message,
        }
    }
}

/// Shared, read-only services for one run.
struct Services {
    gateway: Gateway,
    templates: Templates,
    sim: Box<dyn SimAdapter>,
    synth: Box<dyn SynthAdapter>,
    testbenches: TestbenchLibrary,
    workspace: PathBuf,
}

fn startup(e: impl Display) -> PipelineError {
    PipelineError::Startup(e.to_string())
}

impl Services {
    fn start(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let workspace = cfg.workspace();
        std::fs::create_dir_all(&workspace)
            .map_err(|e| startup(format!("workspace {}: {e}", workspace.display())))?;

        let mut templates = Templates::builtin();
        if let Some(dir) = &cfg.paths.templates {
            templates = templates.with_dir(dir).map_err(startup)?;
        }

        let provider: Option<Box<dyn LlmProvider>> = match cfg.provider.kind {
            ProviderKind::None => None,
            ProviderKind::Scripted => {
                let path = cfg
                    .provider
                    .script
                    .as_ref()
                    .expect("checked by RunConfig::check");
                Some(Box::new(ScriptedProvider::load(path).map_err(startup)?))
            }
            ProviderKind::Live => Some(Box::new(LiveProvider::from_env().map_err(startup)?)),
        };
        let cassette = match (cfg.cassette.mode, &cfg.cassette.path) {
            (CassetteMode::Replay, Some(path)) => Cassette::load(path)
                .map_err(|e| startup(format!("cassette {}: {e}", path.display())))?,
            _ => Cassette::new(),
        };
        let log = workspace.join("llm_log.jsonl");
        if log.exists() {
            std::fs::remove_file(&log).map_err(startup)?;
        }
        let mut gateway = Gateway::new(cfg.llm.clone())
            .with_cassette(cfg.cassette.mode, cassette, cfg.cassette.path.clone())
            .with_log_dir(workspace.clone());
        if let Some(p) = provider {
            gateway = gateway.with_provider(p);
        }

        let sim: Box<dyn SimAdapter> = match cfg.simulator.kind {
            SimulatorKind::Stub => Box::new(match &cfg.simulator.rules {
                Some(p) => StubSimulator::load(p).map_err(startup)?,
                None => StubSimulator::default(),
            }),
            SimulatorKind::Icarus => {
                let mut s = IcarusSimulator::detect().map_err(startup)?;
                s.timeout = Duration::from_secs(cfg.simulator.timeout_s);
                Box::new(s)
            }
        };
        let synth: Box<dyn SynthAdapter> = match cfg.synthesizer.kind {
            SynthesizerKind::Stub => Box::new(StubSynthesizer::default()),
            SynthesizerKind::Command => {
                let s = &cfg.synthesizer;
                Box::new(CommandSynthesizer {
                    tool_id: s.tool_id.clone(),
                    program: s.program.clone().ok_or_else(|| {
                        PipelineError::Config("command synthesizer needs `program`".into())
                    })?,
                    args: s.args.clone(),
                    report_file: s.report_file.clone(),
                    patterns: s.load_patterns()?,
                    timeout: Duration::from_secs(s.timeout_s),
                })
            }
        };
        let testbenches = TestbenchLibrary::open(&cfg.testbench_library()).map_err(startup)?;
        Ok(Services {
            gateway,
            templates,
            sim,
            synth,
            testbenches,
            workspace,
        })
    }
}

/// Mutable stores a run reads and extends.
struct Stores {
    descriptions: DescriptionLibrary,
    code: CodeLibrary,
}

impl Stores {
    fn open(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let descriptions = DescriptionLibrary::open(cfg.description_library()).map_err(startup)?;
        let code =
            CodeLibrary::open(cfg.code_library(), cfg.library.embedding_dim).map_err(startup)?;
        Ok(Stores { descriptions, code })
    }
}

/// Why a run stopped early.
struct Stop {
    phase: &'static str,
    message: String,
    aborted: bool,
}

impl Stop {
    fn failed(phase: &'static str, e: impl Display) -> Self {
        Stop {
            phase,
            message: e.to_string(),
            aborted: false,
        }
    }
}

fn rtl_stop(phase: &'static str, e: RtlError) -> Stop {
    let aborted = matches!(e, RtlError::Validator(ValidatorError::Aborted(_)));
    Stop {
        phase,
        message: e.to_string(),
        aborted,
    }
}

/// Modules produced so far, shared across the RTL and integration phases.
#[derive(Default)]
struct RtlState {
    produced: BTreeMap<String, String>,
    done: BTreeMap<String, ModuleStatus>,
    outcomes: Vec<ModuleOutcome>,
}

impl RtlState {
    fn outcome(&self, module: &str) -> Option<&ModuleOutcome> {
        self.outcomes.iter().find(|o| o.module == module)
    }
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    svc: &'a Services,
    report: RunReport,
    state: RtlState,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a RunConfig, svc: &'a Services) -> Self {
        Runner {
            cfg,
            svc,
            report: RunReport {
                mode: cfg.mode,
                seed: cfg.seed,
                top: match cfg.mode {
                    RunMode::SimpleDesign => cfg.top.clone(),
                    RunMode::Chiplet => Some(
                        cfg.top
                            .clone()
                            .unwrap_or_else(|| DEFAULT_CHIPLET_TOP.into()),
                    ),
                },
                status: RunStatus::Success,
                exit_code: 0,
                phases: Vec::new(),
                mapping: None,
                descriptions_generated: Vec::new(),
                descriptions_reused: Vec::new(),
                modules: Vec::new(),
                unit_ppa: BTreeMap::new(),
                dse: None,
                final_ppa: None,
                library: LibraryDelta::default(),
                layout: None,
                token_usage: TokenUsage::default(),
                warnings: Vec::new(),
            },
            state: RtlState::default(),
        }
    }

    fn phase(&mut self, phase: &str, status: PhaseStatus, detail: impl Into<String>) {
        self.report.phases.push(PhaseRecord {
            phase: phase.into(),
            status,
            detail: detail.into(),
        });
    }

    fn desc_gen(&self) -> DescGenerator<'_> {
        DescGenerator::new(&self.svc.gateway, &self.svc.templates)
    }

    /// Library description when stored, otherwise a generated one.
    fn describe(
        &mut self,
        stores: &mut Stores,
        name: &str,
        hints: &str,
    ) -> Result<ModuleDescription, DescError> {
        if let Some(d) = stores.descriptions.lookup(name)? {
            self.report.descriptions_reused.push(name.to_string());
            return Ok(d);
        }
        let d = self.desc_gen().generate_description(
            &mut stores.descriptions,
            name,
            hints,
            None,
            self.cfg.desc_max_rounds,
        )?;
        self.report.descriptions_generated.push(name.to_string());
        Ok(d)
    }

    /// Makes sure every submodule below `root` has a description.
    fn describe_children(
        &mut self,
        stores: &mut Stores,
        root: &ModuleDescription,
    ) -> Result<(), DescError> {
        let mut stack = vec![root.clone()];
        let mut seen = BTreeSet::from([root.module.clone()]);
        while let Some(parent) = stack.pop() {
            for sub in &parent.submodules {
                if !seen.insert(sub.module.clone()) {
                    continue;
                }
                let hints = format!(
                    "Submodule instance {} of {}. Parent function: {}",
                    sub.instance, parent.module, parent.description
                );
                let child = self.describe(stores, &sub.module, &hints)?;
                stack.push(child);
            }
        }
        Ok(())
    }

    fn write_description(&self, d: &ModuleDescription) {
        let dir = self.svc.workspace.join(&d.module);
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(dir.join("description.json"), d.to_json());
        }
    }

    /// Builds every module in the closure of `roots` that is not produced
    /// yet. Returns whether all of them ended retrieved or generated.
    fn build(
        &mut self,
        stores: &mut Stores,
        roots: &[ModuleDescription],
        validator: &Validator<'_>,
        prompter: &mut dyn Prompter,
        phase: &'static str,
    ) -> Result<bool, Stop> {
        let mut descs: BTreeMap<String, ModuleDescription> = BTreeMap::new();
        for root in roots {
            for d in decompose(root, &stores.descriptions).map_err(|e| rtl_stop(phase, e))? {
                descs.entry(d.module.clone()).or_insert(d);
            }
        }
        for d in descs.values() {
            self.write_description(d);
        }
        let list: Vec<ModuleDescription> = descs.values().cloned().collect();
        let (graph, warnings) = analyze_dependencies(&list, &self.svc.gateway, &self.svc.templates)
            .map_err(|e| rtl_stop(phase, e))?;
        self.report.warnings.extend(warnings);
        let mut queue = topo_order(&graph).map_err(|e| rtl_stop(phase, e))?;
        for (m, s) in &self.state.done {
            queue.set(m, *s);
        }
        let generator = RtlGenerator {
            gateway: &self.svc.gateway,
            templates: &self.svc.templates,
            validator,
            testbenches: &self.svc.testbenches,
            library_config: self.cfg.library.clone(),
        };
        while queue.next_pending().is_some() && !queue.halted() {
            let outcome = generator
                .process_next(
                    &mut queue,
                    &descs,
                    &mut stores.code,
                    &mut self.state.produced,
                    prompter,
                )
                .map_err(|e| rtl_stop(phase, e))?;
            if let Some(code) = &outcome.code {
                let dir = self.svc.workspace.join(&outcome.module);
                let _ = std::fs::create_dir_all(&dir);
                let _ = std::fs::write(dir.join(format!("{}.v", outcome.module)), code);
            }
            self.state
                .done
                .insert(outcome.module.clone(), outcome.status);
            self.report.modules.push(ModuleRecord::from(&outcome));
            self.state.outcomes.push(outcome);
        }
        Ok(!queue.halted())
    }

    fn failed_modules(&self) -> Vec<&str> {
        self.state
            .outcomes
            .iter()
            .filter(|o| o.status == ModuleStatus::Failed)
            .map(|o| o.module.as_str())
            .collect()
    }

    fn execute(&mut self, stores: &mut Stores, prompter: &mut dyn Prompter) -> Result<(), Stop> {
        let validator = Validator {
            gateway: &self.svc.gateway,
            templates: &self.svc.templates,
            sim: self.svc.sim.as_ref(),
            synth: self.svc.synth.as_ref(),
            config: self.cfg.validation_config(),
            workspace: self.svc.workspace.clone(),
        };
        match self.cfg.mode {
            RunMode::SimpleDesign => self.simple(stores, &validator, prompter),
            RunMode::Chiplet => self.chiplet(stores, &validator, prompter),
        }
    }

    fn simple(
        &mut self,
        stores: &mut Stores,
        validator: &Validator<'_>,
        prompter: &mut dyn Prompter,
    ) -> Result<(), Stop> {
        self.phase("parse", PhaseStatus::Skipped, "simple_design mode");
        let top = self.cfg.top.clone().expect("checked by RunConfig::check");
        let hints = self.cfg.hints.clone();
        let root = self
            .describe(stores, &top, &hints)
            .map_err(|e| Stop::failed("describe", e))?;
        self.describe_children(stores, &root)
            .map_err(|e| Stop::failed("describe", e))?;
        let n = self.report.descriptions_generated.len() + self.report.descriptions_reused.len();
        self.phase("describe", PhaseStatus::Ok, format!("{n} description(s)"));

        let ok = self.build(stores, &[root], validator, prompter, "rtl")?;
        self.finish_rtl(stores, ok)?;
        self.report.final_ppa = self.state.outcome(&top).and_then(|o| o.ppa);
        self.phase(
            "rtl",
            PhaseStatus::Ok,
            format!("{} module(s)", self.state.outcomes.len()),
        );
        self.phase("dse", PhaseStatus::Skipped, "simple_design mode");
        self.phase("integrate", PhaseStatus::Skipped, "simple_design mode");
        let area = self.report.final_ppa.map(|p| p.area_mm2).unwrap_or(0.0);
        self.layout(&top, area)
    }

    /// Applies multiplicative weight updates to retrieved keys once the RTL
    /// verdict is known, and fails the phase when a module failed.
    fn finish_rtl(&mut self, stores: &mut Stores, ok: bool) -> Result<(), Stop> {
        let retrieved: Vec<(String, bool)> = self
            .state
            .outcomes
            .iter()
            .filter_map(|o| o.retrieved_key.clone())
            .filter(|k| stores.code.contains(k))
            .map(|k| (k, ok))
            .collect();
        if !retrieved.is_empty() {
            stores
                .code
                .update_weights(&retrieved, &self.cfg.library)
                .map_err(|e| Stop::failed("rtl", e))?;
        }
        if ok {
            Ok(())
        } else {
            Err(Stop::failed(
                "rtl",
                format!(
                    "validation exhausted for {}",
                    self.failed_modules().join(", ")
                ),
            ))
        }
    }

    fn chiplet(
        &mut self,
        stores: &mut Stores,
        validator: &Validator<'_>,
        prompter: &mut dyn Prompter,
    ) -> Result<(), Stop> {
        let mapping = self.map(prompter)?;
        let units: Vec<_> = mapping.units().into_iter().cloned().collect();
        if units.is_empty() {
            return Err(Stop::failed("map", "no layer mapped to a hardware unit"));
        }

        // unit name -> module description
        let mut roots: Vec<(String, ModuleDescription)> = Vec::new();
        for u in &units {
            let hints = format!(
                "{:?} hardware unit serving layers: {}",
                u.category,
                u.supported_layers.join(", ")
            );
            let d = self
                .describe(stores, u.description_key(), &hints)
                .map_err(|e| Stop::failed("describe", e))?;
            self.describe_children(stores, &d)
                .map_err(|e| Stop::failed("describe", e))?;
            roots.push((u.unit_name.clone(), d));
        }
        let n = self.report.descriptions_generated.len() + self.report.descriptions_reused.len();
        self.phase("describe", PhaseStatus::Ok, format!("{n} description(s)"));

        let root_descs: Vec<_> = roots.iter().map(|(_, d)| d.clone()).collect();
        let ok = self.build(stores, &root_descs, validator, prompter, "rtl")?;
        if !ok {
            return self.finish_rtl(stores, false);
        }
        for (unit, d) in &roots {
            if let Some(ppa) = self.state.outcome(&d.module).and_then(|o| o.ppa) {
                self.report.unit_ppa.insert(unit.clone(), ppa);
            }
        }
        self.phase(
            "rtl",
            PhaseStatus::Ok,
            format!("{} module(s)", self.state.outcomes.len()),
        );

        let (explored, clk_mhz) = self.dse(&mapping)?;
        let targets = Ppa {
            power_mw: explored.eval.power_density * explored.eval.area_mm2,
            clk_mhz,
            area_mm2: explored.eval.area_mm2,
            source: PpaSource::Analytical,
        };
        let top = self
            .cfg
            .top
            .clone()
            .unwrap_or_else(|| DEFAULT_CHIPLET_TOP.to_string());
        self.integrate(
            stores, validator, prompter, &top, &roots, &explored, &targets,
        )?;
        self.layout(&top, explored.eval.area_mm2)
    }

    fn map(&mut self, prompter: &mut dyn Prompter) -> Result<MappingResult, Stop> {
        let listing_path = self
            .cfg
            .model_listing
            .as_ref()
            .expect("checked by RunConfig::check");
        let listing = std::fs::read_to_string(listing_path)
            .map_err(|e| Stop::failed("parse", format!("model listing: {e}")))?;
        let layers = extract_layers(&listing).map_err(|e| Stop::failed("parse", e))?;
        self.phase(
            "parse",
            PhaseStatus::Ok,
            format!("{} layer(s)", layers.len()),
        );

        let hw_path = self
            .cfg
            .paths
            .hardware_library
            .as_ref()
            .expect("checked by RunConfig::check");
        let mut hw = load_hardware_library(hw_path).map_err(|e| Stop::failed("map", e))?;
        let mapped = map_layers(&layers, &hw, &self.svc.gateway, &self.svc.templates)
            .map_err(|e| Stop::failed("map", e))?;
        let mapping = resolve_unmapped(mapped, &mut hw, prompter).map_err(|e| Stop {
            phase: "map",
            aborted: matches!(e, ParserError::Aborted(_)),
            message: e.to_string(),
        })?;
        let summary = MappingSummary {
            layers: mapping.total(),
            pairs: mapping
                .pairs
                .iter()
                .map(|p| MappedLayer {
                    index: p.layer.index,
                    layer: p.layer.name.clone(),
                    unit: p.unit.unit_name.clone(),
                    source: p.source,
                })
                .collect(),
            unmapped: mapping.unmapped.iter().map(|l| l.name.clone()).collect(),
            skipped: mapping.skipped.iter().map(|l| l.name.clone()).collect(),
            units: mapping
                .units()
                .iter()
                .map(|u| u.unit_name.clone())
                .collect(),
        };
        self.phase(
            "map",
            PhaseStatus::Ok,
            format!(
                "{} mapped, {} skipped, {} unit(s)",
                summary.pairs.len(),
                summary.skipped.len(),
                summary.units.len()
            ),
        );
        self.report.mapping = Some(summary);
        Ok(mapping)
    }

    /// Explores the design space; returns the report and the array clock
    /// the cost model assumed.
    fn dse(&mut self, mapping: &MappingResult) -> Result<(ExploreReport, f64), Stop> {
        let graph = build_graph(mapping, &self.report.unit_ppa, self.cfg.graph)
            .map_err(|e| Stop::failed("dse", e))?;
        let cfg = self.cfg.dse_config();
        let explored = explore(
            &graph,
            &self.cfg.space.build(),
            &cfg,
            &self.svc.gateway,
            &self.svc.templates,
            &AnalyticalModel,
        )
        .map_err(|e| Stop::failed("dse", e))?;
        let _ = std::fs::write(self.svc.workspace.join("dse.json"), explored.to_json());
        let _ = std::fs::write(self.svc.workspace.join("dse.csv"), explored.to_csv());
        if !explored.satisfied {
            self.report.warnings.push(format!(
                "no candidate met area <= {} mm2 and power density <= {} mW/mm2; chose the unconstrained optimum",
                cfg.t1, cfg.t2
            ));
        }
        self.report.dse = Some(DseSummary {
            chosen: explored.chosen.clone(),
            eval: explored.eval.clone(),
            satisfied: explored.satisfied,
            rounds_used: explored.rounds_used,
            candidates: explored.candidates.len(),
            feedback: explored
                .feedback_notes
                .iter()
                .map(|n| n.text.clone())
                .collect(),
        });
        self.phase(
            "dse",
            PhaseStatus::Ok,
            format!(
                "{} in {} round(s), satisfied={}",
                explored.chosen, explored.rounds_used, explored.satisfied
            ),
        );
        Ok((explored, graph.params.array.clk_mhz))
    }

    /// Describes the top-level chiplet under the explored PPA targets and
    /// builds it on top of the validated units.
    #[allow(clippy::too_many_arguments)]
    fn integrate(
        &mut self,
        stores: &mut Stores,
        validator: &Validator<'_>,
        prompter: &mut dyn Prompter,
        top: &str,
        roots: &[(String, ModuleDescription)],
        explored: &ExploreReport,
        targets: &Ppa,
    ) -> Result<(), Stop> {
        let units: Vec<String> = roots
            .iter()
            .map(|(u, d)| format!("{} (unit {u})", d.module))
            .collect();
        let hints = format!(
            "Top-level chiplet integrating: {}. Chosen configuration: {}.",
            units.join(", "),
            explored.chosen
        );
        let desc = self
            .desc_gen()
            .generate_description(
                &mut stores.descriptions,
                top,
                &hints,
                Some(targets),
                self.cfg.desc_max_rounds,
            )
            .map_err(|e| Stop::failed("integrate", e))?;
        self.report.descriptions_generated.push(top.to_string());
        self.describe_children(stores, &desc)
            .map_err(|e| Stop::failed("integrate", e))?;
        let mut all: Vec<ModuleDescription> = roots.iter().map(|(_, d)| d.clone()).collect();
        all.push(desc);
        let ok = self.build(stores, &all, validator, prompter, "integrate")?;
        self.finish_rtl(stores, ok).map_err(|s| Stop {
            phase: "integrate",
            ..s
        })?;
        self.report.final_ppa = self.state.outcome(top).and_then(|o| o.ppa);
        self.phase("integrate", PhaseStatus::Ok, format!("{top} validated"));
        Ok(())
    }

    fn layout(&mut self, top: &str, area_mm2: f64) -> Result<(), Stop> {
        if !self.cfg.layout.enabled {
            self.phase("layout", PhaseStatus::Skipped, "disabled");
            return Ok(());
        }
        let mut config = emit_layout_config(&DesignSummary {
            design_name: top.to_string(),
            total_area_mm2: area_mm2,
        });
        if let Some(path) = &self.cfg.layout.tool_log {
            let log = std::fs::read_to_string(path)
                .map_err(|e| Stop::failed("layout", format!("tool log: {e}")))?;
            let (revised, warnings) = revise_layout_config(
                &config,
                &log,
                &self.svc.gateway,
                &self.svc.templates,
                self.cfg.layout.max_revisions,
            )
            .map_err(|e| Stop::failed("layout", e))?;
            self.report.warnings.extend(warnings);
            config = revised;
        }
        let _ = std::fs::write(self.svc.workspace.join("layout.cfg"), config.render());
        let _ = std::fs::write(self.svc.workspace.join("layout.json"), config.to_json());
        self.phase(
            "layout",
            PhaseStatus::Ok,
            format!("revision {}", config.revision),
        );
        self.report.layout = Some(config);
        Ok(())
    }
}

/// Opens the prompter a config asks for: scripted answers or the terminal.
pub fn open_prompter(cfg: &RunConfig) -> Result<Box<dyn Prompter>, PipelineError> {
    match &cfg.answers {
        Some(path) => Ok(Box::new(
            ScriptedPrompter::from_file(path)
                .map_err(|e| startup(format!("answers {}: {e}", path.display())))?,
        )),
        None => Ok(Box::new(TerminalPrompter::stdio())),
    }
}

/// Runs every phase for the configured mode. Startup problems (bad config,
/// missing cassette, unavailable adapters) are errors; failures after
/// startup are recorded in the report with exit code 1, aborts with 2.
pub fn run(cfg: &RunConfig, prompter: &mut dyn Prompter) -> Result<RunReport, PipelineError> {
    cfg.check()?;
    let svc = Services::start(cfg)?;
    let mut stores = Stores::open(cfg)?;
    let before = report::weights(&stores.code);
    let mut runner = Runner::new(cfg, &svc);
    if let Err(stop) = runner.execute(&mut stores, prompter) {
        let status = if stop.aborted {
            PhaseStatus::Aborted
        } else {
            PhaseStatus::Failed
        };
        tracing::error!(phase = stop.phase, error = %stop.message, "run stopped");
        runner.phase(stop.phase, status, stop.message);
        runner.report.status = if stop.aborted {
            RunStatus::Aborted
        } else {
            RunStatus::Failed
        };
    }
    let mut report = runner.report;
    report.exit_code = report.status.exit_code();
    report.library = LibraryDelta::between(&before, &report::weights(&stores.code));
    let mut calls = BTreeMap::new();
    for e in svc.gateway.transcript() {
        *calls.entry(e.role.to_string()).or_insert(0) += 1;
    }
    report.token_usage = TokenUsage {
        total_tokens: svc.gateway.used_tokens(),
        calls,
        network_calls: svc.gateway.network_calls(),
    };
    let _ = std::fs::write(svc.workspace.join("report.json"), report.to_json());
    if let Some(path) = &cfg.paths.report {
        write_file(path, &report.to_json())?;
    }
    Ok(report)
}

/// Phases I and III alone: maps the listing and explores the design space
/// with caller-supplied unit PPA instead of building RTL.
pub fn explore_listing(
    cfg: &RunConfig,
    unit_ppa: &BTreeMap<String, Ppa>,
    prompter: &mut dyn Prompter,
) -> Result<ExploreReport, PipelineError> {
    let cfg = RunConfig {
        mode: RunMode::Chiplet,
        ..cfg.clone()
    };
    cfg.check()?;
    let svc = Services::start(&cfg)?;
    let mut runner = Runner::new(&cfg, &svc);
    let mapping = runner.map(prompter)?;
    runner.report.unit_ppa = unit_ppa.clone();
    Ok(runner.dse(&mapping)?.0)
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    if from.is_file() {
        if let Some(parent) = to.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::copy(from, to)?;
        return Ok(());
    }
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        copy_tree(&entry.path(), &to.join(entry.file_name()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BenchRow {
    pub k: u64,
    pub n: u64,
    pub c: u64,
    pub pass_at_k: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    /// Exit code of each trial.
    pub trials: Vec<i32>,
}

impl BenchTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["k", "n", "c", "pass_at_k"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.n.to_string(),
                r.c.to_string(),
                format!("{:.6}", r.pass_at_k),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

fn trial_path(p: &Option<PathBuf>, trial: u64) -> Option<PathBuf> {
    p.as_ref()
        .map(|p| PathBuf::from(p.to_string_lossy().replace("{trial}", &trial.to_string())))
}

/// Runs `trials` independent runs with seeds `seed, seed+1, ...`. Each
/// trial gets its own workspace under `<workspace>/trial_<i>` holding
/// fresh copies of the description, code and testbench libraries, so no
/// trial sees another's output. `{trial}` in the cassette, script or
/// answers path is replaced by the trial index. A trial succeeds when
/// its run exits 0.
pub fn bench(
    cfg: &RunConfig,
    trials: u64,
    ks: &[u64],
    csv_path: Option<&Path>,
) -> Result<BenchTable, PipelineError> {
    let max_k = ks
        .iter()
        .copied()
        .max()
        .ok_or_else(|| DomainError("no k given".into()))?;
    if ks.contains(&0) || trials < max_k {
        return Err(DomainError(format!(
            "need 1 <= k <= trials, got k={ks:?} with {trials} trial(s)"
        ))
        .into());
    }
    let base = cfg.workspace();
    let mut ledger = TrialLedger::default();
    let mut codes = Vec::new();
    for i in 0..trials {
        let dir = base.join(format!("trial_{i}"));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
        }
        let mut t = cfg.clone();
        t.seed = cfg.seed.wrapping_add(i);
        t.paths.workspace = Some(dir.join("work"));
        t.paths.report = Some(dir.join("report.json"));
        let sources = [
            cfg.description_library(),
            cfg.code_library(),
            cfg.testbench_library(),
        ];
        for (src, (field, name)) in sources.iter().zip([
            (&mut t.paths.description_library, "descriptions"),
            (&mut t.paths.code_library, "code_library.jsonl"),
            (&mut t.paths.testbench_library, "testbenches"),
        ]) {
            let dst = dir.join(name);
            if src.exists() {
                copy_tree(src, &dst)
                    .map_err(|e| PipelineError::Io(format!("{}: {e}", src.display())))?;
            }
            *field = Some(dst);
        }
        t.cassette.path = trial_path(&cfg.cassette.path, i);
        t.provider.script = trial_path(&cfg.provider.script, i);
        t.answers = trial_path(&cfg.answers, i);
        let mut prompter = open_prompter(&t)?;
        let report = run(&t, prompter.as_mut())?;
        tracing::info!(trial = i, exit = report.exit_code, "trial finished");
        ledger.record(report.exit_code == 0);
        codes.push(report.exit_code);
    }
    let rows = ks
        .iter()
        .map(|&k| {
            Ok(BenchRow {
                k,
                n: ledger.n(),
                c: ledger.successes(),
                pass_at_k: pass_at_k(ledger.n(), ledger.successes(), k)?,
            })
        })
        .collect::<Result<Vec<_>, DomainError>>()?;
    let table = BenchTable {
        rows,
        trials: codes,
    };
    if let Some(p) = csv_path {
        write_file(p, &table.to_csv())?;
    }
    Ok(table)
}
