// SPDX-License-Identifier: Apache-2.0

use super::PipelineError;
use crate::dse::{DesignSpace, DseConfig, DseObjective, GraphOptions};
use crate::library::LibraryConfig;
use crate::llm::{CassetteMode, LlmSettings};
use crate::tools::ReportPatterns;
use crate::validator::{Objective, ValidationConfig, DEFAULT_ALPHABET};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    SimpleDesign,
    Chiplet,
}

impl std::str::FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple_design" => Ok(RunMode::SimpleDesign),
            "chiplet" => Ok(RunMode::Chiplet),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub workspace: Option<PathBuf>,
    pub description_library: Option<PathBuf>,
    pub code_library: Option<PathBuf>,
    pub testbench_library: Option<PathBuf>,
    pub hardware_library: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CassetteConfig {
    pub path: Option<PathBuf>,
    pub mode: CassetteMode,
}

impl Default for CassetteConfig {
    fn default() -> Self {
        Self {
            path: None,
            mode: CassetteMode::Passthrough,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Live,
    Scripted,
    #[default]
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Reply script for the scripted provider.
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatorKind {
    #[default]
    Stub,
    Icarus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    pub kind: SimulatorKind,
    /// Stub rule file (JSON).
    pub rules: Option<PathBuf>,
    pub timeout_s: u64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            kind: SimulatorKind::Stub,
            rules: None,
            timeout_s: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesizerKind {
    #[default]
    Stub,
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesizerConfig {
    pub kind: SynthesizerKind,
    pub tool_id: String,
    pub program: Option<PathBuf>,
    pub args: Vec<String>,
    pub report_file: Option<String>,
    /// TOML file of report anchors.
    pub patterns: Option<PathBuf>,
    pub timeout_s: u64,
}

impl Default for SynthesizerConfig {
    fn default() -> Self {
        Self {
            kind: SynthesizerKind::Stub,
            tool_id: "synth".into(),
            program: None,
            args: Vec::new(),
            report_file: None,
            patterns: None,
            timeout_s: 600,
        }
    }
}

impl SynthesizerConfig {
    pub fn load_patterns(&self) -> Result<ReportPatterns, PipelineError> {
        match &self.patterns {
            Some(p) => ReportPatterns::load(p).map_err(|e| PipelineError::Startup(e.to_string())),
            None => Ok(ReportPatterns::default()),
        }
    }
}

/// Validation overrides; unset fields take mode- and objective-dependent
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOverrides {
    pub k_threads: Option<usize>,
    pub noise_pct: Option<f64>,
    pub curb: Option<u32>,
    pub objective: Option<Objective>,
    pub symbol_alphabet: Option<Vec<String>>,
}

/// Optional grid overrides for the design space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceConfig {
    pub sa_sizes: Option<Vec<u32>>,
    pub n_sa: Option<Vec<u32>>,
    pub n_act: Option<Vec<u32>>,
    pub bw: Option<Vec<u32>>,
}

impl SpaceConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        let s = self.build();
        for (name, axis) in [
            ("sa_sizes", &s.sa_sizes),
            ("n_sa", &s.n_sa),
            ("n_act", &s.n_act),
            ("bw", &s.bw),
        ] {
            if axis.is_empty() || axis.contains(&0) {
                return Err(PipelineError::Config(format!(
                    "space axis {name} must be non-empty and positive"
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> DesignSpace {
        let full = DesignSpace::full(BTreeSet::new());
        DesignSpace {
            sa_sizes: self.sa_sizes.clone().unwrap_or(full.sa_sizes),
            n_sa: self.n_sa.clone().unwrap_or(full.n_sa),
            n_act: self.n_act.clone().unwrap_or(full.n_act),
            bw: self.bw.clone().unwrap_or(full.bw),
            required_act: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutSettings {
    pub enabled: bool,
    pub max_revisions: u32,
    /// Log of a previous layout-tool run to revise against.
    pub tool_log: Option<PathBuf>,
}

impl Default for LayoutSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            max_revisions: 3,
            tool_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: RunMode,
    pub objective: DseObjective,
    pub seed: u64,
    /// Top module name. In chiplet mode this names the integrated chiplet.
    pub top: Option<String>,
    pub hints: String,
    pub model_listing: Option<PathBuf>,
    /// Scripted answers for interactive questions; the terminal otherwise.
    pub answers: Option<PathBuf>,
    pub desc_max_rounds: u32,
    pub paths: PathsConfig,
    pub llm: LlmSettings,
    pub cassette: CassetteConfig,
    pub provider: ProviderConfig,
    pub simulator: SimulatorConfig,
    pub synthesizer: SynthesizerConfig,
    pub library: LibraryConfig,
    pub validation: ValidationOverrides,
    pub dse: DseConfig,
    pub space: SpaceConfig,
    pub graph: GraphOptions,
    pub layout: LayoutSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::SimpleDesign,
            objective: DseObjective::CompactArea,
            seed: 0,
            top: None,
            hints: String::new(),
            model_listing: None,
            answers: None,
            desc_max_rounds: 5,
            paths: PathsConfig::default(),
            llm: LlmSettings::default(),
            cassette: CassetteConfig::default(),
            provider: ProviderConfig::default(),
            simulator: SimulatorConfig::default(),
            synthesizer: SynthesizerConfig::default(),
            library: LibraryConfig::default(),
            validation: ValidationOverrides::default(),
            dse: DseConfig::default(),
            space: SpaceConfig::default(),
            graph: GraphOptions::default(),
            layout: LayoutSettings::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Parses TOML text. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("reading {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.model_listing,
            &mut self.answers,
            &mut self.paths.workspace,
            &mut self.paths.description_library,
            &mut self.paths.code_library,
            &mut self.paths.testbench_library,
            &mut self.paths.hardware_library,
            &mut self.paths.report,
            &mut self.paths.templates,
            &mut self.cassette.path,
            &mut self.provider.script,
            &mut self.simulator.rules,
            &mut self.synthesizer.program,
            &mut self.synthesizer.patterns,
            &mut self.layout.tool_log,
        ] {
            rebase(base, p);
        }
    }

    pub fn workspace(&self) -> PathBuf {
        self.paths
            .workspace
            .clone()
            .unwrap_or_else(|| PathBuf::from("work"))
    }

    /// Description library directory; defaults into the workspace.
    pub fn description_library(&self) -> PathBuf {
        self.paths
            .description_library
            .clone()
            .unwrap_or_else(|| self.workspace().join("descriptions"))
    }

    /// Code library file; defaults into the workspace.
    pub fn code_library(&self) -> PathBuf {
        self.paths
            .code_library
            .clone()
            .unwrap_or_else(|| self.workspace().join("code_library.jsonl"))
    }

    /// Testbench library directory; defaults into the workspace.
    pub fn testbench_library(&self) -> PathBuf {
        self.paths
            .testbench_library
            .clone()
            .unwrap_or_else(|| self.workspace().join("testbenches"))
    }

    /// Effective validation settings: curb 1 for simple designs and 5 for
    /// chiplet units unless overridden, objective from the run objective.
    pub fn validation_config(&self) -> ValidationConfig {
        let v = &self.validation;
        ValidationConfig {
            k_threads: v.k_threads.unwrap_or(2),
            noise_pct: v.noise_pct.unwrap_or(30.0),
            curb: v.curb.unwrap_or(match self.mode {
                RunMode::SimpleDesign => 1,
                RunMode::Chiplet => 5,
            }),
            objective: v.objective.unwrap_or(match self.objective {
                DseObjective::HighPerformance => Objective::InvClkFreq,
                DseObjective::CompactArea => Objective::Area,
            }),
            symbol_alphabet: v
                .symbol_alphabet
                .clone()
                .unwrap_or_else(|| DEFAULT_ALPHABET.iter().map(|s| s.to_string()).collect()),
            seed: self.seed,
        }
    }

    /// DSE settings with the run's objective and seed.
    pub fn dse_config(&self) -> DseConfig {
        DseConfig {
            objective: self.objective,
            seed: self.seed,
            ..self.dse.clone()
        }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.desc_max_rounds == 0 {
            return bad("desc_max_rounds must be at least 1".into());
        }
        match self.mode {
            RunMode::SimpleDesign if self.top.is_none() => {
                return bad("simple_design mode needs `top`".into())
            }
            RunMode::Chiplet if self.model_listing.is_none() => {
                return bad("chiplet mode needs `model_listing`".into())
            }
            RunMode::Chiplet if self.paths.hardware_library.is_none() => {
                return bad("chiplet mode needs `paths.hardware_library`".into())
            }
            _ => {}
        }
        self.library
            .check()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.validation_config()
            .check()
            .map_err(PipelineError::Config)?;
        self.dse_config().check().map_err(PipelineError::Config)?;
        if self.mode == RunMode::Chiplet {
            self.space.check()?;
        }
        match (self.cassette.mode, &self.cassette.path) {
            (CassetteMode::Replay | CassetteMode::Record, None) => {
                return bad(format!(
                    "cassette mode {:?} needs `cassette.path`",
                    self.cassette.mode
                ))
            }
            _ => {}
        }
        if self.provider.kind == ProviderKind::Scripted && self.provider.script.is_none() {
            return bad("scripted provider needs `provider.script`".into());
        }
        if self.cassette.mode != CassetteMode::Replay && self.provider.kind == ProviderKind::None {
            return bad("a provider is required unless the cassette is replayed".into());
        }
        Ok(())
    }
}
