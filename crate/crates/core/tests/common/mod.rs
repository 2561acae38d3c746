// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use chipforge::llm::CassetteMode;
use chipforge::pipeline::{ProviderKind, RunConfig};
use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
}

/// Loads a fixture run config and points every writable path into `tmp`.
pub fn fixture_config(name: &str, tmp: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&fixtures().join(name).join("run.toml")).unwrap();
    cfg.paths.workspace = Some(tmp.join("work"));
    cfg.paths.description_library = Some(tmp.join("descriptions"));
    cfg.paths.code_library = Some(tmp.join("code_library.jsonl"));
    cfg.paths.report = None;
    cfg
}

/// Same config, but answering from the reply script and recording the
/// cassette to `cassette`.
pub fn recording(mut cfg: RunConfig, name: &str, cassette: &Path) -> RunConfig {
    cfg.provider.kind = ProviderKind::Scripted;
    cfg.provider.script = Some(fixtures().join(name).join("script.json"));
    cfg.cassette.mode = CassetteMode::Record;
    cfg.cassette.path = Some(cassette.to_path_buf());
    cfg
}

pub mod curb {
    use super::fixtures;
    use chipforge::llm::{
        Cassette, CassetteMode, Gateway, LlmSettings, ScriptedProvider, Templates,
    };
    use chipforge::prompter::ScriptedPrompter;
    use chipforge::tools::{StubSimulator, StubSynthesizer};
    use chipforge::validator::{ValidationConfig, ValidationOutcome, Validator, ValidatorError};
    use std::path::{Path, PathBuf};

    pub fn dir() -> PathBuf {
        fixtures().join("curb")
    }

    pub fn manual() -> String {
        std::fs::read_to_string(dir().join("manual.txt")).unwrap()
    }

    /// Replays the committed cassette.
    pub fn replay_gateway() -> Gateway {
        let cassette = Cassette::load(&dir().join("cassette.json")).unwrap();
        Gateway::new(LlmSettings::default()).with_cassette(CassetteMode::Replay, cassette, None)
    }

    /// Answers from the reply script and records into `cassette`.
    pub fn recording_gateway(cassette: &Path) -> Gateway {
        let provider = ScriptedProvider::load(&dir().join("script.json")).unwrap();
        Gateway::new(LlmSettings::default())
            .with_provider(Box::new(provider))
            .with_cassette(
                CassetteMode::Record,
                Cassette::new(),
                Some(cassette.to_path_buf()),
            )
    }

    /// Validates the buggy counter with C=5, K=2 and the stub simulator.
    pub fn validate(
        gateway: &Gateway,
        work: &Path,
    ) -> (Result<ValidationOutcome, ValidatorError>, ScriptedPrompter) {
        let sim = StubSimulator::default().rule(
            "count - 8'd1",
            "FAIL: step 1 count=255\nFAIL: step 2 count=254\nTEST FAILED (8 cases)\n",
        );
        let synth = StubSynthesizer::default();
        let templates = Templates::builtin();
        let v = Validator {
            gateway,
            templates: &templates,
            sim: &sim,
            synth: &synth,
            config: ValidationConfig {
                curb: 5,
                seed: 11,
                ..Default::default()
            },
            workspace: work.to_path_buf(),
        };
        let code = std::fs::read_to_string(dir().join("counter8.v")).unwrap();
        let bench = std::fs::read_to_string(dir().join("counter8_tb.v")).unwrap();
        let mut prompter = ScriptedPrompter::new(vec![manual()]);
        let r = v.validate("counter8", &code, &bench, &mut prompter);
        (r, prompter)
    }
}

pub mod adder {
    use super::fixtures;
    use chipforge::library::CodeLibrary;
    use chipforge::tools::{IcarusSimulator, SimAdapter, SimReport};
    use std::path::Path;

    /// Simulates the seeded adder with the real simulator, or `None` when
    /// no simulator is installed.
    pub fn smoke(work: &Path) -> Option<SimReport> {
        let sim = IcarusSimulator::detect().ok()?;
        let dir = fixtures().join("adder");
        let lib = CodeLibrary::open(dir.join("code_library.jsonl"), 512).unwrap();
        let entry = lib.get("adder8").expect("seeded adder");
        let bench = std::fs::read_to_string(dir.join("adder8_tb.v")).unwrap();
        Some(sim.simulate(&entry.code, &bench, work).unwrap())
    }
}
