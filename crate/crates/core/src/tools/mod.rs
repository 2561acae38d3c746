// SPDX-License-Identifier: Apache-2.0

//! Boundaries to external EDA tools: HDL simulation, synthesis report
//! parsing and layout configuration.

pub mod layout;
pub mod sim;
pub mod synth;

pub use layout::{
    emit_layout_config, revise_layout_config, DesignSummary, LayoutConfig, LayoutError,
};
pub use sim::{
    declared_cases, parse_sim_log, IcarusSimulator, SimAdapter, SimReport, StubRule, StubSimulator,
};
pub use synth::{
    analytical_ppa, parse_report, CommandSynthesizer, ReportPatterns, StubSynthesizer,
    SynthAdapter, SynthesisReport,
};

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("{tool} exited with status {code:?}: {stderr}")]
    Exit {
        tool: String,
        code: Option<i32>,
        stderr: String,
    },
    #[error("{tool} exceeded {limit:?}")]
    TimeoutExceeded { tool: String, limit: Duration },
    #[error("report parse error: {0}")]
    Parse(String),
    #[error("invalid adapter configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) struct CmdOutput {
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
}

/// Runs `cmd` in `dir` with a wall-clock cap. Output goes through files so
/// a chatty child cannot block on a full pipe while we poll.
pub(crate) fn run_with_timeout(
    mut cmd: Command,
    dir: &Path,
    limit: Duration,
) -> Result<CmdOutput, ToolError> {
    let out_path = dir.join(".stdout");
    let err_path = dir.join(".stderr");
    let out = std::fs::File::create(&out_path)?;
    let err = std::fs::File::create(&err_path)?;
    let mut child = cmd
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(out)
        .stderr(err)
        .spawn()?;
    let started = Instant::now();
    let (status, timed_out) = loop {
        if let Some(s) = child.try_wait()? {
            break (s.code(), false);
        }
        if started.elapsed() >= limit {
            let _ = child.kill();
            let _ = child.wait();
            break (None, true);
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let read = |p: &Path| -> std::io::Result<String> {
        let mut s = Vec::new();
        std::fs::File::open(p)?.read_to_end(&mut s)?;
        Ok(String::from_utf8_lossy(&s).into_owned())
    };
    Ok(CmdOutput {
        status,
        stdout: read(&out_path)?,
        stderr: read(&err_path)?,
        timed_out,
    })
}
