// SPDX-License-Identifier: Apache-2.0

//! Synthesis adapters and report parsing.

use super::{run_with_timeout, ToolError};
use crate::hdl;
use crate::ppa::{Ppa, PpaSource};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub raw: String,
    pub parsed: Ppa,
    pub tool_id: String,
    pub status: PpaSource,
}

/// Anchors for one tool's report sections. Each regex's first group is
/// the number; `power` may capture a unit (`W`, `mW`, `uW`, `nW`) in its
/// second group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPatterns {
    pub area: String,
    /// Multiplier taking the reported area unit to mm².
    #[serde(default = "um2_to_mm2")]
    pub area_to_mm2: f64,
    /// Clock period in ns.
    pub period: String,
    pub power: String,
}

fn um2_to_mm2() -> f64 {
    1e-6
}

impl Default for ReportPatterns {
    fn default() -> Self {
        ReportPatterns {
            area: r"(?i)Total cell area\s*[:=]\s*([0-9.eE+-]+)".into(),
            area_to_mm2: 1e-6,
            period: r"(?i)clock period\s*[:=]?\s*([0-9.eE+-]+)".into(),
            power: r"(?i)Total Dynamic Power\s*[:=]\s*([0-9.eE+-]+)\s*([munp]?W)?".into(),
        }
    }
}

impl ReportPatterns {
    /// Reads a TOML pattern file; absent keys keep their defaults.
    pub fn load(path: &Path) -> Result<Self, ToolError> {
        #[derive(Deserialize)]
        struct Partial {
            area: Option<String>,
            area_to_mm2: Option<f64>,
            period: Option<String>,
            power: Option<String>,
        }
        let text = std::fs::read_to_string(path)?;
        let p: Partial = toml::from_str(&text)
            .map_err(|e| ToolError::Config(format!("{}: {e}", path.display())))?;
        let d = ReportPatterns::default();
        Ok(ReportPatterns {
            area: p.area.unwrap_or(d.area),
            area_to_mm2: p.area_to_mm2.unwrap_or(d.area_to_mm2),
            period: p.period.unwrap_or(d.period),
            power: p.power.unwrap_or(d.power),
        })
    }
}

fn capture(pattern: &str, section: &str, text: &str) -> Result<(f64, Option<String>), ToolError> {
    let re =
        Regex::new(pattern).map_err(|e| ToolError::Config(format!("{section} pattern: {e}")))?;
    let c = re
        .captures(text)
        .ok_or_else(|| ToolError::Parse(format!("{section} section not found")))?;
    let value = c
        .get(1)
        .and_then(|m| m.as_str().parse::<f64>().ok())
        .ok_or_else(|| ToolError::Parse(format!("{section} value is not a number")))?;
    Ok((value, c.get(2).map(|m| m.as_str().to_string())))
}

/// Parses all three sections or fails; never returns a partial PPA.
pub fn parse_report(raw: &str, patterns: &ReportPatterns) -> Result<Ppa, ToolError> {
    let (area, _) = capture(&patterns.area, "area", raw)?;
    let (period, _) = capture(&patterns.period, "timing", raw)?;
    let (power, unit) = capture(&patterns.power, "power", raw)?;
    if period <= 0.0 {
        return Err(ToolError::Parse(format!(
            "non-positive clock period {period}"
        )));
    }
    let to_mw = match unit.as_deref() {
        Some("W") => 1e3,
        Some("uW") => 1e-3,
        Some("nW") => 1e-6,
        Some("pW") => 1e-9,
        _ => 1.0,
    };
    let ppa = Ppa {
        power_mw: power * to_mw,
        clk_mhz: 1000.0 / period,
        area_mm2: area * patterns.area_to_mm2,
        source: PpaSource::Real,
    };
    ppa.check().map_err(|e| ToolError::Parse(e.to_string()))?;
    Ok(ppa)
}

pub trait SynthAdapter: Send + Sync {
    fn tool_id(&self) -> &str;
    fn synthesize(
        &self,
        code: &str,
        top: &str,
        workdir: &Path,
    ) -> Result<SynthesisReport, ToolError>;
}

/// Placeholder PPA proportional to code size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubSynthesizer {
    pub mm2_per_token: f64,
    pub clk_mhz: f64,
    pub mw_per_mm2: f64,
}

impl Default for StubSynthesizer {
    fn default() -> Self {
        StubSynthesizer {
            mm2_per_token: 0.001,
            clk_mhz: 500.0,
            mw_per_mm2: 50.0,
        }
    }
}

impl StubSynthesizer {
    pub fn estimate(&self, code: &str, source: PpaSource) -> Ppa {
        let area = self.mm2_per_token * hdl::token_count(code) as f64;
        Ppa {
            power_mw: area * self.mw_per_mm2,
            clk_mhz: self.clk_mhz,
            area_mm2: area,
            source,
        }
    }
}

impl SynthAdapter for StubSynthesizer {
    fn tool_id(&self) -> &str {
        "stub"
    }

    fn synthesize(
        &self,
        code: &str,
        top: &str,
        _workdir: &Path,
    ) -> Result<SynthesisReport, ToolError> {
        let parsed = self.estimate(code, PpaSource::Stub);
        Ok(SynthesisReport {
            raw: format!(
                "stub synthesis of {top}\narea_mm2 = {}\nclk_mhz = {}\npower_mw = {}\n",
                parsed.area_mm2, parsed.clk_mhz, parsed.power_mw
            ),
            parsed,
            tool_id: "stub".into(),
            status: PpaSource::Stub,
        })
    }
}

/// Estimate used when no synthesis tool produced a report.
pub fn analytical_ppa(code: &str) -> Ppa {
    StubSynthesizer::default().estimate(code, PpaSource::Analytical)
}

/// Runs an external synthesis command. `{design}` and `{top}` in `args`
/// are replaced by the design file path and top module name. The report
/// is read from `report_file` (relative to the work directory) or stdout.
#[derive(Debug, Clone)]
pub struct CommandSynthesizer {
    pub tool_id: String,
    pub program: PathBuf,
    pub args: Vec<String>,
    pub report_file: Option<String>,
    pub patterns: ReportPatterns,
    pub timeout: Duration,
}

impl SynthAdapter for CommandSynthesizer {
    fn tool_id(&self) -> &str {
        &self.tool_id
    }

    fn synthesize(
        &self,
        code: &str,
        top: &str,
        workdir: &Path,
    ) -> Result<SynthesisReport, ToolError> {
        std::fs::create_dir_all(workdir)?;
        let design = workdir.join("design.v");
        std::fs::write(&design, code)?;
        let mut cmd = Command::new(&self.program);
        for a in &self.args {
            cmd.arg(
                a.replace("{design}", &design.to_string_lossy())
                    .replace("{top}", top),
            );
        }
        let out = run_with_timeout(cmd, workdir, self.timeout).map_err(|e| match e {
            ToolError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                ToolError::AdapterUnavailable(format!("{}: {io}", self.program.display()))
            }
            e => e,
        })?;
        if out.timed_out {
            return Err(ToolError::TimeoutExceeded {
                tool: self.tool_id.clone(),
                limit: self.timeout,
            });
        }
        if out.status != Some(0) {
            return Err(ToolError::Exit {
                tool: self.tool_id.clone(),
                code: out.status,
                stderr: out.stderr,
            });
        }
        let raw = match &self.report_file {
            Some(f) => std::fs::read_to_string(workdir.join(f))?,
            None => out.stdout,
        };
        let parsed = parse_report(&raw, &self.patterns)?;
        std::fs::write(workdir.join("synth.rpt"), &raw)?;
        Ok(SynthesisReport {
            raw,
            parsed,
            tool_id: self.tool_id.clone(),
            status: PpaSource::Real,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REPORT: &str = "\
Report : area
Total cell area:          3620000.000000
Report : timing
clock period: 1.25
slack (MET)  0.02
Report : power
Total Dynamic Power    =  412.5000 mW
";

    #[test]
    fn parses_sections() {
        let p = parse_report(REPORT, &ReportPatterns::default()).unwrap();
        assert!((p.area_mm2 - 3.62).abs() < 1e-9);
        assert!((p.clk_mhz - 800.0).abs() < 1e-9);
        assert!((p.power_mw - 412.5).abs() < 1e-9);
        assert_eq!(p.source, PpaSource::Real);
    }

    #[test]
    fn missing_timing_is_an_error() {
        let text = REPORT.replace("clock period: 1.25", "");
        match parse_report(&text, &ReportPatterns::default()) {
            Err(ToolError::Parse(m)) => assert!(m.contains("timing")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn power_units() {
        let text = REPORT.replace("412.5000 mW", "2.5 uW");
        let p = parse_report(&text, &ReportPatterns::default()).unwrap();
        assert!((p.power_mw - 0.0025).abs() < 1e-12);
    }

    #[test]
    fn stub_scales_with_tokens() {
        let code = vec!["x"; 100].join(" ");
        let r = StubSynthesizer::default()
            .synthesize(&code, "m", Path::new("."))
            .unwrap();
        assert!((r.parsed.area_mm2 - 0.1).abs() < 1e-12);
        assert_eq!(r.status, PpaSource::Stub);
        assert!(r.parsed.check().is_ok());
        let empty = StubSynthesizer::default()
            .synthesize("// nothing", "m", Path::new("."))
            .unwrap();
        assert_eq!(empty.parsed.area_mm2, 0.0);
        assert!(empty.parsed.check().is_ok());
    }

    #[test]
    fn command_adapter() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = dir.path().join("fixture.rpt");
        std::fs::write(&fixture, REPORT).unwrap();
        let synth = CommandSynthesizer {
            tool_id: "cat".into(),
            program: "sh".into(),
            args: vec![
                "-c".into(),
                format!("test -f {{design}} && cat {}", fixture.display()),
            ],
            report_file: None,
            patterns: ReportPatterns::default(),
            timeout: Duration::from_secs(5),
        };
        let r = synth
            .synthesize("module m(); endmodule", "m", &dir.path().join("w"))
            .unwrap();
        assert!((r.parsed.area_mm2 - 3.62).abs() < 1e-9);
        let failing = CommandSynthesizer {
            args: vec!["-c".into(), "exit 3".into()],
            ..synth
        };
        assert!(matches!(
            failing.synthesize("x", "m", &dir.path().join("w2")),
            Err(ToolError::Exit { code: Some(3), .. })
        ));
    }

    #[test]
    fn pattern_file_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(
            &path,
            "area = 'Chip area \\(mm2\\): ([0-9.]+)'\narea_to_mm2 = 1.0\n",
        )
        .unwrap();
        let pats = ReportPatterns::load(&path).unwrap();
        let text = REPORT.replace(
            "Total cell area:          3620000.000000",
            "Chip area (mm2): 2.5",
        );
        assert!((parse_report(&text, &pats).unwrap().area_mm2 - 2.5).abs() < 1e-12);
    }
}
