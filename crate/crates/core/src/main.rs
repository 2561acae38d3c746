// SPDX-License-Identifier: Apache-2.0

use anyhow::{bail, Context, Result};
use chipforge::dse::DseObjective;
use chipforge::library::CodeLibrary;
use chipforge::llm::CassetteMode;
use chipforge::metrics::pass_at_k;
use chipforge::pipeline::{self, RunConfig, RunMode};
use chipforge::Ppa;
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "chipforge",
    version,
    about = "LLM agent pipeline for chiplet RTL generation and design-space exploration"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every phase for one design.
    Run(RunArgs),
    /// Repeat seeded runs and report pass@k.
    Bench(BenchArgs),
    /// Inspect or prune a code library.
    #[command(subcommand)]
    Library(LibraryCommand),
    /// Design-space exploration on its own.
    #[command(subcommand)]
    Dse(DseCommand),
    /// Metric helpers.
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

/// Overrides for fields of the run config file.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML run config.
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// simple_design or chiplet.
    #[arg(long)]
    mode: Option<RunMode>,
    /// high_performance or compact_area.
    #[arg(long, value_parser = parse_objective)]
    objective: Option<DseObjective>,
    #[arg(long)]
    top: Option<String>,
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// record, replay or passthrough.
    #[arg(long)]
    cassette_mode: Option<CassetteMode>,
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Scripted answers for interactive questions.
    #[arg(long)]
    answers: Option<PathBuf>,
}

fn parse_objective(s: &str) -> Result<DseObjective, String> {
    match s {
        "high_performance" => Ok(DseObjective::HighPerformance),
        "compact_area" => Ok(DseObjective::CompactArea),
        other => Err(format!("unknown objective {other:?}")),
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        let cwd = std::env::current_dir()?;
        let abs = |p: &PathBuf| {
            if p.is_relative() {
                cwd.join(p)
            } else {
                p.clone()
            }
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(o) = self.objective {
            cfg.objective = o;
        }
        if let Some(t) = &self.top {
            cfg.top = Some(t.clone());
        }
        if let Some(c) = &self.cassette {
            cfg.cassette.path = Some(abs(c));
        }
        if let Some(m) = self.cassette_mode {
            cfg.cassette.mode = m;
        }
        if let Some(w) = &self.workspace {
            cfg.paths.workspace = Some(abs(w));
        }
        if let Some(a) = &self.answers {
            cfg.answers = Some(abs(a));
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Where to write the JSON report (overrides the config).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    /// k values; repeat the flag for several.
    #[arg(short, long = "k", default_values_t = [1u64])]
    ks: Vec<u64>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LibraryCommand {
    /// List entries with weight and PPA.
    Ls {
        path: PathBuf,
        #[arg(long, default_value_t = 512)]
        dim: usize,
    },
    /// Remove entries whose weight is below the threshold.
    Gc {
        path: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        t_h: f64,
        #[arg(long, default_value_t = 512)]
        dim: usize,
    },
}

#[derive(Subcommand)]
enum DseCommand {
    /// Map a model listing and explore with given unit PPA.
    Explore {
        #[command(flatten)]
        config: ConfigArgs,
        /// JSON object of unit name to PPA.
        #[arg(long)]
        unit_ppa: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// pass@k for n generations with c successes.
    Passk {
        #[arg(short)]
        n: u64,
        #[arg(short)]
        c: u64,
        #[arg(short)]
        k: u64,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = args.config.load()?;
    if let Some(r) = args.report {
        cfg.paths.report = Some(r);
    }
    let mut prompter = pipeline::open_prompter(&cfg)?;
    let report = pipeline::run(&cfg, prompter.as_mut())?;
    print!("{}", report.summary());
    Ok(ExitCode::from(report.exit_code as u8))
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let cfg = args.config.load()?;
    let table = pipeline::bench(&cfg, args.trials, &args.ks, args.csv.as_deref())?;
    print!("{}", table.to_csv());
    Ok(ExitCode::SUCCESS)
}

fn library(cmd: LibraryCommand) -> Result<ExitCode> {
    match cmd {
        LibraryCommand::Ls { path, dim } => {
            let lib = CodeLibrary::open(&path, dim)?;
            println!(
                "{:<32} {:>10} {:>10} {:>10} {:>10}",
                "key", "weight", "area_mm2", "clk_mhz", "power_mw"
            );
            for e in lib.entries() {
                println!(
                    "{:<32} {:>10.4} {:>10.4} {:>10.1} {:>10.4}",
                    e.key, e.weight, e.ppa.area_mm2, e.ppa.clk_mhz, e.ppa.power_mw
                );
            }
        }
        LibraryCommand::Gc { path, t_h, dim } => {
            if !(t_h > 0.0) {
                bail!("t_h must be positive");
            }
            let mut lib = CodeLibrary::open(&path, dim)?;
            let removed = lib.collect_garbage(t_h);
            lib.save()?;
            println!(
                "removed {removed} entr{}; {} left",
                if removed == 1 { "y" } else { "ies" },
                lib.len()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn dse(cmd: DseCommand) -> Result<ExitCode> {
    let DseCommand::Explore {
        config,
        unit_ppa,
        out,
        csv,
    } = cmd;
    let cfg = config.load()?;
    let text = std::fs::read_to_string(&unit_ppa)
        .with_context(|| format!("reading {}", unit_ppa.display()))?;
    let ppa: BTreeMap<String, Ppa> = serde_json::from_str(&text).context("parsing unit PPA")?;
    let mut prompter = pipeline::open_prompter(&cfg)?;
    let report = pipeline::explore_listing(&cfg, &ppa, prompter.as_mut())?;
    if let Some(p) = out {
        write(&p, &report.to_json())?;
    }
    if let Some(p) = csv {
        write(&p, &report.to_csv())?;
    }
    println!(
        "chosen {} latency {:.3} ns area {:.4} mm2 power density {:.3} mW/mm2 satisfied={} rounds={}",
        report.chosen,
        report.eval.latency_ns,
        report.eval.area_mm2,
        report.eval.power_density,
        report.satisfied,
        report.rounds_used
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Library(c) => library(c),
        Command::Dse(c) => dse(c),
        Command::Metrics(MetricsCommand::Passk { n, c, k }) => pass_at_k(n, c, k)
            .map(|v| {
                println!("{v:.6}");
                ExitCode::SUCCESS
            })
            .map_err(Into::into),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
