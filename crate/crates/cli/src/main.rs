use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dcp_core::sim::generate::{generate, GenOptions};
use dcp_core::sim::{audit, presets, run, AuditReport, Scenario, Trace};

/// Cross-rollup composability simulator.
#[derive(Debug, Parser)]
#[command(name = "dcp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario, write its trace and metrics, and audit the trace.
    Run(RunArgs),
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Check a trace file against the protocol invariants.
    Audit {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Print a seeded random scenario as TOML.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        max_tx: usize,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Run a built-in scenario instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace output (JSON lines).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Metrics output (JSON); printed to stdout when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PresetAction {
    List,
    /// Print a preset's TOML.
    Emit {
        name: String,
    },
}

const EXIT_AUDIT: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run(args) => run_cmd(args),
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!("{}: ok ({} events, ends at tick {})", scenario.display(), s.events.len(), s.end_at());
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { trace } => {
            let text = fs::read_to_string(&trace).with_context(|| format!("cannot read {}", trace.display()))?;
            let parsed =
                Trace::from_jsonl(&text).map_err(|(line, e)| anyhow::anyhow!("{}:{line}: {e}", trace.display()))?;
            Ok(report(&audit(&parsed)))
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for name in presets::names() {
                        println!("{name}");
                    }
                }
                PresetAction::Emit { name } => {
                    let text = presets::source(&name).with_context(|| {
                        let known: Vec<_> = presets::names().collect();
                        format!("unknown preset {name:?} (known: {})", known.join(", "))
                    })?;
                    print!("{text}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate { seed, max_tx } => {
            let opts = GenOptions { max_tx, ..GenOptions::default() };
            print!("{}", generate(seed, &opts).to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_cmd(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut scenario = match (&args.scenario, &args.preset) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => presets::get(name).with_context(|| format!("unknown preset {name:?}"))?,
        (None, None) => unreachable!("clap requires one of --scenario/--preset"),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let out = run(&scenario);
    if let Some(path) = &args.trace {
        write(path, &out.trace.to_jsonl())?;
    }
    let metrics = out.metrics.to_json();
    match &args.metrics {
        Some(path) => write(path, &(metrics + "\n"))?,
        None => println!("{metrics}"),
    }
    Ok(report(&audit(&out.trace)))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn report(r: &AuditReport) -> ExitCode {
    if r.is_clean() {
        eprintln!(
            "audit ok: {} records, {} published, {} committed, {} rejected, {} slashes",
            r.records, r.published, r.committed, r.rejected, r.slashes
        );
        return ExitCode::SUCCESS;
    }
    for v in &r.violations {
        eprintln!("violation: {v}");
    }
    eprintln!("audit failed: {} violation(s)", r.violations.len());
    ExitCode::from(EXIT_AUDIT)
}
