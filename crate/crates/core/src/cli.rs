//! Command-line surface. Every failure ends in one stderr line of the form
//! `error reason=<tag> code=<exit>: <message>`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::SearchConfig;
use crate::error::{Error, Result};
use crate::orchestrator::{Ablation, Orchestrator, Phase};
use crate::reporting::{self, load_state, save_state, RunLedger, TreeFormat};

#[derive(Debug, Parser)]
#[command(
    name = "agentsearch",
    version,
    about = "Tree search and island evolution over generated prediction pipelines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the tree-search phase and save the ledger.
    Mcts(RunArgs),
    /// Run the evolution phase on a ledger produced by `mcts`.
    Evolve(EvolveArgs),
    /// Run both phases.
    Full(RunArgs),
    /// Print the leaderboard of a saved run.
    Report(ReportArgs),
    /// Write the search tree of a saved run as DOT or JSON.
    ExportTree(ExportArgs),
    /// Check a configuration and print the effective settings.
    ValidateConfig(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set ea_budget=40` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub ablation: AblationArg,
    /// Continue the run saved at `--state` instead of starting over.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// Where to write the final program.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    pub format: TreeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AblationArg {
    None,
    NoMcts,
    NoEa,
    RandomRoot,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::None => Ablation::None,
            AblationArg::NoMcts => Ablation::NoMcts,
            AblationArg::NoEa => Ablation::NoEa,
            AblationArg::RandomRoot => Ablation::RandomRoot,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TreeArg {
    Dot,
    Json,
}

impl ConfigArgs {
    fn load(&self) -> Result<SearchConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("rng_seed={s}"));
        }
        if let Some(b) = self.backend {
            let name = match b {
                BackendArg::Remote => "remote",
                BackendArg::Mock => "mock",
            };
            overrides.push(format!("generator_backend=\"{name}\""));
        }
        SearchConfig::load(self.config.as_deref(), &overrides)
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_cli<I, T>(args: I, interrupt: &AtomicBool) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match execute(cli, interrupt, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}

pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error reason={} code={}: {msg}", e.reason(), e.exit_code())
}

pub fn execute(cli: Cli, interrupt: &AtomicBool, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Mcts(a) => run_phase(&a, Phase::Ea, interrupt, out),
        Command::Full(a) => run_phase(&a, Phase::Done, interrupt, out),
        Command::Evolve(a) => {
            let ledger = load_state(&a.state)?;
            match ledger.phase {
                Phase::Mcts => return Err(Error::Phase("ledger has not finished the tree-search phase".into())),
                Phase::Done if ledger.evolution.is_none() => {
                    return Err(Error::Phase(format!(
                        "run was made with ablation {:?}; nothing to evolve",
                        ledger.ablation
                    )))
                }
                _ => {}
            }
            let mut orch = Orchestrator::resume(ledger)?;
            drive(&mut orch, Phase::Done, &a.state, interrupt)?;
            summarize(&orch.ledger, a.out.as_deref(), out)
        }
        Command::Report(a) => {
            let ledger = load_state(&a.state)?;
            let rows = reporting::leaderboard(&ledger, a.top_n)?;
            let text = match a.format {
                TableFormat::Text => reporting::leaderboard_text(&rows),
                TableFormat::Csv => reporting::leaderboard_csv(&rows)?,
            };
            emit(&text, a.out.as_deref(), out)
        }
        Command::ExportTree(a) => {
            let ledger = load_state(&a.state)?;
            let tree = ledger
                .tree()
                .ok_or_else(|| Error::Phase("ledger holds no search tree".into()))?;
            let format = match a.format {
                TreeArg::Dot => TreeFormat::Dot,
                TreeArg::Json => TreeFormat::Json,
            };
            emit(&reporting::export_tree(tree, format), a.out.as_deref(), out)
        }
        Command::ValidateConfig(a) => {
            let cfg = a.load()?;
            emit(&(cfg.to_json_pretty() + "\n"), a.out.as_deref(), out)
        }
    }
}

fn run_phase(a: &RunArgs, until: Phase, interrupt: &AtomicBool, out: &mut dyn Write) -> Result<()> {
    let mut orch = if a.resume {
        let ledger = load_state(&a.state)?;
        let c = &a.config;
        if !c.overrides.is_empty() || c.config.is_some() || c.seed.is_some() || c.backend.is_some() {
            return Err(Error::config(
                "--resume uses the saved configuration; drop --config/--set/--seed/--backend",
            ));
        }
        Orchestrator::resume(ledger)?
    } else {
        Orchestrator::new(a.config.load()?, a.ablation.into())?
    };
    drive(&mut orch, until, &a.state, interrupt)?;
    summarize(&orch.ledger, a.config.out.as_deref(), out)
}

/// Runs to `until`, saving the ledger on success, on interrupt, and on
/// any error that leaves a consistent ledger behind.
fn drive(orch: &mut Orchestrator, until: Phase, state: &Path, interrupt: &AtomicBool) -> Result<()> {
    let outcome = orch.run_until(until, Some(interrupt));
    let saved = save_state(&orch.ledger, state);
    outcome?;
    saved
}

fn summarize(ledger: &RunLedger, program_out: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::persistence(format!("stdout: {e}"), None);
    let mut line = format!("phase={}", ledger.phase.name());
    if let Some(id) = ledger.c_mcts {
        let q = ledger
            .tree()
            .and_then(|t| t.node(id))
            .map(|n| n.q_value)
            .unwrap_or(f64::NAN);
        line.push_str(&format!(" c_mcts={id} q={q:.6}"));
    }
    let best = ledger.best();
    if let Some(b) = best {
        line.push_str(&format!(
            " c_star={} value={:.6} label={}",
            b.id(),
            b.reward.unwrap_or(f64::NAN),
            b.program.label
        ));
    }
    writeln!(out, "{line}").map_err(io)?;
    if let Some(path) = program_out {
        let prog = match best {
            Some(b) => b,
            None => ledger
                .c_mcts
                .and_then(|id| ledger.candidate(id))
                .ok_or_else(|| Error::Phase("no program to write yet".into()))?,
        };
        std::fs::write(path, &prog.program.source_text)
            .map_err(|e| Error::persistence(format!("cannot write program: {e}"), Some(path.into())))?;
    }
    Ok(())
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Error::persistence(format!("cannot write output: {e}"), Some(p.into())))
        }
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::persistence(format!("stdout: {e}"), None)),
    }
}
