//! `wfrun` command-line tool.
//!
//! Exit codes: 0 success, 1 not conformant, 2 usage or parse error,
//! 3 run finished with a failed step.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wfrun::engine::{self, AgentDescriptor, EngineError, RunOptions};
use wfrun::model::{read_crate_dir, CrateDocument};
use wfrun::profile::ProfileId;
use wfrun::{prov, query, report, validate};

const EXIT_NONCONFORMANT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUN_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "wfrun", version, about = "Workflow Run RO-Crate toolkit")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Process,
    Workflow,
    Provenance,
    Auto,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a crate against a run profile.
    Validate {
        crate_path: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        profile: ProfileArg,
        /// Also check that data entities exist on disk.
        #[arg(long)]
        payload_check: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print one block per action.
    Report {
        crate_path: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Export provenance as PROV-N.
    Prov {
        crate_path: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Query the crate's triples.
    Query {
        crate_path: PathBuf,
        /// All actions with instrument, start and end.
        #[arg(long, conflicts_with = "pattern", required_unless_present = "pattern")]
        actions: bool,
        /// `s p o` with terms `?var`, `<iri>` or `"literal"`; prefix with OPTIONAL.
        #[arg(long, num_args = 1..)]
        pattern: Vec<String>,
    },
    /// Execute a run plan and write a crate.
    Run {
        plan: PathBuf,
        /// Workflow input as name=value.
        #[arg(long = "input", value_parser = parse_key_value)]
        inputs: Vec<(String, String)>,
        #[arg(short, long)]
        output: PathBuf,
        /// Person to record as the agent.
        #[arg(long)]
        agent: Option<String>,
        /// Identifier (e.g. ORCID) for the agent.
        #[arg(long, requires = "agent")]
        agent_id: Option<String>,
        #[arg(long)]
        deterministic_ids: bool,
        /// Environment variable to pass through to steps (repeatable).
        #[arg(long = "env")]
        env_allow: Vec<String>,
    },
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected name=value, got {s:?}"))
}

fn load(path: &Path) -> Result<CrateDocument, ExitCode> {
    read_crate_dir(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_USAGE)
    })
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) | Err(code) => code,
    }
}

fn run(cmd: Cmd) -> Result<ExitCode, ExitCode> {
    match cmd {
        Cmd::Validate {
            crate_path,
            profile,
            payload_check,
            format,
        } => {
            let doc = load(&crate_path)?;
            let report = match profile {
                ProfileArg::Auto => validate::validate_auto(&doc, payload_check),
                ProfileArg::Process => validate::validate(&doc, ProfileId::Process, payload_check),
                ProfileArg::Workflow => validate::validate(&doc, ProfileId::Workflow, payload_check),
                ProfileArg::Provenance => {
                    validate::validate(&doc, ProfileId::Provenance, payload_check)
                }
            };
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Machine => println!("{}", report.to_json()),
            }
            Ok(if report.conformant {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NONCONFORMANT)
            })
        }
        Cmd::Report { crate_path, format } => {
            let doc = load(&crate_path)?;
            let views = report::action_views(&doc);
            match format {
                Format::Text => print!("{}", report::render_report(&views)),
                Format::Machine => println!(
                    "{}",
                    serde_json::to_string_pretty(&views).expect("views serialize")
                ),
            }
            for note in report::timing_annotations(&doc) {
                eprintln!("warning: {note}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Prov { crate_path, output } => {
            let doc = load(&crate_path)?;
            let pd = prov::export_prov(&doc).map_err(fail)?;
            let text = prov::render_provn(&pd);
            match output {
                Some(path) => fs::write(&path, text)
                    .map_err(|e| fail(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Query {
            crate_path,
            actions,
            pattern,
        } => {
            let doc = load(&crate_path)?;
            if actions {
                print!("action\tinstrument\tstart\tend\n");
                for r in query::builtin_actions_query(&doc) {
                    println!(
                        "{}\t{}\t{}\t{}",
                        r.action,
                        r.instrument,
                        r.start.unwrap_or_default(),
                        r.end.unwrap_or_default()
                    );
                }
            } else {
                let patterns = pattern
                    .iter()
                    .map(|p| query::parse_pattern(p))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(fail)?;
                let rows = query::match_patterns(&query::expand_triples(&doc), &patterns);
                print!("{}", query::rows_to_tsv(&query::variables(&patterns), &rows));
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run {
            plan,
            inputs,
            output,
            agent,
            agent_id,
            deterministic_ids,
            env_allow,
        } => {
            let plan = engine::load_plan_file(&plan).map_err(fail)?;
            let opts = RunOptions {
                agent: agent.map(|name| AgentDescriptor {
                    name,
                    identifier: agent_id,
                }),
                deterministic_ids,
                env_allow,
            };
            let inputs: BTreeMap<String, String> = inputs.into_iter().collect();
            match engine::execute(&plan, &inputs, &output, &opts) {
                Ok((_, record)) if record.failed() => {
                    for s in &record.steps {
                        if let engine::StepStatus::Failed { error } = &s.status {
                            eprintln!("step {} failed: {error}", s.step_id);
                        }
                    }
                    Ok(ExitCode::from(EXIT_RUN_FAILED))
                }
                Ok(_) => Ok(ExitCode::SUCCESS),
                Err(e @ EngineError::StepSpawnFailure { .. }) => {
                    eprintln!("error: {e}");
                    Ok(ExitCode::from(EXIT_RUN_FAILED))
                }
                Err(e) => Err(fail(e)),
            }
        }
    }
}
