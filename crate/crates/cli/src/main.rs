//! `s2aas`: runs simulator scenarios and dumps chain state.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use s2aas_core::scenario::{
    self, dump_chain, dump_registry, load_chain_dump, load_scenario, ScenarioError, BUNDLED, EXIT_USAGE,
};

#[derive(Parser)]
#[command(name = "s2aas", version, about = "Deterministic sensing-as-a-service simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or bundled scenario and print its report.
    Run {
        /// Path to a scenario JSON file, or the name of a bundled scenario.
        scenario: String,
        /// Replace the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the final chain as JSON lines.
        #[arg(long)]
        dump_chain: Option<PathBuf>,
        /// Write the final name registry as JSON.
        #[arg(long)]
        dump_registry: Option<PathBuf>,
    },
    /// Run every bundled scenario, one thread each, and print a summary line per scenario.
    RunAll {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the bundled scenarios.
    ListScenarios,
    /// Re-parse a chain dump and print it.
    DumpChain { chain: PathBuf },
    /// Print the registry rebuilt from a chain dump.
    DumpRegistry { chain: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write(path: &PathBuf, text: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, text)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })
}

fn execute(command: Command) -> Result<i32, ScenarioError> {
    match command {
        Command::Run { scenario, seed, report, dump_chain: chain_out, dump_registry: registry_out } => {
            let outcome = scenario::run(&load_scenario(&scenario)?, seed)?;
            let json = outcome.report.to_json();
            match report {
                Some(path) => write(&path, &json)?,
                None => println!("{json}"),
            }
            if let Some(path) = chain_out {
                write(&path, &dump_chain(outcome.blocks()))?;
            }
            if let Some(path) = registry_out {
                write(&path, &dump_registry(outcome.blocks()))?;
            }
            for a in outcome.report.failed_assertions() {
                eprintln!("FAILED {} {}: {}", a.check, a.id.as_deref().unwrap_or("-"), a.detail);
            }
            Ok(outcome.exit_code())
        }
        Command::RunAll { seed } => {
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = BUNDLED
                    .iter()
                    .map(|(name, _)| s.spawn(move || (*name, scenario::run_scenario(name, seed))))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
            });
            let mut code = 0;
            for (name, result) in results {
                match result {
                    Ok(out) => {
                        let status = if out.report.passed { "PASS" } else { "FAIL" };
                        let digest = out.report.digest.map(|d| d.to_string()).unwrap_or_default();
                        println!("{status} {name} seed={} digest={digest}", out.report.seed);
                        code = code.max(out.exit_code());
                    }
                    Err(e) => {
                        println!("ERROR {name}: {e}");
                        code = EXIT_USAGE;
                    }
                }
            }
            Ok(code)
        }
        Command::ListScenarios => {
            for (name, _) in BUNDLED {
                let s = scenario::bundled(name).expect("bundled scenario parses");
                println!("{name}\t{}", s.description);
            }
            Ok(0)
        }
        Command::DumpChain { chain } => {
            print!("{}", dump_chain(&load_chain_dump(&chain.display().to_string())?));
            Ok(0)
        }
        Command::DumpRegistry { chain } => {
            println!("{}", dump_registry(&load_chain_dump(&chain.display().to_string())?));
            Ok(0)
        }
    }
}
