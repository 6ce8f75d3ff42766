//! `pptpsim` command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 internal invariant
//! violation.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pptpsim::sim::{Sim, SimConfig};
use pptpsim::{parse_scenario, Error};

#[derive(Parser)]
#[command(name = "pptpsim", about = "Priced path probing simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Run a scenario and write metrics.csv and summary.txt.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ticks: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Pretty-print the summary of a finished run directory.
    Report { dir: PathBuf },
}

fn read_file(path: &PathBuf) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn validate(path: PathBuf) -> Result<(), String> {
    let text = read_file(&path)?;
    let scenario = parse_scenario(&text).map_err(|e| e.to_string())?;
    println!(
        "ok: {} nodes, {} links, {} prices, {} contents, {} demands, {} channels, {} faults",
        scenario.nodes.len(),
        scenario.links.len(),
        scenario.prices.len(),
        scenario.contents.len(),
        scenario.demands.len(),
        scenario.channels.len(),
        scenario.faults.len(),
    );
    Ok(())
}

fn run(path: PathBuf, seed: Option<u64>, ticks: Option<u64>, out: PathBuf) -> Result<bool, String> {
    let text = read_file(&path)?;
    let scenario = parse_scenario(&text).map_err(|e| Error::from(e).to_string())?;
    let cfg = SimConfig::resolve(&scenario.run, seed, ticks);
    let mut sim = Sim::build(&scenario, cfg).map_err(|e| Error::from(e).to_string())?;
    let output = sim.run();
    fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    let csv_path = out.join("metrics.csv");
    let summary_path = out.join("summary.txt");
    fs::write(&csv_path, &output.csv).map_err(|e| format!("{}: {e}", csv_path.display()))?;
    fs::write(&summary_path, &output.summary_text)
        .map_err(|e| format!("{}: {e}", summary_path.display()))?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", summary_path.display());
    print!("{}", output.summary_text);
    Ok(output.invariants_ok())
}

fn report(dir: PathBuf) -> Result<(), String> {
    let path = dir.join("summary.txt");
    let text = read_file(&path)?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => validate(scenario).map(|()| true),
        Command::Run {
            scenario,
            seed,
            ticks,
            out,
        } => run(scenario, seed, ticks, out),
        Command::Report { dir } => report(dir).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: run violated an internal invariant (see summary)");
            ExitCode::from(2)
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
